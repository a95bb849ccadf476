from __future__ import annotations

import numpy as np
import pytest

from oscamp import defaults
from oscamp.model import RunConfig
from oscamp.solver import SolverError, compare_to_approx, linear_oracle, singular_norms, solve_direct


@pytest.fixture(scope="module")
def linear_run():
    model = defaults.default_model(nonlinear=False)
    src = defaults.default_source(2.0)
    run = RunConfig(eps=0.25, T=0.8, ppw=24)
    return model, src, solve_direct(model, 0.25, src, run, snap_times=[0.4, 0.8])


def test_oracle_agreement_coarse(linear_run):
    model, src, tr = linear_run
    for snap in tr.snapshots:
        X1, X2 = snap.grid.mesh()
        ex = linear_oracle(model, 0.25, src, snap.t, X1, X2)
        assert np.max(np.abs(snap.v - ex)) < 0.05 * np.max(np.abs(ex))


def test_boundary_condition_linear(linear_run):
    model, src, tr = linear_run
    snap = tr.snapshots[-1]
    tau, eta = model.beta
    x1 = snap.grid.x1
    G = src.evaluate(snap.t, x1, (tau * snap.t + eta * x1) / 0.25)
    resid = model.B @ snap.v[:, :, 0] - 0.25**2 * G.T
    assert np.max(np.abs(resid)) < 1e-10


def test_compare_to_approx_checks_eps(linear_run):
    model, src, tr = linear_run
    rep = compare_to_approx(tr, lambda t, X1, X2: np.zeros((3,) + X1.shape), 0.25)
    assert rep.sup == pytest.approx(np.max(np.abs(tr.snapshots[-1].v)) / 0.25)
    with pytest.raises(SolverError):
        compare_to_approx(tr, lambda t, X1, X2: 0, 0.125)


def test_resolution_guard():
    with pytest.raises(SolverError):
        solve_direct(defaults.default_model(), 0.25, defaults.default_source(), RunConfig(eps=0.25, ppw=8))


def test_x1_dependent_oracle_rejected():
    from oscamp.model import BoundarySource
    src = BoundarySource(2, {1: (["0", "sin(x1)"], ["0", "0"])})
    with pytest.raises(SolverError):
        linear_oracle(defaults.default_model(False), 0.25, src, 0.5, np.zeros(2), np.zeros(2))


def test_singular_norm_of_plane_wave():
    eps, beta, L1 = 0.25, (1.0, 1.0), 2 * np.pi
    n1, nth = 16, 16
    x1 = np.arange(n1) * L1 / n1
    th = 2 * np.pi * np.arange(nth) / nth
    U = np.cos(th)[None, :] * np.ones((n1, 1))
    # |d_x1 + d_theta / eps| on mode +-1 is 1/eps; L2 mass L1 / 2
    want = np.sqrt((1 + 1 / eps**2) * L1 / 2)
    assert singular_norms(U, eps, beta, L1, m=1) == pytest.approx(want, rel=1e-12)
