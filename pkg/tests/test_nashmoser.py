from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oscamp import defaults
from oscamp.amplitude import solve_key_subsystem
from oscamp.nashmoser import (
    DiscreteSubsystem,
    SmoothingFamily,
    cutoff,
    cutoff_derivative,
    nash_moser_solve,
    picard_solve,
    smoothing_constants,
)


@pytest.fixture(scope="module")
def marched():
    sol = solve_key_subsystem(defaults.default_model(), defaults.default_source(), T=0.3, dt=0.01)
    return sol, DiscreteSubsystem(sol.sys, 30)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 3.0))
def test_cutoff_range(r):
    v = float(cutoff(np.array([r]))[0])
    assert 0.0 <= v <= 1.0
    if r <= 1:
        assert v == 1.0
    if r >= 2:
        assert v == 0.0


def test_cutoff_derivative_matches_fd():
    r = np.linspace(1.05, 1.95, 19)
    h = 1e-6
    fd = (cutoff(r + h) - cutoff(r - h)) / (2 * h)
    assert np.allclose(cutoff_derivative(r), fd, atol=1e-7)


@settings(max_examples=20, deadline=None)
@given(st.floats(1.0, 40.0), st.floats(1.0, 3.0))
def test_smoothing_monotone_and_low_pass(theta, ratio):
    fam = SmoothingFamily.torus(32, 32)
    rng = np.random.default_rng(0)
    u = np.fft.fft2(rng.standard_normal((32, 32))) / 32**2
    lo, hi = fam.apply(u, theta), fam.apply(u, theta * ratio)
    # S_theta u keeps modes |xi| <= theta and kills |xi| >= 2 theta
    keep = fam.modulus <= theta
    kill = fam.modulus >= 2 * theta
    assert np.allclose(lo[keep], u[keep]) and np.all(lo[kill] == 0)
    assert fam.norm(lo, 1.0) <= fam.norm(hi, 1.0) + 1e-15


def test_smoothing_rejects_small_theta():
    with pytest.raises(ValueError):
        SmoothingFamily.torus(8, 8).multiplier(0.5)


def test_smoothing_constants_bounded():
    C = smoothing_constants(n=64, n_samples=2)
    for key in ("a", "b", "c"):
        assert np.all(np.isfinite(C[key])) and C[key].max() < 10.0


def test_marched_history_solves_F(marched):
    sol, sub = marched
    X = np.array(sol.hist.levels)
    assert sub.norm(sub.F(X) - sub.g) < 1e-13 * sub.norm(sub.g)
    assert sub.norm(sub.F(np.zeros(sub.shape, complex))) == 0.0


def test_linearization_second_order(marched):
    sol, sub = marched
    rng = np.random.default_rng(3)
    Y = np.array(sol.hist.levels)
    D = 0.1 * (rng.standard_normal(sub.shape) + 1j * rng.standard_normal(sub.shape))
    D[:, 0] = 0
    lin = sub.apply_linear(Y, D)
    err = []
    for h in (1e-2, 5e-3):
        err.append(sub.norm(sub.F(Y + h * D) - sub.F(Y) - h * lin))
    assert err[1] / err[0] == pytest.approx(0.25, abs=0.03)


def test_linear_solve_inverts(marched):
    sol, sub = marched
    rng = np.random.default_rng(4)
    Y = np.array(sol.hist.levels)
    f = rng.standard_normal(sub.shape) + 1j * rng.standard_normal(sub.shape)
    f[:, 0] = 0
    Xd = sub.solve_linear(Y, f)
    assert sub.norm(sub.apply_linear(Y, Xd) - f) < 1e-12 * sub.norm(f)


def test_iteration_converges_and_bookkeeping(marched):
    sol, sub = marched
    V, tr = nash_moser_solve(sub, theta0=2.0, tol=1e-8)
    assert tr.converged
    assert np.all(np.diff(tr.residual) < 0)
    assert max(tr.bookkeeping) < 1e-12
    assert np.max(np.abs(V - np.array(sol.hist.levels))) < 1e-6
    assert all(th ** 2 == pytest.approx(4 + n) for n, th in enumerate(tr.theta))
    assert len(tr.rows()) == len(tr.theta)


def test_picard_exhibit_runs(marched):
    _, sub = marched
    out = picard_solve(sub, n_max=5)
    assert out["residual"].shape == (5,) and np.all(np.isfinite(out["residual"]))
