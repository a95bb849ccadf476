from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oscamp import defaults
from oscamp.amplitude import solve_key_subsystem
from oscamp.corrector import TwoScalePoly, build_corrected_approx, solve_fast_system
from oscamp.profiles import ProfileError, TrigSeries, project_E


@pytest.fixture(scope="module")
def sol():
    return solve_key_subsystem(defaults.default_model(), defaults.default_source(), T=0.8, dt=0.0025)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fast_system_residual(ms, seed):
    rng = np.random.default_rng(seed)
    F = TrigSeries.random(ms, 4, 8, rng)
    F = F - project_E(F, ms)
    assert solve_fast_system(F, ms).residual < 1e-10


def test_fast_system_requires_EF_zero(ms, rng):
    F = TrigSeries.random(ms, 4, 8, rng, single_phase=True)
    with pytest.raises(ProfileError):
        solve_fast_system(F, ms)


def test_two_scale_poly_evaluate():
    p = TwoScalePoly(2)
    p.add((1, 0.5), [1.0, 2.0])
    p.add((1, 0.5), [1.0, 0.0])
    v = p.evaluate(np.array([0.3]), np.array([0.2]))
    assert np.allclose(v[0], np.exp(1j * 0.4) * np.array([2.0, 2.0]))
    assert p.max_abs() == 2.0


def _boundary_residual(ap, model, source, eps, approx):
    t = 0.8
    tau, eta = model.beta
    x1 = np.linspace(0, 2 * np.pi * eps / eta, 64, endpoint=False)
    X1, X2 = x1[:, None], np.zeros((64, 1))
    u = approx(t, X1, X2)[..., 0]
    Bu = model.B @ u + eps * np.einsum("ijk,jn,kn->in", model.Psi, u, u)
    G = source.evaluate(t, x1, (tau * t + eta * x1) / eps).T
    return float(np.max(np.abs(Bu - eps * G)))


def test_boundary_residual_orders(sol):
    model, src = defaults.default_model(), defaults.default_source()
    lead, corr = [], []
    for eps in (1 / 8, 1 / 16, 1 / 32):
        ap = build_corrected_approx(sol, eps)
        lead.append(_boundary_residual(ap, model, src, eps, ap.leading))
        corr.append(_boundary_residual(ap, model, src, eps, ap.corrected))
    lead, corr = np.array(lead), np.array(corr)
    assert np.all(np.abs(lead[1:] / lead[:-1] - 0.5) < 0.05)      # O(eps)
    assert np.all(corr[1:] / corr[:-1] < 0.3)                    # O(eps^2)


def test_leading_profile_in_boundary_kernel(sol):
    model = defaults.default_model()
    ap = build_corrected_approx(sol, 1 / 8)
    X1 = np.linspace(0, 1, 9)[:, None]
    u0 = ap.leading(0.7, X1, 0 * X1)[..., 0]
    assert np.max(np.abs(model.B @ u0)) < 1e-12 * max(1.0, np.max(np.abs(u0)))


def test_approximation_vanishes_before_data(sol):
    ap = build_corrected_approx(sol, 1 / 8)
    X1, X2 = np.meshgrid(np.linspace(0, 1, 5), np.linspace(0, 1, 5), indexing="ij")
    assert np.max(np.abs(ap.leading(0.0, X1, X2))) == 0.0
    # finite differences of the ramped history leave a discretization-level trace at t = 0
    assert np.max(np.abs(ap.corrected(0.0, X1, X2))) < 1e-7


def test_trace_shared_between_eps(sol):
    a = build_corrected_approx(sol, 1 / 4)
    b = build_corrected_approx(sol, 1 / 16)
    assert a._trace is b._trace
    assert a.parts["fast_residual"] < 1e-10
    assert any("a1" in m for m in a.manifest)
