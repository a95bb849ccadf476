from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oscamp import defaults
from oscamp.amplitude import (
    History,
    compute_constants,
    euler_closed_form_constants,
    memory_term_exact,
    solve_key_subsystem,
)
from oscamp.model import BoundarySource, chi


def test_constants_relative_to_closed_form(demo_ms, demo):
    c = compute_constants(demo_ms)
    p = euler_closed_form_constants(demo)
    # the self-consistent normalizer is half the closed-form one at this point
    assert c.f2 == pytest.approx(2 * p["alpha1"], rel=1e-12)
    assert c.mu[0] == pytest.approx(2 * p["alpha2"], rel=1e-12)
    assert np.allclose(c.w, [-np.sqrt(3)], atol=1e-12)
    assert np.allclose(c.eps, [0, 1, -1], atol=1e-12)


def test_linear_constants_vanish(ms):
    c = compute_constants(ms)
    assert c.f2 == 0 and np.allclose(c.mu, 0)


def test_memory_needs_partner_mode(demo_ms):
    # a_k = delta_{|k|,1} H(t): the k = 1 memory needs a_2 and a_{-1}; a_2 = 0 gives zero
    c = compute_constants(demo_ms)
    H = History(0.01, 8, 1, 2 * np.pi)
    for n in range(51):
        a = np.zeros((9, 1), complex)
        a[1] = chi(n * 0.01)
        H.append(a)
    J = memory_term_exact(H, c, 0.5)
    assert np.max(np.abs(J)) == 0.0


def test_linear_transport_closed_form(euler):
    # no x1 dependence: a_k(t) = int_0^t g_k(s) ds
    src = defaults.default_source()
    sol = solve_key_subsystem(euler, src, T=1.0, dt=0.01)
    c = sol.consts
    s = np.linspace(0, 1.0, 4001)
    g = c.forcing(src.mode(1, s, 0 * s), 1)
    exact = np.trapezoid(g, s) if hasattr(np, "trapezoid") else np.trapz(g, s)
    assert abs(sol.hist.levels[-1][1, 0] - exact) < 1e-6 * abs(exact)
    assert np.max(np.abs(np.array(sol.hist.levels)[:, 2:])) == 0.0


@settings(max_examples=8, deadline=None)
@given(st.floats(0.2, 1.2), st.floats(0.0, 1.0))
def test_theta_mean_stays_zero(amp, phase):
    g = amp * np.array([0.0, np.exp(1j * phase)])
    sol = solve_key_subsystem(defaults.default_model(), BoundarySource.single_mode(g), T=0.5, dt=0.01)
    assert sol.diagnostics["max_mean"] < 1e-12


def test_equation_residual_small(demo):
    sol = solve_key_subsystem(demo, defaults.default_source(), T=0.8, dt=0.0025)
    assert sol.residual() < 1e-3


def test_exact_and_grid_memory_agree(demo):
    src = defaults.default_source(0.6)
    se = solve_key_subsystem(demo, src, T=1.0, dt=0.005, mode="exact")
    sg = solve_key_subsystem(demo, src, T=1.0, dt=0.005, mode="grid")
    rel = np.linalg.norm(sg.J[0][..., 0] - se.J_exact(1.0)) / np.linalg.norm(se.J_exact(1.0))
    assert rel < 1e-2
    amp_e, amp_g = np.array(se.hist.levels), np.array(sg.hist.levels)
    assert np.max(np.abs(amp_e - amp_g)) < 1e-3 * np.max(np.abs(amp_e))


def test_x1_dependent_source_translates():
    # a pure x1 translate of the data translates the solution along w
    lin = defaults.default_model(nonlinear=False)
    base = BoundarySource(2, {1: (["0", "chi(t)*(1 + 0.5*sin(x1))"], ["0", "0"])})
    shift = BoundarySource(2, {1: (["0", "chi(t)*(1 + 0.5*sin(x1 - pi/2))"], ["0", "0"])})
    a = solve_key_subsystem(lin, base, T=0.6, dt=0.01).hist.levels[-1]
    b = solve_key_subsystem(lin, shift, T=0.6, dt=0.01).hist.levels[-1]
    assert np.allclose(np.roll(a, 4, axis=-1), b, atol=1e-12)     # pi/2 = 4 cells of 16


def test_d0_not_supported(demo):
    with pytest.raises(NotImplementedError):
        solve_key_subsystem(demo.with_nonlinearity(D0=np.eye(3)), defaults.default_source(), T=0.1)
