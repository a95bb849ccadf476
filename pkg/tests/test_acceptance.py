"""Acceptance criteria, each at its stated tolerance and runtime budget."""
from __future__ import annotations

import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import record
from oscamp import defaults
from oscamp.harness import (
    ExperimentPlan,
    run_amplification_study,
    run_amplitude_oracles,
    run_convergence_study,
    run_identity_suite,
    run_nash_moser_study,
    run_oracle_study,
)
from oscamp.model import euler_model
from oscamp.spectral import euler_resonance, find_resonances, mode_package

SQ3 = np.sqrt(3.0)
TOL = defaults.TOL


def test_criterion_1_euler_spectral_package():
    t0 = time.perf_counter()
    model = euler_model(*defaults.EULER_POINT)
    ms = mode_package(model)
    R = [np.array([2.0, SQ3, 3.0]), np.array([1.0, SQ3, 0.0]), np.array([0.0, SQ3, 1.0])]
    L = [0.25 * np.array([1, -1 / SQ3, 1]), 0.5 * np.array([1, 1 / SQ3, -1]),
         0.75 * np.array([-1, 1 / SQ3, 1 / 3])]
    msr = ms.rescaled([R[m] @ ms.vec(m) / (ms.vec(m) @ ms.vec(m)) for m in range(3)])
    e_dir = np.array([1.0, 0.0, -1.0]) / np.sqrt(2)
    b_dir = np.array([1.0, -SQ3]) / 2
    defects = {
        "omega": np.abs(ms.omega - [SQ3, 0.0, -SQ3]).max(),
        "velocity": np.abs(ms.velocity - [[-SQ3 / 2, -0.5], [-SQ3, 1.0], [0.0, 1.0]]).max(),
        "r": max(np.abs(msr.vec(m) - R[m]).max() for m in range(3)),
        "l": max(np.abs(msr.lvec(m) - L[m]).max() for m in range(3)),
        "gram": np.abs(np.array(L) @ np.array(R).T - np.eye(3)).max(),
        "Be": np.abs(model.B @ ms.e).max(),
        "e_direction": np.abs(np.cross(ms.e / np.linalg.norm(ms.e), e_dir)).max(),
        "b_direction": abs(ms.b[0] * b_dir[1] - ms.b[1] * b_dir[0]),
        "Br": max(np.abs(model.B @ R[m] - [SQ3, 1.0]).max() for m in (1, 2)),
        "bBr": max(abs(b_dir @ model.B @ R[m]) for m in (1, 2)),
    }
    dt = time.perf_counter() - t0
    worst = max(defects.values())
    ok = worst < TOL["spectral"] and ms.direction == ("outgoing", "incoming", "incoming") and dt < 1.0
    record(1, "Euler spectral package", ok, f"max defect {worst:.2e}", dt)
    assert ok, defects


def test_criterion_2_resonance_detection():
    t0 = time.perf_counter()
    ms = mode_package(euler_model(1.0, 1.0, SQ3, 1.0))
    tri = [t.n for t in find_resonances(ms, 50)]
    ms2 = mode_package(euler_model(1.0, 0.55, 1.0, 1.0))          # M^2 = 0.3025
    tri2 = find_resonances(ms2, 50)
    exact = euler_resonance(Fraction(11, 20), Fraction(1))
    dt = time.perf_counter() - t0
    ok = tri == [(1, 2, -1)] and tri2 == [] and max(map(abs, exact[2])) > 50 and dt < 1.0
    record(2, "resonance detection", ok, f"M=1/sqrt3 -> {tri}; M^2=0.3025 -> {len(tri2)} triples", dt)
    assert ok


def test_criterion_3_operator_identities():
    st = run_identity_suite(seed=0, n_series=50)
    rows = {r["identity"]: r["max_defect"] for r in st.rows}
    worst = max(rows["E_cL_R_identities"], rows["interaction_quadrature"])
    ok = worst < TOL["identities"] and st.seconds < 10.0
    record(3, "operator identities on 50 random series", ok, f"max defect {worst:.2e}", st.seconds)
    assert ok, rows


def test_criterion_4_corrector_gate():
    from oscamp.corrector import solve_fast_system
    from oscamp.profiles import TrigSeries, project_E
    t0 = time.perf_counter()
    ms = mode_package(euler_model(*defaults.EULER_POINT))
    rng = np.random.default_rng(0)
    res = []
    for _ in range(50):
        F = TrigSeries.random(ms, 6, 10, rng)
        F = F - project_E(F, ms)
        res.append(solve_fast_system(F, ms).residual)
    dt = time.perf_counter() - t0
    ok = max(res) < TOL["fast_residual"] and dt < 10.0
    record(4, "fast-system forward residual", ok, f"max residual {max(res):.2e}", dt)
    assert ok


def test_criterion_5_amplitude_oracles():
    st = run_amplitude_oracles()
    v = {r["check"]: r["value"] for r in st.rows}
    ok = st.passed and st.seconds < 60.0
    detail = (f"transport order {v['transport_order']:.2f}, memory rel L2 {v['memory_rel_l2_default']:.1e} -> "
              f"{v['memory_rel_l2_refined']:.1e}, mean {v['max_theta0_mean']:.1e}")
    record(5, "amplitude solver oracles", ok, detail, st.seconds)
    assert ok, st.verdicts


def test_criterion_6_amplification_scaling():
    plan = ExperimentPlan("amplification", T=1.6, threads=3)
    st = run_amplification_study(plan)
    wr = [r["sup_v_over_eps"] for r in st.rows if r["model"] == "wr"]
    ctl = [r["sup_v_over_eps2"] for r in st.rows if r["model"] == "control"]
    ok = st.passed and st.seconds < 15 * 60
    detail = f"WR sup/eps {np.round(wr, 3).tolist()}, control sup/eps^2 {np.round(ctl, 3).tolist()}"
    record(6, "amplification scaling", ok, detail, st.seconds)
    assert ok, st.verdicts


def test_criterion_7_convergence():
    st = run_convergence_study(ExperimentPlan("convergence", threads=3))
    el = [r["err_leading"] for r in st.rows]
    ec = [r["err_corrected"] for r in st.rows]
    ok = st.passed and st.seconds < 15 * 60
    detail = f"leading {np.round(el, 4).tolist()}, corrected {np.round(ec, 4).tolist()}"
    record(7, "convergence to the approximation", ok, detail, st.seconds)
    assert ok, st.verdicts


def test_criterion_8_direct_solver_oracle():
    st = run_oracle_study()
    ok = st.passed and st.seconds < 5 * 60
    detail = f"rel sup error {st.rows[0]['rel_sup_error']:.2e}, order {st.rows[1]['order']:.2f}"
    record(8, "direct solver vs exact linear solution", ok, detail, st.seconds)
    assert ok, st.verdicts


def test_criterion_9_nash_moser():
    st = run_nash_moser_study()
    tr = st.extra["trace"]
    ok = st.passed and st.seconds < 5 * 60
    detail = (f"{len(tr.residual)} steps, residual {tr.residual[-1]:.1e}, match {st.extra['match']:.1e}, "
              f"bookkeeping {max(tr.bookkeeping):.1e}, smoothing constants <= "
              f"{max(st.extra['smoothing'].values()):.2f}")
    record(9, "Nash-Moser iteration", ok, detail, st.seconds)
    assert ok, st.verdicts
