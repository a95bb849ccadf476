from __future__ import annotations

import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oscamp import defaults
from oscamp.harness import (
    ExperimentPlan,
    amplification_verdicts,
    convergence_verdicts,
    fitted_slope,
    halving_ratios,
    observed_order,
    rel_l2,
    run_identity_suite,
    write_csv,
)

EPS = np.array(defaults.EPS_LIST)


def test_plan_validation():
    with pytest.raises(ValueError, match="decreasing"):
        ExperimentPlan("x", eps_list=(1 / 8, 1 / 4))
    with pytest.raises(ValueError, match="refining"):
        ExperimentPlan("x", ladder=(48, 24))
    p = ExperimentPlan("x", tol={"conv_ratio": 0.5})
    assert p.tol["conv_ratio"] == 0.5 and p.tol["oracle_order"] == defaults.TOL["oracle_order"]


def test_map_eps_order_independent_of_threads():
    f = lambda e: e**2
    a = ExperimentPlan("x", threads=1).map_eps(f)
    b = ExperimentPlan("x", threads=3).map_eps(f)
    assert a == b == [e**2 for e in defaults.EPS_LIST]


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 3.5), st.floats(1e-3, 10.0))
def test_slope_and_order_of_power_law(p, C):
    h = np.array([0.4, 0.2, 0.1, 0.05])
    assert fitted_slope(h, C * h**p) == pytest.approx(p, rel=1e-9)
    assert observed_order(C * 0.2**p, C * 0.1**p) == pytest.approx(p, rel=1e-9)
    assert np.allclose(halving_ratios(C * h**p), 0.5**p)


def test_rel_l2():
    assert rel_l2([1.0, 1.0], [1.0, 1.0]) == 0.0
    assert rel_l2([2.0, 0.0], [1.0, 0.0]) == 1.0


def test_amplification_verdicts_synthetic():
    wr, ctl = 3.0 * EPS, 1.8 * EPS**2
    v = amplification_verdicts(EPS, wr, ctl, defaults.TOL)
    assert all(v.values())
    # swapping the roles fails every band
    v = amplification_verdicts(EPS, ctl, wr, defaults.TOL)
    assert not any(v.values())


def test_convergence_verdicts_synthetic():
    ok = convergence_verdicts([1.0, 0.7, 0.5], [0.6, 0.2, 0.08], defaults.TOL)
    assert all(ok.values())
    bad = convergence_verdicts([1.0, 0.7, 0.5], [0.6, 0.5, 0.45], defaults.TOL)
    assert not bad["corrected_halving_ratio"]
    worse = convergence_verdicts([0.5, 0.2, 0.1], [0.6, 0.2, 0.08], defaults.TOL)
    assert not worse["corrected_not_above_leading"]


def test_csv_header_has_units(tmp_path):
    path = write_csv(tmp_path / "a.csv", [{"eps": 0.25, "err": 1e-3}], {"eps": "1", "err": "state/eps"})
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["eps [1]", "err [state/eps]"]
    assert float(rows[1][1]) == 1e-3


def test_identity_suite_detects_corruption():
    good = run_identity_suite(n_series=5)
    assert good.passed
    bad = run_identity_suite(n_series=5, corrupt=True)
    assert not bad.verdicts["projectors"]
