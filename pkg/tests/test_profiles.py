from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oscamp.profiles import (
    ProfileError,
    TrigSeries,
    apply_cL,
    classify_mode,
    interaction_integral,
    partial_inverse_R,
    prepare,
    primitive_mean_zero,
    project_E,
)
from oscamp.spectral import find_resonances

seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_E_is_projection(ms, seed):
    rng = np.random.default_rng(seed)
    s = TrigSeries.random(ms, 6, 8, rng)
    E = project_E(s, ms)
    assert project_E(E, ms).max_diff(E) < 1e-11
    assert project_E(apply_cL(s, ms), ms).max_abs() < 1e-11 * max(1.0, s.max_abs())


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_R_inverts_cL_off_E(ms, seed):
    rng = np.random.default_rng(seed)
    F = TrigSeries.random(ms, 6, 6, rng, single_phase=True)
    IE = F - project_E(F, ms)
    assert apply_cL(partial_inverse_R(F, ms), ms).max_diff(IE) < 1e-11
    assert partial_inverse_R(apply_cL(F, ms), ms).max_diff(IE) < 1e-11


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_reality_preserved(ms, seed):
    rng = np.random.default_rng(seed)
    s = TrigSeries.random(ms, 5, 6, rng)
    assert s.reality_defect() < 1e-14
    assert project_E(s, ms).reality_defect() < 1e-12
    assert apply_cL(s, ms).reality_defect() < 1e-12


def test_resonant_index_is_characteristic(ms):
    tri = find_resonances(ms, 12)[0]
    lab = classify_mode(ms, tri.alpha(ms.M))
    assert lab.kind == "characteristic" and lab.m == tri.m


def test_small_divisor_guard(ms):
    s = TrigSeries(ms.M, ms.N)
    s[(0, 1, 1)] = np.ones(ms.N)
    report = {}
    partial_inverse_R(s, ms, report=report)
    assert report["min_det"] > 0
    with pytest.raises(ProfileError):
        partial_inverse_R(s, ms, det_floor=1e6)


def test_interaction_integral_resonant_product(ms):
    tri = find_resonances(ms, 12)[0]
    K = 6
    sp = np.zeros(2 * K + 1, complex)
    sr = np.zeros(2 * K + 1, complex)
    sp[K + 2], sp[K - 2] = 1.0, 1.0           # cos(2 theta)
    sr[K - 1], sr[K + 1] = 1.0, 1.0           # cos(theta)
    out = interaction_integral(sp, sr, tri)
    expect = np.zeros(2 * K + 1)
    expect[K + 1] = expect[K - 1] = 1.0        # cos(theta_q) from k n_p = 2, k n_r = -1
    assert np.allclose(out, expect)


def test_prepare_and_primitive():
    c = np.arange(1, 12, dtype=complex)        # K = 5
    p = prepare(c, 2)
    k = np.arange(-5, 6)
    assert np.all(p[k % 2 != 0] == 0) and np.all(p[k % 2 == 0] == c[k % 2 == 0])
    with pytest.raises(ProfileError):
        prepare(c, 0)
    c0 = c.copy()
    c0[5] = 0
    prim = primitive_mean_zero(c0)
    nz = k != 0
    assert np.allclose(1j * k[nz] * prim[nz], c0[nz])
    with pytest.raises(ProfileError):
        primitive_mean_zero(c)
