from __future__ import annotations

from fractions import Fraction
from math import gcd

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oscamp import defaults
from oscamp.model import euler_model
from oscamp.spectral import (
    SpectralError,
    euler_resonance,
    find_resonances,
    lopatinskii_scan,
    mode_package,
)

SQ3 = np.sqrt(3.0)

# closed-form data at (v, u, c, eta) = (1, 1, sqrt3, 1)
OMEGA = [SQ3, 0.0, -SQ3]
VEL = [(-SQ3 / 2, -0.5), (-SQ3, 1.0), (0.0, 1.0)]
R = [(2.0, SQ3, 3.0), (1.0, SQ3, 0.0), (0.0, SQ3, 1.0)]
L = [0.25 * np.array([1, -1 / SQ3, 1]), 0.5 * np.array([1, 1 / SQ3, -1]), 0.75 * np.array([-1, 1 / SQ3, 1 / 3])]


def _parallel(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.linalg.norm(np.cross(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b))


def test_frequencies_and_velocities(ms):
    assert np.allclose(ms.omega, OMEGA, atol=1e-12)
    assert np.allclose(ms.velocity, VEL, atol=1e-12)
    assert ms.direction == ("outgoing", "incoming", "incoming")


def test_vectors_match_closed_form(ms):
    scales = [np.dot(R[m], ms.vec(m)) / np.dot(ms.vec(m), ms.vec(m)) for m in range(3)]
    msr = ms.rescaled(scales)
    for m in range(3):
        assert np.allclose(msr.vec(m), R[m], atol=1e-12)
        assert np.allclose(msr.lvec(m), L[m], atol=1e-12)
    # incoming vectors already carry the closed-form scale
    assert np.allclose(scales[1:], 1.0, atol=1e-12)


def test_boundary_kernel(ms, euler):
    assert _parallel(ms.e, [1, 0, -1]) < 1e-12
    assert _parallel(np.append(ms.b, 0), [1, -SQ3, 0]) < 1e-12
    for m in ms.incoming:
        assert np.allclose(euler.B @ ms.vec(m), [SQ3, 1.0], atol=1e-12)
        assert abs(ms.b @ euler.B @ ms.vec(m)) < 1e-12
    assert np.allclose(euler.B @ ms.e, 0.0, atol=1e-12)


def test_lopatinskii_field_direction(ms):
    # transport along dt - c dx1 with c = sqrt3
    assert np.allclose(ms.xlop, [1.0, -SQ3], atol=1e-12)


def test_resonance_triple_at_mach_inv_sqrt3(ms):
    tri = find_resonances(ms, 50)
    assert [t.n for t in tri] == [(1, 2, -1)]
    assert (tri[0].m, tri[0].p, tri[0].r) == (0, 1, 2)


def test_no_resonance_low_order():
    c = 1.0
    model = euler_model(1.0, 0.55 * c, c, 1.0)
    assert find_resonances(mode_package(model), 50) == []
    # exact arithmetic places the first triple far outside the window
    p, q, n = euler_resonance(Fraction(11, 20), Fraction(1))
    assert (p, q) == (242, 279) and max(abs(x) for x in n) > 50


def test_control_model_is_uniformly_stable(euler):
    assert lopatinskii_scan(defaults.control_model(euler), n_angles=181) > 0.5
    assert lopatinskii_scan(euler, n_angles=181) < 1e-3


def test_control_model_rejected_as_wr(euler):
    with pytest.raises(SpectralError):
        mode_package(defaults.control_model(euler))


subsonic = st.tuples(st.floats(0.3, 3.0), st.floats(0.05, 0.9), st.floats(0.5, 3.0), st.floats(0.3, 3.0))


@settings(max_examples=40, deadline=None)
@given(subsonic)
def test_projector_algebra(params):
    v, mach, c, eta = params
    ms = mode_package(euler_model(v, mach * c, c, eta))
    I = np.eye(ms.N)
    assert np.allclose(sum(ms.P), I, atol=1e-9)
    for m in range(ms.M):
        for n in range(ms.M):
            want = ms.P[m] if m == n else 0 * I
            assert np.allclose(ms.P[m] @ ms.P[n], want, atol=1e-9)
        # R_m inverts L(d phi_m) off the m-th eigenspace
        assert np.allclose(ms.L_phase(m) @ ms.R[m], I - ms.P[m], atol=1e-9)
        assert np.allclose(ms.R[m] @ ms.P[m], 0, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(subsonic)
def test_biorthogonality_and_wr_kernel(params):
    v, mach, c, eta = params
    model = euler_model(v, mach * c, c, eta)
    ms = mode_package(model)
    G = np.vstack(ms.l) @ np.hstack(ms.r)
    assert np.allclose(G, np.eye(3), atol=1e-9)
    assert np.linalg.norm(model.B @ ms.e) < 1e-9 * np.linalg.norm(model.B)
    assert abs(ms.b @ model.B @ ms.stable_basis).max() < 1e-9 * np.linalg.norm(model.B)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12))
def test_resonance_detection_matches_closed_form(p, q):
    # 2 M^2 / (1 - M^2) = p / q  <=>  M^2 = p / (p + 2 q)
    mach = np.sqrt(p / (p + 2 * q))
    ms = mode_package(euler_model(1.0, mach, 1.0, 1.0))
    g = gcd(p, q)
    p, q = p // g, q // g
    n = (q, p + q, -p)
    tri = find_resonances(ms, 30)
    if max(abs(x) for x in n) <= 30:
        assert [t.n for t in tri] == [n]
    else:
        assert tri == []
