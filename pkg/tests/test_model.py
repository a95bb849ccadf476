from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oscamp import defaults
from oscamp.model import (
    BoundarySource,
    ConfigError,
    RunConfig,
    chi,
    compile_expression,
    euler_model,
    load_config,
    parse_config,
    save_config,
    validate,
)

BASE = """
[system]
family = euler
v = 1
u = 1
c = sqrt(3)
eta = 1
[source]
G.1.re = 0, 0.5*chi(t)
G.1.im = 0, 0
[run]
eps = 0.125
T = 0.8
"""


def test_parse_defaults():
    model, source, run = parse_config(BASE)
    assert model.params["c"] == pytest.approx(np.sqrt(3))
    assert source.modes == [1] and not source.x1_dependent
    assert run.eps == 0.125 and run.ppw == 48


@pytest.mark.parametrize("text, msg", [
    (BASE.replace("[run]", "[runs]"), "unknown section"),
    (BASE.replace("eta = 1", "etta = 1"), "missing key"),
    (BASE + "bogus = 1\n", "unknown key"),
    (BASE.replace("G.1.re = 0, 0.5*chi(t)", "G.0.re = 0, 1"), "zero theta0-mean"),
    (BASE.replace("eps = 0.125", "eps = 2"), "eps"),
])
def test_parse_errors(text, msg):
    with pytest.raises((ConfigError, ValueError), match=msg):
        parse_config(text)


def test_supersonic_rejected():
    with pytest.raises(ValueError, match="subsonic"):
        euler_model(1.0, 2.0, 1.0, 1.0)


def test_expression_grammar_is_closed():
    f = compile_expression("0.5*chi(t)*sin(2*pi*x1)")
    assert f(np.array([1.0]), np.array([0.25]))[0] == pytest.approx(0.5)
    with pytest.raises(ConfigError):
        compile_expression("__import__('os')")


def test_roundtrip(tmp_path):
    model, source, run = defaults.default_model(), defaults.default_source(), RunConfig(eps=0.25)
    path = tmp_path / "p.cfg"
    save_config(path, model, source, run)
    m2, s2, r2 = load_config(path)
    assert m2.same_as(model)
    assert r2.eps == 0.25
    t = np.linspace(0, 1, 7)
    assert np.allclose(s2.mode(1, t, 0 * t), source.mode(1, t, 0 * t))


def test_callable_source_not_serializable(tmp_path):
    src = BoundarySource(2, {1: lambda t, x1: np.zeros(np.shape(t) + (2,))})
    with pytest.raises(ConfigError):
        save_config(tmp_path / "p.cfg", defaults.default_model(), src, RunConfig())


def test_source_conjugate_modes():
    src = BoundarySource(2, {1: (["sin(x1)", "1"], ["0", "chi(t)"])})
    t, x = np.array([0.3, 0.9]), np.array([0.1, 2.0])
    assert np.allclose(src.mode(-1, t, x), np.conj(src.mode(1, t, x)))
    assert np.allclose(src.mode(1, -1.0, 0.0), 0.0)     # zero before t = 0
    val = src.evaluate(t, x, np.array([0.2, 0.4]))
    assert np.isrealobj(val) or np.allclose(np.imag(val), 0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1.0, 2.0))
def test_chi_ramp_range(t):
    v = float(chi(t))
    assert 0.0 <= v <= 1.0
    if t <= 0:
        assert v == 0.0
    if t >= 0.6:
        assert v == 1.0


def test_chi_smoothness():
    # C^3 at both ends: the third difference across each end tends to zero like h
    def d3(t0, h):
        return (chi(t0 + 2 * h) - 3 * chi(t0 + h) + 3 * chi(t0) - chi(t0 - h)) / h**3

    for t0 in (0.0, 0.6):
        a, b = abs(d3(t0, 1e-3)), abs(d3(t0, 5e-4))
        assert b < 0.6 * a


def test_validate_flags_asymmetric_D(euler):
    D = np.zeros((3, 3, 3))
    D[0, 0, 1] = 1.0
    rep = validate(euler.with_nonlinearity(D=D))
    assert not rep.passed and any("symmetric" in r for r in rep.reasons)
    assert validate(euler).passed
