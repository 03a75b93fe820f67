from __future__ import annotations

import json
import math

import numpy as np
import pytest
import sympy as sp

from carleman_lab.grid import build_grid
from carleman_lab.weights import (
    SymbolPoint,
    WeightError,
    bracket_closed_form,
    bracket_fd,
    build_phase,
    build_weight,
    eval_symbol,
    find_certificate,
    glued_exp,
    hormander_scan,
    parse_weight,
    radial_exp,
    radial_inverse,
    subelliptic_constant,
)

_r, _rho, _om = sp.symbols("r rho omega", positive=True)


def _sympy_bracket(phi_expr):
    # independent symbolic oracle for (1/4){Re p, Im p}, {f, g} = f_rho g_r - f_r g_rho
    d1 = sp.diff(phi_expr, _r)
    re = _rho**2 - d1**2 + _om**2 / _r**2
    im = 2 * _rho * d1
    br = sp.diff(re, _rho) * sp.diff(im, _r) - sp.diff(re, _r) * sp.diff(im, _rho)
    return sp.lambdify((_r, _rho, _om), sp.simplify(br / 4), "math")


_ORACLES = {
    "exp2": (radial_exp(2.0), _sympy_bracket(2 * sp.exp(_r))),
    "inverse": (radial_inverse(), _sympy_bracket(1 / _r)),
}


@pytest.mark.parametrize("key", sorted(_ORACLES))
def test_closed_form_matches_symbolic(key):
    spec, oracle = _ORACLES[key]
    rng = np.random.default_rng(11)
    for _ in range(50):
        pt = SymbolPoint(rng.uniform(0.3, 2.5), rng.uniform(-5, 5), rng.uniform(0, 5))
        expected = oracle(pt.r, pt.rho, pt.omega)
        assert bracket_closed_form(spec, pt) == pytest.approx(expected, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("key", sorted(_ORACLES))
def test_fd_matches_closed_form(key):
    spec, _ = _ORACLES[key]
    rng = np.random.default_rng(5)
    for _ in range(30):
        pt = SymbolPoint(rng.uniform(0.5, 2.0), rng.uniform(-5, 5), rng.uniform(0, 5))
        a = bracket_closed_form(spec, pt)
        assert bracket_fd(spec, pt) == pytest.approx(a, rel=1e-6, abs=1e-6)


def test_fd_step_bounds():
    pt = SymbolPoint(1.0, 0.0, 1.0)
    for step in (1e-7, 1e-2):
        with pytest.raises(WeightError):
            bracket_fd(radial_exp(), pt, step=step)


def test_symbol_value():
    p = eval_symbol(radial_inverse(), SymbolPoint(2.0, 1.0, 2.0))
    # phi' = -1/4: (1 - i/4)^2 + 4/4
    assert p == pytest.approx(complex(2 - 1 / 16, -0.5))


def test_characteristic_set_closed_forms():
    inv = hormander_scan(radial_inverse(), (0.5, 2.0), 300)
    np.testing.assert_allclose(inv.values, inv.radii**-7.0, rtol=1e-12)
    assert inv.passed and inv.arg_min == 2.0
    c = 2.0
    ex = hormander_scan(radial_exp(c), (0.5, 2.0), 300)
    r = ex.radii
    np.testing.assert_allclose(ex.values, c**3 * np.exp(3 * r) * (1 + 1 / r), rtol=1e-12)
    assert ex.passed and ex.arg_min == 0.5


def test_delta_rescaling_of_weight():
    g = build_grid("torus", 32, 1.0)
    for delta in (0.5, 0.25):
        a = build_weight(radial_exp(1.5, delta=delta, center=(0.5, 0.5)), g, 0.1)
        b = build_weight(radial_exp(1.5, center=(0.5, 0.5)), g, 0.1 * delta)
        np.testing.assert_allclose(a.values, b.values, rtol=1e-14)


def test_radial_weight_values():
    g = build_grid("torus", 16, 1.0)
    w = build_weight(radial_exp(2.0, center=(0.5, 0.5)), g, 0.2)
    r = g.distance_from((0.5, 0.5))
    np.testing.assert_allclose(w.values, 2 * 2.0 * np.exp(r) / 0.2, rtol=1e-14)


def test_radial_inverse_singular_and_floor():
    g = build_grid("torus", 16, 1.0)
    spec = radial_inverse(center=(0.5, 0.5))
    with pytest.raises(WeightError, match="singular"):
        build_weight(spec, g, 0.1)
    w = build_weight(spec, g, 0.1, r_floor=0.1)
    assert np.max(w.values) == pytest.approx(2 / 0.1 / 0.1)
    phase = build_phase(spec, g, r_floor=0.1)
    np.testing.assert_allclose(w.values, 2 * phase.values / 0.1)


def test_glued_weight_branches():
    g = build_grid("torus", 64, 1.0)
    spec = glued_exp((0.25, 0.5), (0.75, 0.5), c=1.0, inner=0.1, outer=0.2)
    h = 0.1
    w = build_weight(spec, g, h).values
    d1, d2 = g.distance_from((0.25, 0.5)), g.distance_from((0.75, 0.5))
    in1, in2 = d1 < 0.1, d2 < 0.1
    np.testing.assert_allclose(w[in1], 2 * np.exp(d2[in1]) / h, rtol=1e-14)
    np.testing.assert_allclose(w[in2], 2 * np.exp(d1[in2]) / h, rtol=1e-14)
    far = (d1 > 0.2) & (d2 > 0.2)
    expected = np.logaddexp(2 * np.exp(d1[far]) / h, 2 * np.exp(d2[far]) / h)
    np.testing.assert_allclose(w[far], expected, rtol=1e-14)
    assert np.all(np.isfinite(w))


def test_glued_validation():
    with pytest.raises(WeightError, match="overlap"):
        glued_exp((0.25, 0.5), (0.75, 0.5), inner=0.1, outer=0.3)
    with pytest.raises(WeightError):
        glued_exp((0.5, 0.5), (0.5, 0.5))
    with pytest.raises(WeightError):
        glued_exp((0.25, 0.5), (0.75, 0.5)).dphi(1.0)


def test_parse_weight_roundtrip():
    for spec in (
        radial_exp(2.0, center=(0.5, 0.25)),
        radial_inverse(center=(0.0, 0.0)),
        glued_exp((0.25, 0.5), (0.75, 0.5), c=1.5, inner=(0.05, 0.1), outer=(0.15, 0.2)),
    ):
        assert parse_weight(spec.to_text()) == spec
    with pytest.raises(WeightError):
        parse_weight("radial_exp{gamma=1}")
    with pytest.raises(WeightError):
        parse_weight("quadratic{}")


def test_subelliptic_argmin_tiebreak_and_json():
    rep = subelliptic_constant(radial_exp(1.0), 4.0, samples=1331)
    data = json.loads(rep.to_json())
    assert data["pass"] == rep.passed and data["samples"] == 11**3
    again = subelliptic_constant(radial_exp(1.0), 4.0, samples=1331)
    assert again == rep


def test_subelliptic_constant_matches_bruteforce():
    spec = radial_inverse()
    rep = subelliptic_constant(spec, 2.0, samples=9**3)
    axes = [np.linspace(lo, hi, 9) for lo, hi in ((0.5, 2.0), (-5.0, 5.0), (0.0, 5.0))]
    best = math.inf
    for r in axes[0]:
        for rho in axes[1]:
            for om in axes[2]:
                d1, d2 = -1 / r**2, 2 / r**3
                br = rho**2 * d2 + (d1 * d2 + om**2 / r**3) * d1
                p2 = (rho**2 - d1**2 + om**2 / r**2) ** 2 + (2 * rho * d1) ** 2
                best = min(best, (8 * br + 2.0 * p2) / (rho**2 + 1) ** 2)
    assert rep.C == pytest.approx(best, rel=1e-12)


def test_certificate_exists_and_is_stable():
    rep = find_certificate(radial_exp(1.0), samples=20000)
    assert rep.passed
    fine = subelliptic_constant(radial_exp(1.0), rep.d, samples=8 * 20000)
    assert fine.C <= rep.C + 1e-12
    assert abs(fine.C - rep.C) <= 0.05 * abs(rep.C)


def test_subelliptic_rejects_negative_d():
    with pytest.raises(WeightError):
        subelliptic_constant(radial_exp(), -1.0, samples=27)


def test_glued_plateau_is_bit_exact_branch():
    g = build_grid("torus", 64, 1.0)
    x1, x2 = (0.25, 0.5), (0.75, 0.5)
    spec = glued_exp(x1, x2, c=1.3, inner=0.1, outer=0.2)
    w = build_weight(spec, g, 0.07).values
    other2 = build_weight(radial_exp(1.3, center=x2), g, 0.07).values
    other1 = build_weight(radial_exp(1.3, center=x1), g, 0.07).values
    in1, in2 = g.distance_from(x1) < 0.1, g.distance_from(x2) < 0.1
    assert np.array_equal(w[in1], other2[in1]) and np.array_equal(w[in2], other1[in2])


def test_d_zero_sign_by_variant():
    # for c e^r every bracket term is positive, so C stays positive at d = 0;
    # for 1/r the rho^2 phi'' term cannot offset the negative phi' part off the characteristic set
    assert subelliptic_constant(radial_exp(1.0), 0.0, samples=9261).C > 0
    assert subelliptic_constant(radial_inverse(), 0.0, samples=9261).C < 0
