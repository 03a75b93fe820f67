from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate as sint

from carleman_lab.experiments import (
    ExperimentConfig,
    ExperimentError,
    Region,
    bump_family,
    commutator_beta,
    evaluate_rung,
    fit_exponent,
    fit_through_origin,
    parse_region,
    potential_for,
    refit_report,
    region_cutoff,
    region_mask,
    region_weights,
    run_carleman_ratio,
    run_experiment,
    run_holder_scaling,
)
from carleman_lab.grid import build_grid, make_cutoff
from carleman_lab.potentials import Weierstrass


def _cell_disk_area(x0, x1, y0, y1, R):
    # area of [x0,x1]x[y0,y1] inside the disk of radius R at the origin, by adaptive quadrature in x
    def height(x):
        if abs(x) >= R:
            return 0.0
        c = math.sqrt(R * R - x * x)
        return max(0.0, min(y1, c) - max(y0, -c))

    pts = [p for p in (-R, R) if x0 < p < x1]
    return sint.quad(height, x0, x1, points=pts or None, epsabs=1e-14, epsrel=1e-12, limit=200)[0]


def _plane_wave_cfg(**kw):
    base = dict(
        domain_kind="torus",
        domain_length=1.0,
        potential="constant{value=0}",
        domain_n=64,
        mode="local_to_global",
        region="ball{center=0.5:0.5,radius=0.25}",
        source="plane_wave",
        wave=(1, 0),
        h=(0.2, 0.1, 0.05),
    )
    base.update(kw)
    return ExperimentConfig(**base)


def _carleman_cfg(**kw):
    base = dict(
        domain_kind="torus",
        domain_length=5.0,
        potential="constant{value=0}",
        domain_n=128,
        weight="radial_inverse{center=2.5:2.5}",
        mode="carleman",
        h=(0.2, 0.1),
        support="annulus{center=2.5:2.5,inner=0.5,outer=2.0}",
        energy=1.0,
        tests=3,
        family="gaussian",
        seed=0,
        growth=10.0,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_parse_region_roundtrip_and_errors():
    for text in ("ball{center=0.5:0.5,radius=0.25}", "annulus{center=1:2,inner=0.1,outer=0.4}"):
        assert parse_region(parse_region(text).to_text()) == parse_region(text)
    for bad in ("square{}", "ball{center=0.5:0.5}", "ball{center=1,radius=1}", "annulus{center=0:0,inner=2,outer=1}"):
        with pytest.raises(ExperimentError):
            parse_region(bad)


@pytest.mark.parametrize("text", ["ball{center=0.37:0.61,radius=0.23}", "annulus{center=0.5:0.5,inner=0.11,outer=0.3}"])
def test_region_weights_per_cell_oracle(text):
    g = build_grid("torus", 32, 1.0)
    reg = parse_region(text)
    w = region_weights(g, reg)
    assert w.sum() == pytest.approx(reg.area, rel=1e-12)
    X, Y = g.coords
    hx = 0.5 * g.spacing[0]
    rng = np.random.default_rng(0)
    boundary = np.argwhere((w > 0) & (w < g.weights - 1e-15))
    for i, j in boundary[rng.choice(len(boundary), 12, replace=False)]:
        x0, y0 = X[i, j] - reg.center[0], Y[i, j] - reg.center[1]
        expected = _cell_disk_area(x0 - hx, x0 + hx, y0 - hx, y0 + hx, reg.outer)
        if reg.inner:
            expected -= _cell_disk_area(x0 - hx, x0 + hx, y0 - hx, y0 + hx, reg.inner)
        assert w[i, j] == pytest.approx(expected, abs=1e-12)


def test_region_weights_polar_rings():
    g = build_grid("polar", (32, 32), 1.0)
    reg = Region((0.0, 0.0), 0.55, 0.2)
    assert region_weights(g, reg).sum() == pytest.approx(reg.area, rel=1e-12)
    with pytest.raises(ExperimentError, match="centred"):
        region_weights(g, Region((0.1, 0.0), 0.5))


def test_region_must_fit():
    g = build_grid("torus", 32, 1.0)
    with pytest.raises(ExperimentError, match="fit"):
        region_weights(g, parse_region("ball{center=0.5:0.5,radius=0.49}"))


def test_ball_mask_contains_centre():
    g = build_grid("torus", 32, 1.0)
    assert region_mask(g, parse_region("ball{center=0.5:0.5,radius=0.2}"))[16, 16]


def test_region_cutoff_vanishes_near_edge():
    g = build_grid("torus", 128, 1.0)
    reg = parse_region("annulus{center=0.5:0.5,inner=0.1,outer=0.4}")
    chi = region_cutoff(g, reg, 0.05, 0.1)
    r = g.distance_from((0.5, 0.5))
    assert np.all(chi[(r > 0.35) | (r < 0.15)] == 0)
    assert np.all(chi[np.abs(r - 0.25) < 0.01] > 0.99)
    with pytest.raises(ExperimentError):
        region_cutoff(g, reg, 0.02, 0.1)


@pytest.mark.parametrize("family", ["gaussian", "band"])
def test_bump_family_resolution_independent(family):
    reg = parse_region("ball{center=0.5:0.5,radius=0.3}")
    coarse = bump_family(build_grid("torus", 128, 1.0), reg, 4, 9, family)
    fine = bump_family(build_grid("torus", 256, 1.0), reg, 4, 9, family)
    for a, b in zip(coarse, fine):
        np.testing.assert_allclose(b.values[::2, ::2], a.values, rtol=1e-12, atol=1e-300)
        assert np.all(a.values[~region_mask(a.grid, reg)] == 0)


def test_bump_family_errors():
    g = build_grid("torus", 64, 1.0)
    reg = parse_region("ball{center=0.5:0.5,radius=0.3}")
    with pytest.raises(ExperimentError):
        bump_family(g, reg, 2, 0, "wavelet")
    with pytest.raises(ExperimentError):
        bump_family(g, reg, 0, 0)


def test_fit_exponent_recovers_power_law():
    A, p, res = fit_exponent([(h, 3.0 * h**-0.7) for h in (0.4, 0.2, 0.1, 0.05)])
    assert A == pytest.approx(3.0, rel=1e-12) and p == pytest.approx(0.7, rel=1e-12) and res < 1e-12
    with pytest.raises(ExperimentError, match="underdetermined"):
        fit_exponent([(0.1, 1.0), (0.05, 2.0)])
    with pytest.raises(ExperimentError):
        fit_exponent([(0.1, 1.0), (0.05, -2.0), (0.02, 1.0)])


def test_fit_exponent_noise_calibration():
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        hs = (0.2, 0.1, 0.05, 0.025)
        _, p, _ = fit_exponent((h, 2 * h**-1.5 * (1 + 0.05 * rng.standard_normal())) for h in hs)
        hits += abs(p - 1.5) <= 0.1
    assert hits >= 95


def test_fit_through_origin_closed_form():
    x, y = np.array([1.0, 2.0, 4.0]), np.array([1.1, 1.9, 4.2])
    C, q = fit_through_origin(x, y)
    assert C == pytest.approx((1.1 + 3.8 + 16.8) / 21)
    assert q == pytest.approx(np.linalg.norm(y - C * x) / np.linalg.norm(y))
    with pytest.raises(ExperimentError):
        fit_through_origin([0.0, 0.0], [1.0, 2.0])


def test_config_validation_names_fields():
    cases = {
        "domain_kind": dict(domain_kind="sphere"),
        "h:": dict(h=(0.1, 0.2)),
        "kappa": dict(kappa=2.0),
        "mode": dict(mode="spectral"),
        "potential": dict(potential="bogus{}"),
        "region": dict(region="ball{center=0.5:0.5,radius=0.6}"),
    }
    for needle, kw in cases.items():
        with pytest.raises(ExperimentError, match=needle):
            _plane_wave_cfg(**kw)


def test_require_reports_missing_fields():
    cfg = _plane_wave_cfg(source=None)
    with pytest.raises(ExperimentError, match="source"):
        run_experiment(cfg)


def test_plane_wave_ratio_is_area_quotient():
    rep = run_experiment(_plane_wave_cfg())
    target = 1.0 / (math.pi * 0.25**2)
    for r in rep.records:
        assert r.ratio == pytest.approx(target, rel=1e-10)
        assert r.beta == 0 and r.omega == 0
    assert rep.flags["finite"]


def test_manufactured_identity_by_direct_arithmetic():
    from carleman_lab.experiments import _gaussian_source
    from carleman_lab.grid import gradient_values
    from carleman_lab.operators import SchrodingerOp, apply_schrodinger
    from carleman_lab.potentials import sample_potential

    cfg = _plane_wave_cfg(potential="checkerboard{cell=0.25,jump=1}", source="manufactured", energy=0.5, seed=3, wave=None)
    h = 0.1
    rec = evaluate_rung(cfg, h)
    g = cfg.build_grid()
    u = _gaussian_source(g, 3)
    f = apply_schrodinger(SchrodingerOp(g, h, sample_potential(cfg.potential, g), 0.5), g.field(u)).values
    gx, gy = gradient_values(g, u)
    dens = u * u + h * h * (gx * gx + gy * gy)
    total = float(np.sum(g.weights * dens))
    local = float(np.sum(region_weights(g, parse_region(cfg.region)) * dens))
    source = float(np.sum(g.weights * f * f))
    assert rec.ratio == pytest.approx(total / (local + source), rel=1e-12)


def test_holder_replaces_weierstrass_exponent():
    cfg = _plane_wave_cfg(potential="weierstrass{alpha=1.0,levels=4}", mode="holder", alpha=(0.5,))
    assert potential_for(cfg, 0.5) == Weierstrass(0.5, 4)
    assert potential_for(replace(cfg, mode="local_to_global"), 0.5) == Weierstrass(1.0, 4)
    with pytest.raises(ExperimentError, match="underdetermined"):
        run_holder_scaling(replace(cfg, h=(0.2, 0.1)))


def _holder_cfg(**kw):
    return _plane_wave_cfg(
        potential="weierstrass{alpha=1.0,levels=4}",
        mode="holder",
        alpha=(0.5, 1.0),
        source="eigen",
        energy=0.5,
        tol=1e-8,
        seed=1,
        **kw,
    )


def test_holder_records_grouped_per_alpha():
    rep = run_experiment(_holder_cfg())
    assert [r.alpha for r in rep.records] == [0.5] * 3 + [1.0] * 3
    assert [r.h for r in rep.records] == [0.2, 0.1, 0.05] * 2
    assert len(rep.fits) == 2 and set(rep.flags) == {"finite", "ceiling[alpha=0.5]", "ceiling[alpha=1.0]"}
    for fit in rep.fits:
        assert fit["ceiling"] == pytest.approx((4 - fit["alpha"]) / 3)


def test_holder_failed_fit_is_a_failed_flag():
    # a manufactured source can give log ratios <= 0, which no power law fits
    rep = run_experiment(replace(_holder_cfg(), source="manufactured"))
    bad = [f for f in rep.fits if "error" in f]
    assert bad and not rep.passed
    for f in bad:
        assert rep.flags[f"ceiling[alpha={f['alpha']!r}]"] is False


def test_carleman_free_rungs():
    rep = run_carleman_ratio(_carleman_cfg())
    assert [r.status for r in rep.records] == ["ok", "ok"]
    for r in rep.records:
        # constant potential uses omega = theta
        assert r.omega == r.theta == pytest.approx(0.5 * r.h ** (2 / 3))
        assert r.ratio == pytest.approx(r.lhs / r.rhs) and r.log_ratio == pytest.approx(math.log(r.ratio))
    assert rep.flags["bounded"] and rep.passed


def test_carleman_deterministic():
    a = evaluate_rung(_carleman_cfg(), 0.2)
    b = evaluate_rung(_carleman_cfg(), 0.2)
    assert a == b


def test_carleman_rough_potential_needs_kernel_and_skips_unresolved():
    cfg = _carleman_cfg(potential="checkerboard{cell=0.625,jump=1}", h=(0.2, 0.05))
    with pytest.raises(ExperimentError, match="kernel"):
        evaluate_rung(cfg, 0.2)
    rec = evaluate_rung(replace(cfg, kernel="bump"), 0.05)
    assert rec.status == "skipped" and "unresolved" in rec.reason


def test_log_weight_shift_invariance(monkeypatch):
    import carleman_lab.experiments as ex

    cfg = _carleman_cfg(h=(0.2,))
    plain = evaluate_rung(cfg, 0.2)
    original = ex.build_weight

    def shifted(*args, **kw):
        w = original(*args, **kw)
        return w.grid.field(w.values + 517.25)

    monkeypatch.setattr(ex, "build_weight", shifted)
    moved = evaluate_rung(cfg, 0.2)
    assert moved.ratio == pytest.approx(plain.ratio, rel=1e-12)


def test_cutoff_commutator_beta_finite_on_ladder():
    g = build_grid("torus", 128, 1.0)
    chi = make_cutoff(g, 0.1, 0.3, center=(0.5, 0.5))
    u = bump_family(g, parse_region("ball{center=0.5:0.5,radius=0.45}"), 1, 0)[0]
    betas = [commutator_beta(chi, u, h) for h in (0.2, 0.1, 0.05, 0.025)]
    assert all(math.isfinite(b) and b > 0 for b in betas)


def test_refit_report_changes_only_thresholds():
    rep = run_carleman_ratio(_carleman_cfg())
    strict = refit_report(_carleman_cfg(growth=1e-6), rep)
    assert strict.records == rep.records
    assert not strict.flags["bounded"]


def test_commutator_beta():
    g = build_grid("torus", 128, 1.0)
    X, Y = g.coords
    u = g.field(np.cos(2 * math.pi * X) * np.cos(2 * math.pi * Y))
    assert commutator_beta(g.constant(1.0), u, 0.1) < 1e-20
    chi = make_cutoff(g, 0.1, 0.3, center=(0.5, 0.5))
    b = commutator_beta(chi, u, 0.1)
    assert 0 < b < 1e3
