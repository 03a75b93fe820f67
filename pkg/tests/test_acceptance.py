"""Acceptance criteria 1-10; each test prints one ``ACCEPTANCE <n> PASS|FAIL`` line."""

from __future__ import annotations

import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from carleman_lab.cli import main
from carleman_lab.config import parse_config
from carleman_lab.experiments import bump_family, parse_region, refinement_change, run_experiment
from carleman_lab.grid import build_grid
from carleman_lab.operators import SchrodingerOp, check_separation_lemma
from carleman_lab.potentials import (
    build_mollifier,
    mollify,
    parse_potential,
    sample_potential,
    select_theta,
    verify_regularization_bounds,
)
from carleman_lab.weights import (
    SymbolPoint,
    bracket_closed_form,
    bracket_fd,
    build_phase,
    find_certificate,
    hormander_scan,
    radial_exp,
    radial_inverse,
    subelliptic_constant,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def announce(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok

    return emit


def _config(name, **kw):
    cfg = parse_config((CONFIGS / name).read_text())
    return replace(cfg, **kw) if kw else cfg


def test_1_mollifier_mass(announce):
    worst_mass, worst_grad = 0.0, 0.0
    for name in ("bump", "cosine"):
        k = build_mollifier(name)
        worst_mass = max(worst_mass, abs(k.mass() - 1))
        worst_grad = max(worst_grad, *np.abs(k.derivative_mass()))
    ok = worst_mass <= 1e-10 and worst_grad <= 1e-8
    announce(1, ok, f"|mass-1| = {worst_mass:.1e}, |grad mass| = {worst_grad:.1e}")
    assert ok


CATALOG_SPECS = (
    "constant{value=0.7}",
    "trig{amplitudes=1:0.5,frequencies=1:3}",
    "weierstrass{alpha=0.5,levels=6}",
    "checkerboard{cell=0.25,jump=1}",
    "random{cell=0.125,amplitude=1,seed=0}",
)


def test_2_regularization_bounds(announce):
    g = build_grid("torus", 256, 1.0)
    kernel = build_mollifier("bump")
    failures, worst = [], math.inf
    for text in CATALOG_SPECS:
        spec = parse_potential(text)
        V = sample_potential(spec, g)
        for theta in (0.05, 0.1, 0.2):
            rep = verify_regularization_bounds(V, theta, kernel, eps_grid=spec.grid_slack(g))
            worst = min(worst, rep.bound1_margin, rep.bound2_margin)
            if not rep.passed:
                failures.append((text, theta))
    ok = not failures
    announce(2, ok, f"15 cases, smallest margin {worst:.3e}, failures {failures}")
    assert ok


def test_3_bracket_oracle(announce):
    rng = np.random.default_rng(0)
    worst = 0.0
    for spec in (radial_exp(2.0), radial_inverse()):
        for _ in range(100):
            pt = SymbolPoint(rng.uniform(0.5, 2.0), rng.uniform(-5, 5), rng.uniform(0, 5))
            a, b = bracket_closed_form(spec, pt), bracket_fd(spec, pt)
            worst = max(worst, abs(a - b) / max(abs(a), 1e-300))
    ok = worst <= 1e-5
    announce(3, ok, f"worst relative gap over 200 points {worst:.2e}")
    assert ok


def test_4_hormander_positivity(announce):
    c = 2.0
    ex = hormander_scan(radial_exp(c), (0.5, 2.0), 1000)
    inv = hormander_scan(radial_inverse(), (0.5, 2.0), 1000)
    rel = float(np.max(np.abs(inv.values - inv.radii**-7.0) / inv.radii**-7.0))
    ok = ex.min_char_bracket >= c**3 and rel <= 1e-9
    announce(4, ok, f"exp min {ex.min_char_bracket:.4g} >= {c**3:g}; inverse vs r^-7 {rel:.1e}")
    assert ok


def test_5_subelliptic_certificate(announce):
    spec = radial_exp(1.0)
    rep = find_certificate(spec, samples=100_000)
    fine = subelliptic_constant(spec, rep.d, samples=800_000)
    change = abs(fine.C - rep.C) / abs(rep.C)
    ok = rep.passed and rep.d <= 128 and change <= 0.05
    announce(5, ok, f"d = {rep.d:g}, C = {rep.C:.4g}, 8x refinement change {change:.2%}")
    assert ok


def test_6_separation_lemma(announce):
    g = build_grid("torus", 128, 1.0)
    kernel = build_mollifier("bump")
    region = parse_region("ball{center=0.5:0.5,radius=0.3}")
    tests = bump_family(g, region, 20, 0, "band")
    phi = build_phase(radial_exp(1.0, center=(0.5, 0.5)), g)
    count, worst, failures = 0, math.inf, 0
    for text in ("checkerboard{cell=0.25,jump=1}", "weierstrass{alpha=0.5,levels=6}"):
        V = sample_potential(text, g)
        for h in (0.2, 0.1):
            Vt = mollify(V, select_theta(h, 0.5), kernel)
            base = SchrodingerOp(g, h, Vt, 0.5)
            for u in tests:
                rep = check_separation_lemma(base, phi, u)
                count += 1
                worst = min(worst, rep.margin / (1 + abs(rep.lhs)))
                failures += not rep.passed
    ok = failures == 0
    announce(6, ok, f"{count} cases, {failures} failures, smallest relative margin {worst:.3g}")
    assert ok


def test_7_carleman_ratio(announce):
    free = _config("carleman_free.ini")
    rep = run_experiment(free)
    steps = rep.fits[0]["steps"]
    change = refinement_change(free)
    rough = _config("carleman_checkerboard.ini")
    rough_rep = run_experiment(rough)
    rough_change = refinement_change(rough)
    ok = (
        rep.passed
        and all(r.ok and math.isfinite(r.ratio) for r in rep.records)
        and max(change) <= 0.15
        and rough_rep.passed
    )
    detail = (
        f"V=0: steps {[round(s, 3) for s in steps]}, doubling change {max(change):.2%}; "
        f"checkerboard: steps {[round(s, 3) for s in rough_rep.fits[0]['steps']]}, "
        f"doubling change per rung {[f'{c:.1%}' for c in rough_change]} (informational)"
    )
    announce(7, ok, detail)
    assert ok


def test_8a_plane_wave_anchor(announce):
    rep = run_experiment(_config("plane_wave.ini"))
    target = 1.0 / (math.pi * 0.25**2)
    err = max(abs(r.ratio / target - 1) for r in rep.records)
    ok = err <= 1e-8
    announce("8a", ok, f"ratio vs area(M)/area(U) = {target:.6f}: worst relative error {err:.1e}")
    assert ok


@pytest.mark.xfail(strict=True, reason="log_ratio stays flat while beta(h) grows; no single C fits the ladder")
def test_8b_checkerboard_envelope(announce):
    rep = run_experiment(_config("checkerboard.ini"))
    fit = rep.fits[0]
    lr = [round(r.log_ratio, 3) for r in rep.records]
    beta = [round(r.beta, 2) for r in rep.records]
    ok = rep.flags["envelope"]
    announce(
        "8b",
        ok,
        f"log_ratio {lr} vs beta {beta}; fitted C = {fit['C']:.4g}, fit residual {fit['quality']:.2f}, "
        f"envelope constant max(log_ratio/beta) = {fit['C_envelope']:.4g}",
    )
    assert ok


def test_9_holder_ceiling(announce):
    rep = run_experiment(_config("holder.ini"))
    parts = [f"alpha={f['alpha']}: p = {f.get('p', float('nan')):.3f} <= {f['ceiling'] + 0.2:.3f}" for f in rep.fits]
    ok = rep.passed
    announce(9, ok, "; ".join(parts))
    assert ok


def test_10_sweep_determinism(announce, tmp_path):
    cfg = CONFIGS / "checkerboard.ini"
    outs = []
    for name in ("first", "second"):
        out = tmp_path / name
        assert main(["sweep", "--config", str(cfg), "--out", str(out), "--workers", "2"]) == 0
        outs.append(out)
    names = ("report.json", "records.csv", "config_echo.txt")
    same = all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    announce(10, same, f"byte-identical {', '.join(names)}")
    assert same
