"""Fast invariant checks across the package (``carleman-lab verify``)."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import kernels
from .config import format_config, parse_config
from .experiments import (
    ExperimentConfig,
    bump_family,
    fit_exponent,
    parse_region,
    region_mask,
    region_weights,
    run_experiment,
)
from .grid import build_grid, inner, laplacian_values
from .operators import (
    ConjugatedOp,
    SchrodingerOp,
    apply_conjugated,
    apply_conjugated_direct,
    apply_schrodinger,
    commutator_form,
)
from .potentials import (
    build_mollifier,
    modulus_of_continuity,
    mollify,
    sample_potential,
    verify_regularization_bounds,
)
from .weights import (
    SymbolPoint,
    bracket_closed_form,
    bracket_fd,
    hormander_scan,
    radial_exp,
    radial_inverse,
)

__all__ = ["CHECKS", "run_all"]


def _grid_weights():
    t = build_grid("torus", (32, 48), (1.0, 2.0))
    p = build_grid("polar", (24, 32), (0.5, 2.0))
    d = build_grid("polar", (24, 32), 1.5)
    err = max(
        abs(t.weights.sum() - 2.0),
        abs(p.weights.sum() - math.pi * (4.0 - 0.25)) / 12,
        abs(d.weights.sum() - math.pi * 2.25) / 7,
    )
    return err < 1e-12, f"area error {err:.2e}"


def _plane_wave_symbol():
    g = build_grid("torus", (32, 32), (1.0, 1.0))
    X, Y = g.coords
    u = np.exp(2j * math.pi * (2 * X + Y))
    dx = g.spacing[0]
    lam = sum(-(2 - 2 * math.cos(2 * math.pi * k * dx)) / dx**2 for k in (2, 1))
    err = np.max(np.abs(laplacian_values(g, u) - lam * u)) / abs(lam)
    return err < 1e-12, f"relative error {err:.2e}"


def _mollifier_mass():
    worst = 0.0
    for name in ("bump", "cosine"):
        k = build_mollifier(name)
        worst = max(worst, abs(k.mass() - 1.0), *np.abs(k.derivative_mass()))
    return worst < 1e-8, f"worst mass defect {worst:.2e}"


def _regularization():
    g = build_grid("torus", (64, 64), (1.0, 1.0))
    V = sample_potential("checkerboard{cell=0.25,jump=1}", g)
    rep = verify_regularization_bounds(V, 0.1, build_mollifier("bump"))
    const = mollify(g.constant(3.0), 0.1, build_mollifier("bump"))
    ok = rep.passed and np.all(const.values == 3.0)
    return bool(ok), f"sup|V_t - V| = {rep.sup_diff:.3f} <= omega = {rep.omega:.3f}"


def _modulus_lipschitz():
    g = build_grid("torus", (64, 64), (1.0, 1.0))
    V = sample_potential("trig{amplitudes=1,frequencies=1}", g)
    w = modulus_of_continuity(V, 0.1)
    bound = 2 * math.pi * 0.1
    return w <= bound, f"omega(0.1) = {w:.4f} <= {bound:.4f}"


def _bracket():
    worst = 0.0
    rng = np.random.default_rng(0)
    for spec in (radial_exp(2.0), radial_inverse()):
        for _ in range(10):
            pt = SymbolPoint(rng.uniform(0.5, 2), rng.uniform(-5, 5), rng.uniform(0, 5))
            a, b = bracket_closed_form(spec, pt), bracket_fd(spec, pt)
            worst = max(worst, abs(a - b) / max(abs(a), 1e-12))
    return worst < 1e-5, f"worst relative gap {worst:.2e}"


def _hormander():
    inv = hormander_scan(radial_inverse(), (0.5, 2.0), 200)
    err = np.max(np.abs(inv.values - inv.radii**-7.0) / inv.radii**-7.0)
    exp = hormander_scan(radial_exp(2.0), (0.5, 2.0), 200)
    return bool(err < 1e-9 and exp.passed), f"r^-7 relative error {err:.2e}, exp min {exp.min_char_bracket:.3g}"


def _conjugation():
    g = build_grid("torus", (48, 48), (1.0, 1.0))
    rng = np.random.default_rng(1)
    X, Y = g.coords
    phi = g.field(0.3 * np.sin(2 * math.pi * X) * np.cos(2 * math.pi * Y))
    V = g.field(rng.standard_normal(g.shape))
    op = ConjugatedOp(SchrodingerOp(g, 0.1, V, 0.3), phi)
    u = g.field(rng.standard_normal(g.shape))
    v = g.field(rng.standard_normal(g.shape))
    a, b = apply_conjugated(op, u).values, apply_conjugated_direct(op, u).values
    two_path = np.max(np.abs(a - b)) / np.max(np.abs(b))
    lhs = inner(g, apply_conjugated(op, u), v)
    adj = abs(lhs - inner(g, u, apply_conjugated(op, v, adjoint=True))) / abs(lhs)
    base = op.base
    sym = abs(inner(g, apply_schrodinger(base, u), v) - inner(g, u, apply_schrodinger(base, v)))
    zero = commutator_form(ConjugatedOp(base, g.constant(0.0)), u)
    ok = two_path < 1e-8 and adj < 1e-10 and sym < 1e-10 * (1 + abs(lhs)) and abs(zero) < 1e-10
    return bool(ok), f"two-path {two_path:.1e}, adjoint {adj:.1e}, commutator(phi=0) {zero:.1e}"


def _regions():
    g = build_grid("torus", (128, 128), (1.0, 1.0))
    reg = parse_region("annulus{center=0.4:0.55,inner=0.1,outer=0.4}")
    err = abs(region_weights(g, reg).sum() / reg.area - 1)
    u = bump_family(g, reg, 3, 0)[0]
    inside = np.all(u.values[~region_mask(g, reg)] == 0)
    return bool(err < 1e-12 and inside), f"coverage error {err:.1e}"


def _plane_wave_anchor():
    cfg = ExperimentConfig(
        "torus", 1.0, "constant{value=0}", domain_n=64, mode="local_to_global",
        region="ball{center=0.5:0.5,radius=0.25}", source="plane_wave", wave=(1, 0), h=(0.2, 0.1),
    )
    rep = run_experiment(cfg)
    target = 1.0 / (math.pi * 0.0625)
    err = max(abs(r.ratio / target - 1) for r in rep.records)
    return err < 1e-8, f"ratio error {err:.1e}"


def _fit():
    A, p, res = fit_exponent([(h, 2 * h**-1.5) for h in (0.2, 0.1, 0.05)])
    ok = abs(A - 2) < 1e-10 and abs(p - 1.5) < 1e-10 and res < 1e-12
    return ok, f"A={A:.12g} p={p:.12g}"


def _config_roundtrip():
    text = "[domain]\nkind = torus\nlength = 1.0\n[potential]\nspec = weierstrass{alpha=0.5,levels=6}\n"
    cfg = parse_config(text)
    again = parse_config(format_config(cfg))
    return again == cfg and len(cfg.defaulted) == 6, f"{len(cfg.defaulted)} defaulted fields"


def _backends():
    rng = np.random.default_rng(2)
    v = rng.standard_normal((24, 24))
    di = np.array([0, 1, 2, -1], dtype=np.int64)
    dj = np.array([1, 0, 3, 2], dtype=np.int64)
    w = rng.standard_normal(4)
    results = []
    current = kernels.BACKEND
    try:
        for name in kernels.available_backends():
            kernels.use_backend(name)
            results.append((kernels.offset_max_abs_diff(v, di, dj), kernels.offset_weighted_diff(v, di, dj, w)))
    finally:
        kernels.use_backend(current)
    same = all(np.array_equal(results[0][0], r[0]) and np.array_equal(results[0][1], r[1]) for r in results)
    return same, f"backends: {', '.join(kernels.available_backends())}"


CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    "grid.weights": _grid_weights,
    "grid.plane_wave": _plane_wave_symbol,
    "potentials.mollifier_mass": _mollifier_mass,
    "potentials.regularization": _regularization,
    "potentials.modulus": _modulus_lipschitz,
    "kernels.backends": _backends,
    "weights.bracket": _bracket,
    "weights.hormander": _hormander,
    "operators.conjugation": _conjugation,
    "experiments.regions": _regions,
    "experiments.plane_wave": _plane_wave_anchor,
    "experiments.fit": _fit,
    "config.roundtrip": _config_roundtrip,
}


def run_all() -> list[tuple[str, bool, str]]:
    out = []
    for name, check in CHECKS.items():
        try:
            ok, detail = check()
        except Exception as exc:  # a crash is a failed check, not an aborted suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
