"""Potential catalog, mollification and modulus of continuity.

The mollified potential is the periodic discrete convolution

    V_theta(x) = V(x) + sum_t K_theta(t) (V(x - t) - V(x)),

with ``K_theta(t) = theta^-2 phi(t / theta) dA`` rescaled to unit discrete
mass.  Writing it as a sum of differences makes constants (and plateaus of
piecewise-constant potentials) exactly invariant.  The modulus of
continuity is a brute-force supremum over grid points and grid offsets
``|t| <= theta``; the kernel only touches offsets ``|t| < theta``, so
``|V_theta - V| <= omega_V(theta)`` holds on the grid up to rounding.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.special import roots_legendre

from . import kernels
from .grid import Grid, GridError, ScalarField

__all__ = [
    "Constant",
    "Trig",
    "Weierstrass",
    "Checkerboard",
    "PiecewiseRandom",
    "PotentialError",
    "parse_potential",
    "sample_potential",
    "MollifierKernel",
    "build_mollifier",
    "MollifiedField",
    "mollify",
    "mollify_gradient",
    "ModulusTable",
    "modulus_of_continuity",
    "modulus_table",
    "RegularizationReport",
    "verify_regularization_bounds",
    "beta_of_h",
    "beta_from_modulus",
    "select_theta",
    "disk_offsets",
]


class PotentialError(ValueError):
    pass


# -- catalog ----------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ":".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


class _Spec:
    name = ""
    aliases: dict[str, str] = {}

    def to_text(self) -> str:
        parts = [f"{f.name}={_fmt(getattr(self, f.name))}" for f in fields(self)]
        return f"{self.name}{{{','.join(parts)}}}"

    def __str__(self):
        return self.to_text()

    @property
    def piecewise_constant(self) -> bool:
        return False

    def lipschitz(self, grid: Grid) -> float:
        return 0.0

    def grid_slack(self, grid: Grid) -> float:
        """Discretisation slack ``Lip(V) * spacing``; zero for cell-aligned step potentials."""
        if self.piecewise_constant:
            return 0.0
        return self.lipschitz(grid) * max(grid.spacing if grid.is_torus else (grid.min_spacing,))


@dataclass(frozen=True)
class Constant(_Spec):
    value: float = 0.0
    name = "constant"

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise PotentialError("constant: value must be finite")

    @property
    def sup_bound(self) -> float:
        return abs(self.value)

    def sample(self, grid: Grid) -> np.ndarray:
        return np.full(grid.shape, float(self.value))


@dataclass(frozen=True)
class Trig(_Spec):
    """``sum_k a_k sin(2 pi f_k x / L_x)``."""

    amplitudes: tuple = (1.0,)
    frequencies: tuple = (1,)
    name = "trig"

    def __post_init__(self):
        amps = tuple(float(a) for a in np.atleast_1d(self.amplitudes))
        freqs = tuple(int(f) for f in np.atleast_1d(self.frequencies))
        if len(amps) != len(freqs) or not amps:
            raise PotentialError("trig: amplitudes and frequencies need equal, nonzero length")
        if not all(math.isfinite(a) for a in amps):
            raise PotentialError("trig: amplitudes must be finite")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "frequencies", freqs)

    @property
    def sup_bound(self) -> float:
        return float(sum(abs(a) for a in self.amplitudes))

    def lipschitz(self, grid: Grid) -> float:
        L = grid.extents[0] if grid.is_torus else 1.0
        return sum(abs(a) * 2 * math.pi * abs(f) / L for a, f in zip(self.amplitudes, self.frequencies))

    def sample(self, grid: Grid) -> np.ndarray:
        X, _ = grid.coords
        L = grid.extents[0] if grid.is_torus else 1.0
        out = np.zeros(grid.shape)
        for a, f in zip(self.amplitudes, self.frequencies):
            out += a * np.sin(2.0 * math.pi * f * X / L)
        return out


@dataclass(frozen=True)
class Weierstrass(_Spec):
    """``sum_{k=0}^{levels} 2^{-k alpha} cos(2 pi 2^k x / L_x)``: alpha-Holder uniformly in ``levels``."""

    alpha: float = 0.5
    levels: int = 6
    name = "weierstrass"

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise PotentialError(f"weierstrass: alpha must lie in (0, 1], got {self.alpha}")
        if int(self.levels) != self.levels or self.levels < 1:
            raise PotentialError(f"weierstrass: levels must be an integer >= 1, got {self.levels}")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "levels", int(self.levels))

    @property
    def sup_bound(self) -> float:
        q = 2.0 ** (-self.alpha)
        return (1.0 - q ** (self.levels + 1)) / (1.0 - q) if q != 1.0 else float(self.levels + 1)

    def lipschitz(self, grid: Grid) -> float:
        L = grid.extents[0] if grid.is_torus else 1.0
        return sum(2.0 ** (-k * self.alpha) * 2 * math.pi * 2.0**k / L for k in range(self.levels + 1))

    def sample(self, grid: Grid) -> np.ndarray:
        X, _ = grid.coords
        L = grid.extents[0] if grid.is_torus else 1.0
        out = np.zeros(grid.shape)
        for k in range(self.levels + 1):
            out += 2.0 ** (-k * self.alpha) * np.cos(2.0 * math.pi * 2.0**k * X / L)
        return out


def _cell_index(grid: Grid, cell: float, label: str) -> tuple[np.ndarray, np.ndarray, int, int]:
    if not grid.is_torus:
        raise PotentialError(f"{label}: cell potentials require a torus grid")
    counts = []
    for L in grid.extents:
        ratio = L / cell
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise PotentialError(
                f"{label}: cell size {cell} is incommensurate with the period {L}"
            )
        counts.append(int(round(ratio)))
    X, Y = grid.coords
    ix = np.floor(X / cell + 1e-9).astype(int) % counts[0]
    iy = np.floor(Y / cell + 1e-9).astype(int) % counts[1]
    return ix, iy, counts[0], counts[1]


@dataclass(frozen=True)
class Checkerboard(_Spec):
    """``jump * ((floor(x/cell) + floor(y/cell)) mod 2)``: values in ``{0, jump}``."""

    cell: float = 0.25
    jump: float = 1.0
    name = "checkerboard"
    aliases = {"cell_size": "cell", "J": "jump"}

    def __post_init__(self):
        if not self.cell > 0:
            raise PotentialError("checkerboard: cell must be positive")
        if not math.isfinite(self.jump):
            raise PotentialError("checkerboard: jump must be finite")

    @property
    def piecewise_constant(self) -> bool:
        return True

    @property
    def sup_bound(self) -> float:
        return abs(self.jump)

    def sample(self, grid: Grid) -> np.ndarray:
        ix, iy, nx, ny = _cell_index(grid, self.cell, self.name)
        if nx % 2 or ny % 2:
            raise PotentialError(
                "checkerboard: the period must hold an even number of cells"
            )
        return float(self.jump) * ((ix + iy) % 2).astype(float)


@dataclass(frozen=True)
class PiecewiseRandom(_Spec):
    """Cellwise constant, i.i.d. uniform in ``[-amplitude, amplitude]`` (seeded)."""

    cell: float = 0.125
    amplitude: float = 1.0
    seed: int = 0
    name = "random"
    aliases = {"cell_size": "cell", "amp": "amplitude"}

    def __post_init__(self):
        if not self.cell > 0:
            raise PotentialError("random: cell must be positive")
        if not (math.isfinite(self.amplitude) and self.amplitude >= 0):
            raise PotentialError("random: amplitude must be finite and >= 0")
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def piecewise_constant(self) -> bool:
        return True

    @property
    def sup_bound(self) -> float:
        return abs(self.amplitude)

    def sample(self, grid: Grid) -> np.ndarray:
        ix, iy, nx, ny = _cell_index(grid, self.cell, self.name)
        rng = np.random.default_rng(self.seed)
        table = rng.uniform(-self.amplitude, self.amplitude, size=(nx, ny))
        return table[ix, iy]


CATALOG = {cls.name: cls for cls in (Constant, Trig, Weierstrass, Checkerboard, PiecewiseRandom)}
CATALOG["piecewise_random"] = PiecewiseRandom

_SPEC_RE = re.compile(r"^\s*([A-Za-z_]+)\s*(?:\{(.*)\})?\s*$")


def _coerce(text: str):
    text = text.strip()
    if ":" in text:
        return tuple(_coerce(t) for t in text.split(":"))
    try:
        return int(text)
    except ValueError:
        return float(text)


def parse_potential(text: str):
    """Parse the canonical textual form, e.g. ``checkerboard{cell=0.25,jump=1}``."""
    match = _SPEC_RE.match(text)
    if not match:
        raise PotentialError(f"malformed potential spec {text!r}")
    name, body = match.group(1).lower(), match.group(2) or ""
    if name not in CATALOG:
        raise PotentialError(
            f"unknown potential variant {name!r}; catalog: {', '.join(sorted(CATALOG))}"
        )
    cls = CATALOG[name]
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for item in filter(None, (s.strip() for s in body.split(","))):
        if "=" not in item:
            raise PotentialError(f"{name}: expected key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        key = cls.aliases.get(key, key)
        if key not in known:
            raise PotentialError(f"{name}: unknown key {key!r}; expected one of {sorted(known)}")
        try:
            kwargs[key] = _coerce(value)
        except ValueError:
            raise PotentialError(f"{name}: cannot parse value {value!r} for {key!r}") from None
    if cls is Trig:
        for key in ("amplitudes", "frequencies"):
            if key in kwargs and not isinstance(kwargs[key], tuple):
                kwargs[key] = (kwargs[key],)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise PotentialError(f"{name}: {exc}") from None


def sample_potential(spec, grid: Grid) -> ScalarField:
    if isinstance(spec, str):
        spec = parse_potential(spec)
    return ScalarField(grid, spec.sample(grid))


# -- mollifier --------------------------------------------------------------


def _bump(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    ri = r[inside]
    out[inside] = np.exp(1.0 / (ri * ri - 1.0))
    return out


def _bump_prime(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    ri = r[inside]
    s = ri * ri - 1.0
    out[inside] = np.exp(1.0 / s) * (-2.0 * ri / (s * s))
    return out


def _cosine(r):
    r = np.asarray(r, dtype=float)
    return np.where(r < 1.0, 0.5 * (1.0 + np.cos(np.pi * np.minimum(r, 1.0))), 0.0)


def _cosine_prime(r):
    r = np.asarray(r, dtype=float)
    return np.where(r < 1.0, -0.5 * np.pi * np.sin(np.pi * np.minimum(r, 1.0)), 0.0)


_PROFILES = {
    "bump": (_bump, _bump_prime),
    "cosine": (_cosine, _cosine_prime),
}
_PROFILE_ALIASES = {"standardbump": "bump", "standard_bump": "bump", "standard": "bump"}


@dataclass(frozen=True)
class MollifierKernel:
    """Radial unit-mass kernel supported in the unit disk.

    The native quadrature is Gauss-Legendre in the radius times a uniform
    angular rule.  ``grad_l1`` is ``||grad phi||_{L^1}``.
    """

    profile: str
    nodes: np.ndarray = field(repr=False)
    node_weights: np.ndarray = field(repr=False)
    n_angles: int
    normalization: float
    grad_l1: float

    def radial(self, r):
        """Normalised radial profile ``phi(|x| = r)``; exactly 0 for ``r >= 1``."""
        return _PROFILES[self.profile][0](r) / self.normalization

    def radial_prime(self, r):
        return _PROFILES[self.profile][1](r) / self.normalization

    def __call__(self, x, y):
        return self.radial(np.hypot(x, y))

    def gradient(self, x, y):
        r = np.hypot(x, y)
        dp = self.radial_prime(r)
        with np.errstate(invalid="ignore", divide="ignore"):
            gx = np.where(r > 0, dp * x / np.where(r > 0, r, 1.0), 0.0)
            gy = np.where(r > 0, dp * y / np.where(r > 0, r, 1.0), 0.0)
        return gx, gy

    def quadrature(self):
        """Nodes ``(x, y)`` and weights of the native 2D rule on the unit disk."""
        a = 2.0 * np.pi * np.arange(self.n_angles) / self.n_angles
        R, A = np.meshgrid(self.nodes, a, indexing="ij")
        W = np.outer(self.node_weights * self.nodes, np.full(self.n_angles, 2.0 * np.pi / self.n_angles))
        return R * np.cos(A), R * np.sin(A), W

    def mass(self) -> float:
        x, y, w = self.quadrature()
        return float(np.sum(w * self(x, y)))

    def derivative_mass(self) -> tuple[float, float]:
        x, y, w = self.quadrature()
        gx, gy = self.gradient(x, y)
        return float(np.sum(w * gx)), float(np.sum(w * gy))


def build_mollifier(profile: str = "bump", n_radial: int = 400, n_angles: int = 64) -> MollifierKernel:
    """Build a normalised kernel; ``profile`` is ``"bump"`` (``exp(1/(r^2-1))``) or ``"cosine"``."""
    key = profile.lower()
    key = _PROFILE_ALIASES.get(key, key)
    if key not in _PROFILES:
        raise PotentialError(f"unknown mollifier profile {profile!r}; choose from {sorted(_PROFILES)}")
    t, wt = roots_legendre(n_radial)
    nodes = 0.5 * (t + 1.0)
    weights = 0.5 * wt
    p, dp = _PROFILES[key]
    norm = 2.0 * np.pi * float(np.sum(weights * p(nodes) * nodes))
    grad_l1 = 2.0 * np.pi * float(np.sum(weights * np.abs(dp(nodes)) * nodes)) / norm
    return MollifierKernel(key, nodes, weights, n_angles, norm, grad_l1)


def disk_offsets(grid: Grid, radius: float, strict: bool = False):
    """Integer offsets ``(di, dj)`` with ``|t| <= radius`` (``< radius`` when strict)."""
    dx, dy = grid.spacing
    ni = int(math.floor(radius / dx)) + 1
    nj = int(math.floor(radius / dy)) + 1
    I, J = np.meshgrid(np.arange(-ni, ni + 1), np.arange(-nj, nj + 1), indexing="ij")
    d2 = (I * dx) ** 2 + (J * dy) ** 2
    tol = 1e-12 * radius * radius
    mask = d2 < radius * radius - tol if strict else d2 <= radius * radius + tol
    return I[mask], J[mask], np.sqrt(d2[mask])


@dataclass(frozen=True, eq=False)
class MollifiedField(ScalarField):
    """A mollified potential; remembers the scale and kernel it came from."""

    theta: float = 0.0
    kernel: MollifierKernel | None = None


def _check_theta(grid: Grid, theta: float) -> None:
    if not grid.is_torus:
        raise GridError("mollification is defined on the periodic torus only")
    if not (0.0 < theta <= 1.0):
        raise PotentialError(f"theta must lie in (0, 1], got {theta}")
    if theta < 2.0 * max(grid.spacing) * (1 - 1e-12):
        raise PotentialError(
            f"kernel unresolved: theta={theta} is below 2 grid spacings ({2 * max(grid.spacing)})"
        )


def _kernel_taps(grid: Grid, theta: float, kernel: MollifierKernel):
    di, dj, _ = disk_offsets(grid, theta, strict=True)
    dx, dy = grid.spacing
    tx, ty = di * dx / theta, dj * dy / theta
    raw = kernel(tx, ty) * dx * dy / theta**2
    scale = 1.0 / raw.sum()
    return di, dj, tx, ty, raw * scale, scale


def mollify(V: ScalarField, theta: float, kernel: MollifierKernel) -> MollifiedField:
    """Periodic mollification ``V_theta`` at scale ``theta``."""
    grid = V.grid
    _check_theta(grid, theta)
    di, dj, _, _, w, _ = _kernel_taps(grid, theta, kernel)
    vals = np.real(V.values).astype(float)
    out = vals + kernels.offset_weighted_diff(vals, di, dj, w)
    return MollifiedField(grid, out, theta=float(theta), kernel=kernel)


def mollify_gradient(V: ScalarField, theta: float, kernel: MollifierKernel):
    """``(d/dx V_theta, d/dy V_theta)`` by convolving with the analytic kernel gradient."""
    grid = V.grid
    _check_theta(grid, theta)
    di, dj, tx, ty, _, scale = _kernel_taps(grid, theta, kernel)
    dx, dy = grid.spacing
    gx, gy = kernel.gradient(tx, ty)
    factor = scale * dx * dy / theta**3
    vals = np.real(V.values).astype(float)
    return (
        ScalarField(grid, kernels.offset_weighted_diff(vals, di, dj, gx * factor)),
        ScalarField(grid, kernels.offset_weighted_diff(vals, di, dj, gy * factor)),
    )


# -- modulus of continuity --------------------------------------------------


def _half_plane(di, dj, dist):
    # m(t) = m(-t), so one representative per +-pair suffices; t = 0 contributes 0
    keep = (di > 0) | ((di == 0) & (dj > 0))
    return di[keep], dj[keep], dist[keep]


@dataclass(frozen=True)
class ModulusTable:
    """``omega_V`` sampled on a ladder of scales."""

    thetas: tuple[float, ...]
    omegas: tuple[float, ...]
    spacing: tuple[float, float]

    def __call__(self, theta: float) -> float:
        for t, w in zip(self.thetas, self.omegas):
            if math.isclose(t, theta, rel_tol=1e-12):
                return w
        raise KeyError(f"theta={theta} not in the table")


def _check_modulus_theta(grid: Grid, theta: float) -> None:
    if not grid.is_torus:
        raise GridError("the modulus of continuity is computed on the periodic torus")
    if theta < min(grid.spacing) * (1 - 1e-12):
        raise PotentialError(
            f"theta={theta} is below the grid spacing {min(grid.spacing)}"
        )


def modulus_table(V: ScalarField, thetas) -> ModulusTable:
    """Brute-force ``omega_V`` for every ``theta`` in ``thetas`` with a single offset scan."""
    grid = V.grid
    thetas = tuple(float(t) for t in thetas)
    for t in thetas:
        _check_modulus_theta(grid, t)
    di, dj, dist = _half_plane(*disk_offsets(grid, max(thetas)))
    vals = np.real(V.values).astype(float)
    per_offset = kernels.offset_max_abs_diff(vals, di, dj) if len(di) else np.zeros(0)
    omegas = []
    for t in thetas:
        mask = dist <= t * (1 + 1e-12)
        omegas.append(float(per_offset[mask].max()) if mask.any() else 0.0)
    return ModulusTable(thetas, tuple(omegas), grid.spacing)


def modulus_of_continuity(V: ScalarField, theta: float) -> float:
    """``sup_x sup_{|t| <= theta} |V(x - t) - V(x)|`` over grid points and offsets."""
    return modulus_table(V, [theta]).omegas[0]


@dataclass(frozen=True)
class RegularizationReport:
    theta: float
    omega: float
    sup_diff: float
    sup_grad: float
    grad_bound: float
    eps_grid: float
    bound1_margin: float
    bound2_margin: float

    @property
    def passed(self) -> bool:
        return self.bound1_margin >= 0.0 and self.bound2_margin >= 0.0


def verify_regularization_bounds(
    V: ScalarField, theta: float, kernel: MollifierKernel, eps_grid: float = 0.0
) -> RegularizationReport:
    """Check ``|V_theta - V| <= omega`` and ``|d_i V_theta| <= ||grad phi||_1 omega / theta``.

    Both right-hand sides carry a ``1e-6`` relative allowance and the
    additive discretisation slack ``eps_grid``.  Failing margins are
    reported, not raised.
    """
    omega = modulus_of_continuity(V, theta)
    smooth = mollify(V, theta, kernel)
    gx, gy = mollify_gradient(V, theta, kernel)
    sup_diff = float(np.max(np.abs(smooth.values - np.real(V.values))))
    sup_grad = max(gx.max_abs(), gy.max_abs())
    grad_bound = kernel.grad_l1 / theta * omega
    return RegularizationReport(
        theta=float(theta),
        omega=omega,
        sup_diff=sup_diff,
        sup_grad=sup_grad,
        grad_bound=grad_bound,
        eps_grid=float(eps_grid),
        bound1_margin=omega * (1 + 1e-6) + eps_grid - sup_diff,
        bound2_margin=grad_bound * (1 + 1e-6) + eps_grid - sup_grad,
    )


# -- beta(h) and theta selection ---------------------------------------------


def beta_from_modulus(omega: float, h: float) -> float:
    return math.sqrt(omega) / h ** (4.0 / 3.0)


def beta_of_h(V: ScalarField, h: float, kappa: float) -> float:
    """``omega_V(h^{2/3} kappa)^{1/2} / h^{4/3}``; zero exactly when V is constant on the grid."""
    if not (0.0 < h < 1.0):
        raise PotentialError(f"h must lie in (0, 1), got {h}")
    if kappa <= 0:
        raise PotentialError(f"kappa must be positive, got {kappa}")
    radius = h ** (2.0 / 3.0) * kappa
    if radius < min(V.grid.spacing) * (1 - 1e-12):
        raise PotentialError(
            f"radius under-resolved: h^(2/3) kappa = {radius} < spacing {min(V.grid.spacing)}"
        )
    return beta_from_modulus(modulus_of_continuity(V, radius), h)


def select_theta(h: float, kappa: float, alpha: float | None = None) -> float:
    """Mollification scale ``kappa h^{2/3}``, or ``kappa h^{2/(alpha+3)}`` for alpha-Holder V."""
    if not (0.0 < h <= 1.0):
        raise PotentialError(f"h must lie in (0, 1], got {h}")
    if not (0.0 < kappa <= 1.0):
        raise PotentialError(f"kappa must lie in (0, 1], got {kappa}")
    if alpha is None:
        return kappa * h ** (2.0 / 3.0)
    if not (0.0 < alpha <= 1.0):
        raise PotentialError(f"alpha must lie in (0, 1], got {alpha}")
    return kappa * h ** (2.0 / (alpha + 3.0))
