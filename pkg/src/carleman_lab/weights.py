"""Carleman weights, conjugated symbols and Poisson-bracket checks.

For a radial weight ``phi(r)`` the conjugated free symbol in polar phase
space ``(r, rho; omega)`` is

    p_phi = (rho + i phi'(r))^2 + omega^2 / r^2,
    Re p_phi = rho^2 - phi'^2 + omega^2 / r^2,   Im p_phi = 2 rho phi'.

Bracket convention: ``{f, g} = d_rho f d_r g - d_r f d_rho g``.  With it
the quarter-bracket is

    (1/4) {Re p_phi, Im p_phi} = rho^2 phi'' + (phi' phi'' + omega^2 / r^3) phi',

which is positive on the characteristic set ``rho = 0, omega = r |phi'|``
for both radial families.  For ``phi = 1/r`` it equals ``r^-7`` there;
``quarter_bracket`` returns this normalisation, multiply by 4 for the full
bracket.

Weights are handled in the log domain: ``build_weight`` returns
``2 phi / h``, never ``exp(2 phi / h)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .grid import Grid, ScalarField, smoothstep

__all__ = [
    "WeightSpec",
    "WeightError",
    "SymbolPoint",
    "radial_exp",
    "radial_inverse",
    "glued_exp",
    "parse_weight",
    "build_phase",
    "build_weight",
    "eval_symbol",
    "quarter_bracket",
    "bracket_closed_form",
    "bracket_fd",
    "hormander_scan",
    "HormanderReport",
    "subelliptic_constant",
    "SubellipticReport",
    "find_certificate",
    "LOG_LADDER",
]

LOG_LADDER = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0)


class WeightError(ValueError):
    pass


@dataclass(frozen=True)
class WeightSpec:
    """Weight family.

    ``kind`` is ``radial_exp`` (``phi = c e^r``), ``radial_inverse``
    (``phi = 1/r``) or ``glued_exp`` (two exponential branches centred at
    ``x1`` and ``x2``, glued with cutoffs vanishing on ``B(x_i, inner)`` and
    equal to one outside ``B(x_i, outer)``).  ``delta`` rescales
    ``phi -> phi / delta``.  Radial weights are centred at ``center``.
    """

    kind: str
    c: float = 1.0
    delta: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)
    x1: tuple[float, float] | None = None
    x2: tuple[float, float] | None = None
    inner: tuple[float, float] | None = None
    outer: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in ("radial_exp", "radial_inverse", "glued_exp"):
            raise WeightError(f"unknown weight kind {self.kind!r}")
        if not (self.c > 0 and math.isfinite(self.c)):
            raise WeightError(f"c must be positive, got {self.c}")
        if not (0.0 < self.delta <= 1.0):
            raise WeightError(f"delta must lie in (0, 1], got {self.delta}")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if self.kind != "glued_exp":
            return
        if self.x1 is None or self.x2 is None:
            raise WeightError("glued_exp needs both centres x1 and x2")
        x1 = tuple(float(v) for v in self.x1)
        x2 = tuple(float(v) for v in self.x2)
        sep = math.dist(x1, x2)
        if sep <= 0:
            raise WeightError("glued_exp centres must differ")
        inner = self.inner if self.inner is not None else (sep / 4, sep / 4)
        outer = self.outer if self.outer is not None else (sep / 3, sep / 3)
        inner = tuple(float(v) for v in np.broadcast_to(inner, (2,)))
        outer = tuple(float(v) for v in np.broadcast_to(outer, (2,)))
        for a, b in zip(inner, outer):
            if not (0 <= a < b):
                raise WeightError(f"cutoff radii need 0 <= inner < outer, got {a}, {b}")
        if outer[0] + outer[1] >= sep:
            raise WeightError(
                f"cutoff annuli overlap: outer radii {outer} vs centre separation {sep}"
            )
        for name, value in (("x1", x1), ("x2", x2), ("inner", inner), ("outer", outer)):
            object.__setattr__(self, name, value)

    @property
    def radial(self) -> bool:
        return self.kind != "glued_exp"

    # radial profile and derivatives, including the 1/delta rescaling
    def phi(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "radial_inverse":
            return 1.0 / r / self.delta
        return self.c * np.exp(r) / self.delta

    def dphi(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "radial_inverse":
            return -1.0 / (r * r) / self.delta
        if self.kind == "radial_exp":
            return self.c * np.exp(r) / self.delta
        raise WeightError("symbol analysis is only provided for radial weights")

    def d2phi(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "radial_inverse":
            return 2.0 / (r * r * r) / self.delta
        if self.kind == "radial_exp":
            return self.c * np.exp(r) / self.delta
        raise WeightError("symbol analysis is only provided for radial weights")

    def char_floor(self, r_max: float) -> float:
        """Analytic lower bound of the quarter-bracket on the characteristic set."""
        if self.kind == "radial_exp":
            return (self.c / self.delta) ** 3
        if self.kind == "radial_inverse":
            return r_max**-7 / self.delta**3
        raise WeightError("symbol analysis is only provided for radial weights")

    def to_text(self) -> str:
        parts = []
        if self.kind == "radial_exp":
            parts.append(f"c={self.c!r}")
        if self.kind == "glued_exp":
            parts += [
                f"c={self.c!r}",
                f"x1={self.x1[0]!r}:{self.x1[1]!r}",
                f"x2={self.x2[0]!r}:{self.x2[1]!r}",
                f"inner={self.inner[0]!r}:{self.inner[1]!r}",
                f"outer={self.outer[0]!r}:{self.outer[1]!r}",
            ]
        else:
            parts.append(f"center={self.center[0]!r}:{self.center[1]!r}")
        return f"{self.kind}{{{','.join(parts)}}}"


def radial_exp(c: float = 1.0, **kw) -> WeightSpec:
    return WeightSpec("radial_exp", c=c, **kw)


def radial_inverse(**kw) -> WeightSpec:
    return WeightSpec("radial_inverse", **kw)


def glued_exp(x1, x2, c: float = 1.0, **kw) -> WeightSpec:
    return WeightSpec("glued_exp", c=c, x1=x1, x2=x2, **kw)


def parse_weight(text: str, delta: float = 1.0) -> WeightSpec:
    """Parse e.g. ``radial_exp{c=2,center=0.5:0.5}`` or ``glued_exp{x1=..,x2=..}``."""
    text = text.strip()
    name, _, body = text.partition("{")
    name = name.strip().lower()
    body = body.rstrip().rstrip("}")
    kwargs: dict = {"delta": delta}
    for item in filter(None, (s.strip() for s in body.split(","))):
        if "=" not in item:
            raise WeightError(f"{name}: expected key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        if key not in ("c", "center", "x1", "x2", "inner", "outer"):
            raise WeightError(f"{name}: unknown key {key!r}")
        try:
            if key == "c":
                kwargs["c"] = float(value)
            else:
                pair = tuple(float(v) for v in value.split(":"))
                if len(pair) == 1 and key in ("inner", "outer"):
                    pair = (pair[0], pair[0])
                if len(pair) != 2:
                    raise ValueError
                kwargs[key] = pair
        except ValueError:
            raise WeightError(f"{name}: cannot parse {key}={value!r}") from None
    return WeightSpec(name, **kwargs)


# -- fields on a grid -------------------------------------------------------


def _radius(spec: WeightSpec, grid: Grid, center) -> np.ndarray:
    if grid.is_torus:
        return grid.distance_from(center)
    X, Y = grid.coords
    return np.hypot(X - center[0], Y - center[1])


def _glued_branches(spec: WeightSpec, grid: Grid, h: float):
    """Log-domain branches ``2 phi_i / h + 2 log chi_i`` (``-inf`` where chi_i = 0)."""
    branches = []
    for x, a, b in zip((spec.x1, spec.x2), spec.inner, spec.outer):
        r = _radius(spec, grid, x)
        chi = smoothstep((r - a) / (b - a))
        with np.errstate(divide="ignore"):
            log_chi2 = 2.0 * np.log(chi)
        branches.append(2.0 * (spec.c * np.exp(r) / spec.delta) / h + log_chi2)
    return branches


def _radial_radius(spec: WeightSpec, grid: Grid, r_floor: float | None) -> np.ndarray:
    r = _radius(spec, grid, spec.center)
    if r_floor is not None:
        if r_floor <= 0:
            raise WeightError(f"r_floor must be positive, got {r_floor}")
        return np.maximum(r, r_floor)
    if spec.kind == "radial_inverse" and np.any(r <= 0):
        raise WeightError("radial weight is singular: the grid contains its centre")
    return r


def build_weight(spec: WeightSpec, grid: Grid, h: float, r_floor: float | None = None) -> ScalarField:
    """Log-weight ``2 phi / h`` on the grid.

    For ``glued_exp`` this is ``log(e^{2 phi_1/h} chi_1^2 + e^{2 phi_2/h} chi_2^2)``,
    evaluated as a max-shifted log-sum-exp.  Inside ``B(x_1, inner)`` it is
    exactly the second branch and vice versa.

    ``1/r`` is singular at its centre; ``r_floor`` clamps smaller
    radii, which is harmless wherever the test functions vanish.
    """
    if not h > 0:
        raise WeightError(f"h must be positive, got {h}")
    if spec.kind == "glued_exp":
        b1, b2 = _glued_branches(spec, grid, h)
        return ScalarField(grid, np.logaddexp(b1, b2))
    r = _radial_radius(spec, grid, r_floor)
    return ScalarField(grid, 2.0 * spec.phi(r) / h)


def build_phase(
    spec: WeightSpec, grid: Grid, h: float | None = None, r_floor: float | None = None
) -> ScalarField:
    """The phase ``phi`` itself (``h`` is needed only for the glued weight)."""
    if spec.kind == "glued_exp":
        if h is None:
            raise WeightError("the glued phase depends on h")
        return ScalarField(grid, 0.5 * h * build_weight(spec, grid, h).values)
    r = _radial_radius(spec, grid, r_floor)
    return ScalarField(grid, spec.phi(r))


# -- symbols ----------------------------------------------------------------


@dataclass(frozen=True)
class SymbolPoint:
    r: float
    rho: float
    omega: float

    def __post_init__(self):
        if not self.r > 0:
            raise WeightError(f"symbol point needs r > 0, got {self.r}")
        if self.omega < 0:
            raise WeightError(f"symbol point needs omega >= 0, got {self.omega}")


def _require_radial(spec: WeightSpec):
    if not spec.radial:
        raise WeightError("unsupported variant: symbol analysis needs a radial weight")


def _symbol(spec, r, rho, omega):
    d1 = spec.dphi(r)
    return rho * rho - d1 * d1 + omega * omega / (r * r), 2.0 * rho * d1


def eval_symbol(spec: WeightSpec, pt: SymbolPoint) -> complex:
    """``p_phi(r, rho) = (rho + i phi'(r))^2 + omega^2 / r^2``."""
    _require_radial(spec)
    re, im = _symbol(spec, pt.r, pt.rho, pt.omega)
    return complex(float(re), float(im))


def quarter_bracket(spec: WeightSpec, r, rho, omega):
    """Vectorised ``(1/4){Re p_phi, Im p_phi}``."""
    _require_radial(spec)
    d1, d2 = spec.dphi(r), spec.d2phi(r)
    return rho * rho * d2 + (d1 * d2 + omega * omega / (r * r * r)) * d1


def bracket_closed_form(spec: WeightSpec, pt: SymbolPoint) -> float:
    return float(quarter_bracket(spec, pt.r, pt.rho, pt.omega))


def bracket_fd(spec: WeightSpec, pt: SymbolPoint, step: float = 1e-4) -> float:
    """Central-difference Poisson bracket of ``(Re p_phi, Im p_phi)``, divided by 4."""
    _require_radial(spec)
    if not (1e-6 <= step <= 1e-3):
        raise WeightError(f"step must lie in [1e-6, 1e-3], got {step}")
    r, rho, om = pt.r, pt.rho, pt.omega
    if r - step <= 0:
        raise WeightError("finite-difference stencil crosses r = 0")

    def part(k, r_, rho_):
        return _symbol(spec, r_, rho_, om)[k]

    def d_r(k):
        return (part(k, r + step, rho) - part(k, r - step, rho)) / (2 * step)

    def d_rho(k):
        return (part(k, r, rho + step) - part(k, r, rho - step)) / (2 * step)

    return float(d_rho(0) * d_r(1) - d_r(0) * d_rho(1)) / 4.0


@dataclass(frozen=True)
class HormanderReport:
    min_char_bracket: float
    arg_min: float
    floor: float
    radii: np.ndarray
    values: np.ndarray

    @property
    def passed(self) -> bool:
        return self.min_char_bracket >= self.floor


def hormander_scan(spec: WeightSpec, r_range, samples: int = 1000) -> HormanderReport:
    """Minimum quarter-bracket over the characteristic set ``rho = 0, omega = r |phi'(r)|``."""
    _require_radial(spec)
    r1, r2 = (float(v) for v in r_range)
    if not (0 < r1 <= r2) or samples < 1:
        raise WeightError(f"empty scan range {r_range} with {samples} samples")
    r = np.linspace(r1, r2, int(samples))
    omega = r * np.abs(spec.dphi(r))
    values = quarter_bracket(spec, r, 0.0, omega)
    k = int(np.argmin(values))
    return HormanderReport(float(values[k]), float(r[k]), spec.char_floor(r2), r, values)


@dataclass(frozen=True)
class SubellipticReport:
    variant: str
    c: float
    d: float
    box: tuple
    samples: int
    C: float
    argmin: tuple[float, float, float]

    @property
    def passed(self) -> bool:
        return self.C > 0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["box"] = [list(b) for b in self.box]
        out["argmin"] = list(self.argmin)
        out["pass"] = self.passed
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _axis_counts(samples: int) -> int:
    # odd counts make an 8x refinement (n -> 2n - 1) nest the coarse grid
    n = samples ** (1.0 / 3.0)
    return max(3, 2 * int(round((n - 1) / 2)) + 1)


def subelliptic_ratio(spec: WeightSpec, d: float, r, rho, omega):
    """``(8 * quarter_bracket + d |p_phi|^2) / (rho^2 + 1)^2``."""
    re, im = _symbol(spec, r, rho, omega)
    num = 8.0 * quarter_bracket(spec, r, rho, omega) + d * (re * re + im * im)
    return num / (rho * rho + 1.0) ** 2


def subelliptic_constant(
    spec: WeightSpec,
    d: float,
    box=((0.5, 2.0), (-5.0, 5.0), (0.0, 5.0)),
    samples: int = 100_000,
) -> SubellipticReport:
    """Infimum of ``(2{Re,Im} + d|p|^2) / (rho^2+1)^2`` on a tensor grid over ``box``.

    The grid has the odd count nearest ``samples^(1/3)`` per axis, box
    faces included, so refining by 8x nests the coarse points; ties go to
    the lowest flat index.
    """
    _require_radial(spec)
    if d < 0:
        raise WeightError(f"d must be >= 0, got {d}")
    n = _axis_counts(samples)
    axes = [np.linspace(lo, hi, n) for lo, hi in box]
    if axes[0][0] <= 0:
        raise WeightError("the radial range of the box must stay away from r = 0")
    R, P, W = np.meshgrid(*axes, indexing="ij")
    ratio = subelliptic_ratio(spec, d, R, P, W)
    k = int(np.argmin(ratio))
    return SubellipticReport(
        variant=spec.kind,
        c=spec.c,
        d=float(d),
        box=tuple(tuple(float(v) for v in b) for b in box),
        samples=n**3,
        C=float(ratio.flat[k]),
        argmin=(float(R.flat[k]), float(P.flat[k]), float(W.flat[k])),
    )


def find_certificate(spec: WeightSpec, box=((0.5, 2.0), (-5.0, 5.0), (0.0, 5.0)), samples=100_000, ladder=LOG_LADDER):
    """First ``d`` on the ladder with ``C > 0``; returns the report, or the last failure."""
    report = None
    for d in ladder:
        report = subelliptic_constant(spec, d, box, samples)
        if report.passed:
            break
    return report
