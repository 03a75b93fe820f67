"""Discrete domains, quadrature, finite-difference calculus and cutoffs.

Two geometries are supported:

* ``torus``: a periodic rectangle ``[0, L_x) x [0, L_y)`` sampled at the
  vertices ``x_i = i * dx``.  Arrays are indexed ``[i, j]`` with ``x`` along
  axis 0.
* ``polar``: a disk or annulus sampled cell-centred in radius,
  ``r_j = r_inner + (j + 1/2) dr``, and uniformly in angle.  Arrays are
  indexed ``[j, k]`` with the radius along axis 0.  A disk grid never
  contains ``r = 0``.

Polar operators use homogeneous Dirichlet conditions on the radial faces
(the centre face of a disk carries zero flux and needs no condition).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

MIN_POINTS = 8

__all__ = [
    "Grid",
    "ScalarField",
    "Cutoff",
    "GridError",
    "build_grid",
    "apply_laplacian",
    "apply_gradient",
    "apply_divergence",
    "integrate",
    "inner",
    "make_cutoff",
    "smoothstep",
]


class GridError(ValueError):
    """Invalid grid construction or a field/grid mismatch."""


@dataclass(frozen=True)
class Grid:
    kind: str
    counts: tuple[int, int]
    extents: tuple[float, float]
    r_inner: float = 0.0

    def __post_init__(self):
        if self.kind not in ("torus", "polar"):
            raise GridError(f"kind: unknown grid kind {self.kind!r}")
        n0, n1 = self.counts
        names = ("n_x", "n_y") if self.kind == "torus" else ("n_r", "n_ang")
        for name, n in zip(names, (n0, n1)):
            if int(n) != n:
                raise GridError(f"{name}: point count must be an integer, got {n!r}")
            if n < MIN_POINTS:
                raise GridError(f"{name}: counts below minimum ({n} < {MIN_POINTS})")
        if self.kind == "torus":
            for name, ext in zip(("L_x", "L_y"), self.extents):
                if not (ext > 0 and math.isfinite(ext)):
                    raise GridError(f"{name}: extent must be positive, got {ext!r}")
        else:
            r_outer = self.extents[0]
            if not (self.r_inner >= 0 and math.isfinite(self.r_inner)):
                raise GridError(f"r_inner: must be >= 0, got {self.r_inner!r}")
            if not (r_outer > 0 and math.isfinite(r_outer)):
                raise GridError(f"r_outer: extent must be positive, got {r_outer!r}")
            if self.r_inner >= r_outer:
                raise GridError(
                    f"r_inner: must be below r_outer ({self.r_inner} >= {r_outer})"
                )

    # -- geometry -----------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.counts[0]), int(self.counts[1]))

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def is_torus(self) -> bool:
        return self.kind == "torus"

    @property
    def r_outer(self) -> float:
        if self.is_torus:
            raise GridError("r_outer is only defined on polar grids")
        return self.extents[0]

    @cached_property
    def spacing(self) -> tuple[float, float]:
        """``(dx, dy)`` on a torus, ``(dr, dangle)`` on a polar grid."""
        n0, n1 = self.shape
        if self.is_torus:
            return (self.extents[0] / n0, self.extents[1] / n1)
        return ((self.r_outer - self.r_inner) / n0, 2.0 * math.pi / n1)

    @cached_property
    def min_spacing(self) -> float:
        """Smallest physical distance between neighbouring points."""
        if self.is_torus:
            return min(self.spacing)
        dr, da = self.spacing
        return min(dr, float(self.radii[0]) * da)

    @cached_property
    def radii(self) -> np.ndarray:
        if self.is_torus:
            raise GridError("radii are only defined on polar grids")
        dr = self.spacing[0]
        return self.r_inner + (np.arange(self.shape[0]) + 0.5) * dr

    @cached_property
    def angles(self) -> np.ndarray:
        if self.is_torus:
            raise GridError("angles are only defined on polar grids")
        return np.arange(self.shape[1]) * self.spacing[1]

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Cartesian coordinates of every grid point, each of shape ``grid.shape``.

        Polar grids are centred on the origin.
        """
        if self.is_torus:
            dx, dy = self.spacing
            x = np.arange(self.shape[0]) * dx
            y = np.arange(self.shape[1]) * dy
            X, Y = np.meshgrid(x, y, indexing="ij")
        else:
            R, A = np.meshgrid(self.radii, self.angles, indexing="ij")
            X, Y = R * np.cos(A), R * np.sin(A)
        X.flags.writeable = False
        Y.flags.writeable = False
        return X, Y

    @cached_property
    def weights(self) -> np.ndarray:
        """Per-point quadrature weights (rectangle rule on the torus, midpoint in r)."""
        if self.is_torus:
            dx, dy = self.spacing
            w = np.full(self.shape, dx * dy)
        else:
            dr, da = self.spacing
            w = np.repeat((self.radii * dr * da)[:, None], self.shape[1], axis=1)
        w.flags.writeable = False
        return w

    @property
    def area(self) -> float:
        if self.is_torus:
            return self.extents[0] * self.extents[1]
        return math.pi * (self.r_outer**2 - self.r_inner**2)

    def distance_from(self, center=(0.0, 0.0)) -> np.ndarray:
        """Euclidean distance of every point from ``center`` (minimum image on a torus)."""
        X, Y = self.coords
        dx = X - center[0]
        dy = Y - center[1]
        if self.is_torus:
            Lx, Ly = self.extents
            dx = dx - Lx * np.round(dx / Lx)
            dy = dy - Ly * np.round(dy / Ly)
        return np.hypot(dx, dy)

    def field(self, values, *, copy: bool = True) -> "ScalarField":
        return ScalarField(self, np.array(values, copy=copy))

    def constant(self, value: float) -> "ScalarField":
        return ScalarField(self, np.full(self.shape, float(value)))

    def __repr__(self):
        if self.is_torus:
            return f"Grid(torus, {self.shape[0]}x{self.shape[1]}, L={self.extents})"
        return (
            f"Grid(polar, {self.shape[0]}x{self.shape[1]}, "
            f"r=[{self.r_inner}, {self.r_outer}])"
        )


def build_grid(kind: str, counts, extents, r_inner: float = 0.0) -> Grid:
    """Construct a grid.

    ``counts`` and ``extents`` may be scalars (square torus) or pairs.  For a
    polar grid ``counts = (n_r, n_ang)`` and ``extents`` is ``r_outer`` or the
    pair ``(r_inner, r_outer)``.

    >>> build_grid("torus", 8, 1.0).spacing
    (0.125, 0.125)
    """
    if np.isscalar(counts):
        counts = (counts, counts)
    counts = tuple(int(c) if float(c).is_integer() else c for c in counts)
    if kind == "polar":
        if np.isscalar(extents):
            extents = (float(extents),)
        else:
            extents = tuple(float(e) for e in extents)
            if len(extents) == 2:
                r_inner, extents = extents[0], (extents[1],)
        return Grid("polar", counts, (extents[0], 0.0), float(r_inner))
    if np.isscalar(extents):
        extents = (extents, extents)
    return Grid(kind, counts, tuple(float(e) for e in extents))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Samples of a real or complex function, one per grid point."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.dtype.kind not in "fc":
            vals = vals.astype(float)
        if vals.shape != self.grid.shape:
            raise GridError(
                f"field has shape {vals.shape}, grid expects {self.grid.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise GridError("field contains non-finite values")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def _wrap(self, other):
        if isinstance(other, ScalarField):
            _check_same_grid(self.grid, other)
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._wrap(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._wrap(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._wrap(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True, eq=False)
class Cutoff(ScalarField):
    """A cutoff field; ``under_resolved`` flags a transition thinner than 4 spacings."""

    under_resolved: bool = False


def _check_same_grid(grid: Grid, u: ScalarField) -> None:
    if not isinstance(u, ScalarField):
        raise GridError(f"expected a ScalarField, got {type(u).__name__}")
    if u.grid != grid:
        raise GridError(f"field lives on {u.grid!r}, operation expects {grid!r}")


def _values(grid: Grid, u) -> np.ndarray:
    _check_same_grid(grid, u)
    return u.values


# -- stencils ---------------------------------------------------------------


def _polar_face_coeffs(grid: Grid):
    """Radial flux coefficients of the conservative polar Laplacian.

    Returns ``(c_in, c_out)``, each of length ``n_r``: the coefficient
    multiplying ``u[j-1] - u[j]`` and ``u[j+1] - u[j]``.  Boundary faces
    use a ghost value ``-u`` (zero on the face); the disk centre face has
    zero radius and so zero flux.
    """
    dr = grid.spacing[0]
    r = grid.radii
    r_lo = r - 0.5 * dr
    r_hi = r + 0.5 * dr
    c_in = r_lo / (r * dr * dr)
    c_out = r_hi / (r * dr * dr)
    return c_in, c_out


def laplacian_values(grid: Grid, u: np.ndarray, shift: np.ndarray | None = None) -> np.ndarray:
    """Discrete Laplacian of a raw array, optionally conjugated.

    With ``shift = s`` this returns ``e^{s} Lap(e^{-s} u)`` evaluated edge by
    edge, so only the bounded differences ``s_i - s_j`` are exponentiated.
    """
    if grid.is_torus:
        dx, dy = grid.spacing
        if shift is None:
            return (
                (np.roll(u, 1, 0) + np.roll(u, -1, 0) - 2.0 * u) / dx**2
                + (np.roll(u, 1, 1) + np.roll(u, -1, 1) - 2.0 * u) / dy**2
            )
        out = np.zeros_like(u)
        for axis, step in ((0, dx), (1, dy)):
            for direction in (1, -1):
                nb_u = np.roll(u, direction, axis)
                nb_s = np.roll(shift, direction, axis)
                out += (np.exp(shift - nb_s) * nb_u - u) / step**2
        return out

    c_in, c_out = _polar_face_coeffs(grid)
    da = grid.spacing[1]
    r = grid.radii[:, None]
    n_r = grid.shape[0]
    s = np.zeros_like(u, dtype=float) if shift is None else shift

    def edge(nb_u, nb_s, own_s):
        return np.exp(own_s - nb_s) * nb_u if shift is not None else nb_u

    out = np.zeros_like(u)
    # angular (periodic)
    for direction in (1, -1):
        out += (edge(np.roll(u, direction, 1), np.roll(s, direction, 1), s) - u) / (r * da) ** 2
    # radial interior faces
    inner = edge(u[:-1], s[:-1], s[1:])
    out[1:] += c_in[1:, None] * (inner - u[1:])
    outer = edge(u[1:], s[1:], s[:-1])
    out[:-1] += c_out[:-1, None] * (outer - u[:-1])
    # boundary faces: ghost value -u (Dirichlet on the face)
    out[n_r - 1] += c_out[n_r - 1] * (-2.0 * u[n_r - 1])
    if grid.r_inner > 0:
        out[0] += c_in[0] * (-2.0 * u[0])
    return out


def apply_laplacian(grid: Grid, u: ScalarField) -> ScalarField:
    """Second-order discrete Laplacian ``Lap u`` (not ``-Lap u``).

    Torus: periodic 5-point stencil.  Polar: conservative form of
    ``u_rr + u_r / r + u_aa / r^2`` with Dirichlet radial faces.
    """
    return ScalarField(grid, laplacian_values(grid, _values(grid, u)))


def gradient_values(grid: Grid, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if grid.is_torus:
        dx, dy = grid.spacing
        gx = (np.roll(u, -1, 0) - np.roll(u, 1, 0)) / (2.0 * dx)
        gy = (np.roll(u, -1, 1) - np.roll(u, 1, 1)) / (2.0 * dy)
        return gx, gy
    dr, da = grid.spacing
    gr = np.empty_like(u)
    gr[1:-1] = (u[2:] - u[:-2]) / (2.0 * dr)
    # second-order one-sided rows at the radial ends
    gr[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * dr)
    gr[-1] = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * dr)
    ga = (np.roll(u, -1, 1) - np.roll(u, 1, 1)) / (2.0 * da * grid.radii[:, None])
    return gr, ga


def apply_gradient(grid: Grid, u: ScalarField) -> tuple[ScalarField, ScalarField]:
    """Centred-difference gradient.

    Torus: ``(d/dx, d/dy)``.  Polar: ``(d/dr, (1/r) d/dangle)`` in the
    orthonormal polar frame.
    """
    gx, gy = gradient_values(grid, _values(grid, u))
    return ScalarField(grid, gx), ScalarField(grid, gy)


def divergence_values(grid: Grid, fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
    """Negative adjoint of the torus gradient: ``<grad u, F> = -<u, div F>`` exactly."""
    if not grid.is_torus:
        raise GridError("the exact discrete divergence is only provided on the torus")
    dx, dy = grid.spacing
    return (np.roll(fx, -1, 0) - np.roll(fx, 1, 0)) / (2.0 * dx) + (
        np.roll(fy, -1, 1) - np.roll(fy, 1, 1)
    ) / (2.0 * dy)


def apply_divergence(grid: Grid, fx: ScalarField, fy: ScalarField) -> ScalarField:
    return ScalarField(grid, divergence_values(grid, _values(grid, fx), _values(grid, fy)))


def integrate(grid: Grid, u: ScalarField):
    """Quadrature ``sum(weights * values)``; complex fields give a complex result."""
    vals = _values(grid, u)
    total = np.sum(grid.weights * vals)
    return complex(total) if np.iscomplexobj(total) else float(total)


def inner(grid: Grid, u: ScalarField, v: ScalarField):
    """Quadrature inner product ``<u, v> = sum w * u * conj(v)``."""
    total = np.sum(grid.weights * _values(grid, u) * np.conj(_values(grid, v)))
    return complex(total) if np.iscomplexobj(total) else float(total)


# -- cutoffs ----------------------------------------------------------------


def smoothstep(s):
    """Quintic ``6s^5 - 15s^4 + 10s^3`` clipped to [0, 1]; C^2 at both seams.

    Its derivative peaks at ``s = 1/2`` with value 15/8.
    """
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (s * (6.0 * s - 15.0) + 10.0)


def make_cutoff(grid: Grid, r_zero: float, r_one: float, center=(0.0, 0.0)) -> Cutoff:
    """Radial cutoff equal to 0 within ``r_zero`` of ``center`` and 1 beyond ``r_one``."""
    if not (0.0 <= r_zero < r_one):
        raise GridError(f"r_zero: need 0 <= r_zero < r_one, got {r_zero}, {r_one}")
    reach = max(grid.extents) if grid.is_torus else 2.0 * grid.r_outer
    if r_one > reach:
        raise GridError(f"r_one: {r_one} exceeds the grid extent {reach}")
    dist = grid.distance_from(center)
    chi = smoothstep((dist - r_zero) / (r_one - r_zero))
    under = (r_one - r_zero) < 4.0 * grid.min_spacing
    if under:
        warnings.warn("cutoff transition thinner than 4 grid spacings", stacklevel=2)
    return Cutoff(grid, chi, under_resolved=under)
