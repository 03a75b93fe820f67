"""Semiclassical Schrodinger operators and their Carleman conjugates.

``P_V - E = -h^2 Lap + V - E`` uses the stencils of :mod:`carleman_lab.grid`.
The conjugated operator ``P_phi = e^{phi/h} P e^{-phi/h}`` is applied edge
by edge: each neighbour coupling picks up ``exp((phi_i - phi_j) / h)``, a
bounded factor, so nothing of size ``e^{phi/h}`` is ever formed.  This is
the exact discrete conjugate, hence

* it agrees with the direct product ``e^{phi/h} P (e^{-phi/h} u)`` to
  rounding whenever the latter is representable, and
* its quadrature adjoint is ``e^{-phi/h} P e^{phi/h}``, i.e. the same
  stencil with ``phi -> -phi``.

A continuum-style expansion ``-h^2 Lap + 2h grad(phi).grad + h Lap(phi)
- |grad phi|^2 + V - E`` is also available (``form="expanded"``); it agrees
with the stencil form to second order in the grid spacing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .grid import (
    Grid,
    GridError,
    ScalarField,
    _check_same_grid,
    _polar_face_coeffs,
    divergence_values,
    gradient_values,
    laplacian_values,
)
from .potentials import MollifiedField

__all__ = [
    "SchrodingerOp",
    "ConjugatedOp",
    "OperatorError",
    "EigenError",
    "apply_schrodinger",
    "apply_conjugated",
    "apply_conjugated_direct",
    "commutator_form",
    "SeparationReport",
    "check_separation_lemma",
    "semiclassical_norm",
    "laplacian_matrix",
    "schrodinger_matrix",
    "eigen_near",
    "cutoff_commutator",
    "check_support",
    "interior_region",
]


class OperatorError(ValueError):
    pass


class EigenError(RuntimeError):
    def __init__(self, message: str, best_residual: float):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


@dataclass(frozen=True, eq=False)
class SchrodingerOp:
    """``-h^2 Lap + V - E``; ``V=None`` means the free operator."""

    grid: Grid
    h: float
    V: ScalarField | None = None
    E: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.h < 1.0):
            raise OperatorError(f"h must lie in (0, 1), got {self.h}")
        if self.V is not None:
            _check_same_grid(self.grid, self.V)
            if np.iscomplexobj(self.V.values):
                raise OperatorError("complex potentials are not supported")

    @cached_property
    def shifted_potential(self) -> np.ndarray:
        base = np.zeros(self.grid.shape) if self.V is None else self.V.values
        return base - self.E

    def with_energy(self, E: float) -> "SchrodingerOp":
        return SchrodingerOp(self.grid, self.h, self.V, E)


def _vals(grid: Grid, u: ScalarField) -> np.ndarray:
    _check_same_grid(grid, u)
    return u.values


def apply_schrodinger(op: SchrodingerOp, u: ScalarField) -> ScalarField:
    vals = _vals(op.grid, u)
    return ScalarField(
        op.grid, -op.h**2 * laplacian_values(op.grid, vals) + op.shifted_potential * vals
    )


@dataclass(frozen=True, eq=False)
class ConjugatedOp:
    base: SchrodingerOp
    phi: ScalarField

    def __post_init__(self):
        _check_same_grid(self.base.grid, self.phi)

    @classmethod
    def free(cls, grid: Grid, h: float, phi: ScalarField) -> "ConjugatedOp":
        return cls(SchrodingerOp(grid, h), phi)

    @property
    def grid(self) -> Grid:
        return self.base.grid

    @property
    def h(self) -> float:
        return self.base.h

    @cached_property
    def shift(self) -> np.ndarray:
        return self.phi.values / self.h

    @cached_property
    def grad_phi(self) -> tuple[np.ndarray, np.ndarray]:
        return gradient_values(self.grid, self.phi.values)

    @cached_property
    def lap_phi(self) -> np.ndarray:
        return laplacian_values(self.grid, self.phi.values)

    @cached_property
    def grad_phi_sq(self) -> np.ndarray:
        gx, gy = self.grad_phi
        return gx * gx + gy * gy

    def free_part(self) -> "ConjugatedOp":
        return ConjugatedOp(SchrodingerOp(self.grid, self.h), self.phi)


def apply_conjugated(
    op: ConjugatedOp, u: ScalarField, adjoint: bool = False, form: str = "stencil"
) -> ScalarField:
    """Apply ``P_phi`` (or its quadrature adjoint ``P_phi^*``) without forming ``e^{phi/h}``."""
    grid, h = op.grid, op.h
    vals = _vals(grid, u)
    pot = op.base.shifted_potential * vals
    if form == "stencil":
        s = -op.shift if adjoint else op.shift
        return ScalarField(grid, -h * h * laplacian_values(grid, vals, shift=s) + pot)
    if form != "expanded":
        raise OperatorError(f"unknown form {form!r}")
    gx, gy = op.grad_phi
    lap_u = laplacian_values(grid, vals)
    zeroth = h * op.lap_phi - op.grad_phi_sq
    if not adjoint:
        ux, uy = gradient_values(grid, vals)
        first = 2.0 * h * (gx * ux + gy * uy)
    elif grid.is_torus:
        first = -2.0 * h * divergence_values(grid, gx * vals, gy * vals)
    else:
        ux, uy = gradient_values(grid, vals)
        first = -2.0 * h * (gx * ux + gy * uy + op.lap_phi * vals)
    return ScalarField(grid, -h * h * lap_u + first + zeroth * vals + pot)


def apply_conjugated_direct(op: ConjugatedOp, u: ScalarField) -> ScalarField:
    """Reference path ``e^{phi/h} P (e^{-phi/h} u)`` with explicit exponentials."""
    s = op.shift
    if np.max(np.abs(s)) > 700:
        raise OperatorError("direct conjugation overflows: max |phi/h| exceeds 700")
    vals = _vals(op.grid, u)
    inner = ScalarField(op.grid, np.exp(-s) * vals)
    return ScalarField(op.grid, np.exp(s) * apply_schrodinger(op.base, inner).values)


# -- support handling -------------------------------------------------------


def interior_region(grid: Grid, mask: np.ndarray | None = None, layers: int = 3) -> np.ndarray:
    """Erode ``mask`` (default: whole grid) by ``layers`` 4-neighbour steps.

    Torus axes wrap.  On polar grids the angle wraps and the radial ends act
    as boundary; the disk centre is not a boundary.
    """
    region = np.ones(grid.shape, bool) if mask is None else np.asarray(mask, bool).copy()
    for _ in range(layers):
        nxt = region.copy()
        nxt &= np.roll(region, 1, 1) & np.roll(region, -1, 1)
        if grid.is_torus:
            nxt &= np.roll(region, 1, 0) & np.roll(region, -1, 0)
        else:
            up = np.zeros_like(region)
            up[:-1] = region[1:]
            down = np.zeros_like(region)
            down[1:] = region[:-1]
            if grid.r_inner == 0:
                down[0] = True
            nxt &= up & down
        region = nxt
    return region


def check_support(grid: Grid, u: ScalarField, region: np.ndarray | None = None, layers: int = 3) -> None:
    """Raise unless ``u`` vanishes outside ``region`` eroded by ``layers`` grid layers."""
    if region is None and grid.is_torus:
        return
    inside = interior_region(grid, region, layers)
    vals = np.abs(_vals(grid, u))
    scale = vals.max()
    if scale == 0:
        return
    leak = vals[~inside].max(initial=0.0)
    if leak > 1e-12 * scale:
        raise OperatorError(
            f"support violation: test function reaches the outer {layers} layers "
            f"(|u| = {leak:.3e} there)"
        )


# -- quadratic forms --------------------------------------------------------


def _norm_sq(grid: Grid, vals: np.ndarray) -> float:
    return float(np.sum(grid.weights * np.abs(vals) ** 2))


def commutator_form(op: ConjugatedOp, u: ScalarField, region: np.ndarray | None = None) -> float:
    """``<[P_phi^*, P_phi] u, u> = ||P_phi u||^2 - ||P_phi^* u||^2`` for the free part of ``op``."""
    check_support(op.grid, u, region)
    free = op.free_part()
    pu = apply_conjugated(free, u).values
    psu = apply_conjugated(free, u, adjoint=True).values
    return _norm_sq(op.grid, pu) - _norm_sq(op.grid, psu)


@dataclass(frozen=True)
class SeparationReport:
    lhs: float
    rhs: float
    margin: float
    commutator: float
    grad_bound: float

    @property
    def passed(self) -> bool:
        return self.margin >= -1e-9 * (1.0 + abs(self.lhs))


def _is_constant(V: ScalarField | None) -> bool:
    return V is None or bool(np.all(V.values == V.values.flat[0]))


def check_separation_lemma(
    base: SchrodingerOp,
    phi: ScalarField,
    u: ScalarField,
    grad_bound: float | None = None,
    region: np.ndarray | None = None,
) -> SeparationReport:
    """Check ``||P u||^2 / h >= <[P_phi^*, P_phi] u, u> / h - 4 ||grad V . grad phi|| ||u||^2``.

    ``P`` is the full conjugated operator (potential included) and
    ``P_phi`` its free part.  The sup norm defaults to the supremum over the
    support of ``u``, which is all the inequality needs.
    """
    op = ConjugatedOp(base, phi)
    V = base.V
    if not (isinstance(V, MollifiedField) or _is_constant(V)):
        raise OperatorError("the separation lemma needs a mollified (differentiable) potential")
    check_support(op.grid, u, region)
    h = op.h
    if grad_bound is None:
        if _is_constant(V):
            grad_bound = 0.0
        else:
            vx, vy = gradient_values(op.grid, V.values)
            gx, gy = op.grad_phi
            support = np.abs(u.values) > 0
            grad_bound = float(np.max(np.abs(vx * gx + vy * gy)[support], initial=0.0))
    lhs = _norm_sq(op.grid, apply_conjugated(op, u).values) / h
    comm = commutator_form(op, u, region)
    rhs = comm / h - 4.0 * grad_bound * _norm_sq(op.grid, u.values)
    return SeparationReport(lhs, rhs, lhs - rhs, comm, float(grad_bound))


def semiclassical_norm(u: ScalarField, h: float, grid: Grid | None = None) -> tuple[float, float]:
    """``(int |u|^2, int |u|^2 + h^2 |grad u|^2)``."""
    grid = u.grid if grid is None else grid
    vals = _vals(grid, u)
    gx, gy = gradient_values(grid, vals)
    l2 = _norm_sq(grid, vals)
    return l2, l2 + h * h * (_norm_sq(grid, gx) + _norm_sq(grid, gy))


def cutoff_commutator(chi: ScalarField, u: ScalarField, h: float) -> ScalarField:
    """``[-h^2 Lap, chi] u = -h^2 (Lap(chi u) - chi Lap u)``."""
    grid = chi.grid
    c, v = chi.values, _vals(grid, u)
    return ScalarField(
        grid, -h * h * (laplacian_values(grid, c * v) - c * laplacian_values(grid, v))
    )


# -- matrices and eigenpairs ------------------------------------------------


def laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    """Sparse matrix of :func:`grid.apply_laplacian` acting on C-ordered flattened fields."""
    n0, n1 = grid.shape
    idx = np.arange(grid.size).reshape(grid.shape)
    rows, cols, data = [], [], []

    def couple(mask_rows, nb_idx, coeff):
        rows.append(idx[mask_rows].ravel())
        cols.append(nb_idx[mask_rows].ravel())
        data.append(np.broadcast_to(coeff, idx.shape)[mask_rows].ravel())

    full = np.ones(grid.shape, bool)
    if grid.is_torus:
        dx, dy = grid.spacing
        diag = np.full(grid.shape, -2.0 / dx**2 - 2.0 / dy**2)
        for axis, step in ((0, dx), (1, dy)):
            for d in (1, -1):
                couple(full, np.roll(idx, d, axis), 1.0 / step**2)
    else:
        c_in, c_out = _polar_face_coeffs(grid)
        da = grid.spacing[1]
        r = grid.radii[:, None]
        ang = np.broadcast_to(1.0 / (r * da) ** 2, grid.shape)
        diag = -2.0 * ang.copy()
        for d in (1, -1):
            couple(full, np.roll(idx, d, 1), ang)
        cin = np.broadcast_to(c_in[:, None], grid.shape)
        cout = np.broadcast_to(c_out[:, None], grid.shape)
        m_in = full.copy()
        m_in[0] = False
        couple(m_in, np.roll(idx, 1, 0), cin)
        m_out = full.copy()
        m_out[-1] = False
        couple(m_out, np.roll(idx, -1, 0), cout)
        diag[1:] -= cin[1:]
        diag[:-1] -= cout[:-1]
        diag[-1] -= 2.0 * cout[-1]
        if grid.r_inner > 0:
            diag[0] -= 2.0 * cin[0]
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    data.append(diag.ravel())
    A = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.size, grid.size),
    )
    return A.tocsr()


def schrodinger_matrix(op: SchrodingerOp) -> sp.csr_matrix:
    L = laplacian_matrix(op.grid)
    return (-op.h**2 * L + sp.diags(op.shifted_potential.ravel())).tocsr()


def eigen_near(
    op: SchrodingerOp,
    E_target: float,
    count: int = 1,
    tol: float = 1e-8,
    seed: int = 0,
    maxiter: int | None = None,
) -> list[tuple[float, ScalarField]]:
    """Eigenpairs of ``-h^2 Lap + V`` nearest ``E_target`` by shift-invert Lanczos.

    ``op.E`` is ignored.  Eigenvectors are normalised in the quadrature norm
    and each satisfies ``||(P_V - lam) u|| <= tol ||u||``; results are sorted
    by distance to the target (ties by eigenvalue) and are deterministic for
    a fixed ``seed``.
    """
    if count < 1:
        raise OperatorError("count must be >= 1")
    if tol <= 0:
        raise OperatorError("tol must be positive")
    if not op.grid.is_torus:
        raise OperatorError("eigen_near needs the symmetric (torus) discretisation")
    A = schrodinger_matrix(op.with_energy(0.0))
    v0 = np.random.default_rng(seed).standard_normal(op.grid.size)
    try:
        lam, vecs = eigsh(A, k=count, sigma=E_target, which="LM", v0=v0, tol=0, maxiter=maxiter)
    except ArpackNoConvergence as exc:
        best = np.inf
        for lam_i, vec in zip(exc.eigenvalues, exc.eigenvectors.T):
            best = min(best, np.linalg.norm(A @ vec - lam_i * vec) / np.linalg.norm(vec))
        raise EigenError("shift-invert iteration did not converge", float(best)) from None
    order = sorted(range(len(lam)), key=lambda i: (abs(lam[i] - E_target), lam[i]))
    w = op.grid.weights.ravel()
    pairs = []
    for i in order:
        vec = vecs[:, i]
        # deterministic sign: largest-magnitude entry positive
        k = int(np.argmax(np.abs(vec)))
        vec = vec * np.sign(vec[k])
        vec = vec / math.sqrt(float(np.sum(w * vec * vec)))
        res = A @ vec - lam[i] * vec
        residual = math.sqrt(float(np.sum(w * res * res)))
        if residual > tol:
            raise EigenError(f"eigenpair near {lam[i]:.6g} misses the residual bound {tol}", residual)
        pairs.append((float(lam[i]), ScalarField(op.grid, vec.reshape(op.grid.shape))))
    return pairs
