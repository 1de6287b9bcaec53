"""Matrix-free solve of ``(C S_p^{-1} C^T) Lambda = b`` by preconditioned CG.

The preconditioner is block diagonal.  The interior block is a five/seven point
stencil version of ``(1 - Lap_Omega)^(p - q)`` on the interior nodes, with ``q``
the order of the interior operator, which brings ``A S_p^{-1} A^T`` back to
order zero.  The boundary block is the inverse of the dense matrix
``(2 pi/m)^d h(y_i - y_j)`` built from the tabulated fundamental solution of
``S_p`` (``S_{p-1}`` for Neumann data).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve, eigvalsh, eigvalsh_tridiagonal
from scipy.spatial import ConvexHull

from .constraints import BoundaryCondition, ConstraintSystem
from .errors import (
    BreakdownError,
    DimensionError,
    NonConvergenceError,
    PreconditionerFailure,
    UnsupportedOrderError,
)
from .geometry import InteriorIndexSet
from .kernel import KernelTable, build_kernel_table
from .torus import Grid, evaluate_offgrid, inverse, smoother_symbol

__all__ = [
    "BlockPreconditioner",
    "PcgReport",
    "STENCIL_CLOSURES",
    "apply_interior_preconditioner",
    "assemble_boundary_preconditioner",
    "boundary_kernel_matrix",
    "interior_stencil",
    "lanczos_condition",
    "normal_operator",
    "pcg",
    "pcg_solve",
]

PCG_ORDERS = (2, 3, 4)
SPD_RTOL = 1e-13


@dataclass
class PcgReport:
    u: np.ndarray
    multipliers: np.ndarray
    iterations: int
    final_relative_residual: float
    precond_build_seconds: float
    iterate_seconds: float
    condition_estimate: Optional[float] = None
    residual_history: list = field(default_factory=list)


STENCIL_CLOSURES = ("neumann", "dirichlet")


def interior_stencil(grid: Grid, interior: InteriorIndexSet, closure: str = "neumann") -> sp.csr_matrix:
    """Compact-stencil ``-Lap`` restricted to interior nodes.

    Neighbours outside the domain are dropped.  With ``closure="neumann"`` the
    diagonal counts only the interior neighbours (rows sum to zero, constants
    are in the kernel); ``"dirichlet"`` keeps the full ``2d/s^2``.
    """
    if closure not in STENCIL_CLOSURES:
        raise ValueError(f"closure must be one of {STENCIL_CLOSURES}, got {closure!r}")
    n = interior.count
    s2 = grid.spacing**2
    pos = np.full(grid.n_nodes, -1, dtype=np.int64)
    pos[interior.flat] = np.arange(n)
    idx = np.unravel_index(interior.flat, grid.shape)
    rows, cols, vals = [], [], []
    n_nb = np.zeros(n)
    for a in range(grid.d):
        for step in (-1, 1):
            shifted = list(idx)
            shifted[a] = np.mod(idx[a] + step, grid.m)
            nb = pos[np.ravel_multi_index(tuple(shifted), grid.shape)]
            keep = nb >= 0
            rows.append(np.arange(n)[keep])
            cols.append(nb[keep])
            vals.append(np.full(keep.sum(), -1.0 / s2))
            n_nb += keep
    diag = n_nb / s2 if closure == "neumann" else np.full(n, 2 * grid.d / s2)
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def apply_interior_preconditioner(
    lam_a, p: int, interior: InteriorIndexSet, grid: Grid, power: Optional[int] = None, closure: str = "neumann"
):
    """``(1 - Lap_Omega)^(p-2) lam_a`` with the stencil Laplacian; identity for ``p = 2``.

    ``power`` overrides the exponent ``p - 2`` (used when the interior operator
    is not second order).
    """
    if p > 4:
        raise UnsupportedOrderError(f"PCG supports p <= 4, got {p}")
    k = p - 2 if power is None else power
    out = np.asarray(lam_a, dtype=float)
    if k <= 0:
        return out.copy()
    op = sp.identity(interior.count, format="csr") + interior_stencil(grid, interior, closure)
    for _ in range(k):
        out = op @ out
    return out


def boundary_kernel_matrix(table: KernelTable, points, m: int) -> np.ndarray:
    """Symmetric ``(2 pi/m)^d h(y_i - y_j)`` from the interpolated kernel table."""
    pts = np.asarray(points, dtype=float)
    n, d = pts.shape
    if d != table.d:
        raise DimensionError(f"kernel table is {table.d}D but points are {d}D")
    diff = (pts[:, None, :] - pts[None, :, :]).reshape(-1, d)
    mat = table(diff).reshape(n, n) * (2 * np.pi / m) ** d
    return 0.5 * (mat + mat.T)


def assemble_boundary_preconditioner(table: KernelTable, points, m: int) -> np.ndarray:
    """Dense inverse of the boundary kernel matrix.

    Raises :class:`PreconditionerFailure` when the matrix is not numerically
    positive definite (points too close together for the kernel's smoothness).
    """
    mat = boundary_kernel_matrix(table, points, m)
    ev = eigvalsh(mat)
    if ev[0] <= SPD_RTOL * ev[-1]:
        raise PreconditionerFailure(
            f"boundary kernel matrix is not numerically positive definite "
            f"(eigenvalues {ev[0]:.2e} .. {ev[-1]:.2e}); lower the boundary point density"
        )
    return cho_solve(cho_factor(mat, lower=True), np.eye(mat.shape[0]))


class BlockPreconditioner:
    """``blockdiag(C1~^{-1}, C3~^{-1})`` acting on multiplier vectors."""

    def __init__(
        self,
        sys: ConstraintSystem,
        p: int,
        table: Optional[KernelTable] = None,
        cache_dir=None,
        closure: str = "neumann",
    ):
        if p not in PCG_ORDERS:
            raise UnsupportedOrderError(f"PCG supports smoother orders {PCG_ORDERS}, got {p}")
        self.n_interior = sys.n_interior
        self.power = p - sys.operator.order
        self.interior_op = None
        if self.power > 0:
            base = sp.identity(sys.n_interior, format="csr") + interior_stencil(sys.grid, sys.interior, closure)
            op = base
            for _ in range(self.power - 1):
                op = op @ base
            self.interior_op = op.tocsr()
        self.boundary_inv = None
        if sys.n_boundary:
            p_eff = p - 1 if sys.bc is BoundaryCondition.NEUMANN else p
            if table is None or table.p != p_eff or table.d != sys.grid.d:
                table = build_kernel_table(p_eff, sys.grid.d, cache_dir=cache_dir)
            self.table = table
            self.boundary_inv = assemble_boundary_preconditioner(table, sys.boundary.points, sys.grid.m)

    def __call__(self, r):
        ra, rb = r[: self.n_interior], r[self.n_interior :]
        za = ra.copy() if self.interior_op is None else self.interior_op @ ra
        zb = rb.copy() if self.boundary_inv is None else self.boundary_inv @ rb
        return np.concatenate([za, zb])


def normal_operator(sys: ConstraintSystem, p: int):
    """The map ``lam -> C S_p^{-1} C^T lam``."""
    sym = smoother_symbol(sys.grid, p, "inverse")

    def apply(lam):
        return sys.apply_C_spectrum(sym * sys.ct_spectrum(lam))

    return apply


def pcg(apply_a, b, precond, tol=1e-10, max_iter=500):
    """Preconditioned CG stopped on ``sqrt(r.Mr / b.Mb) <= tol``.

    Returns ``(x, history, alphas, betas)``; the coefficients give the Lanczos
    tridiagonal for condition estimates.
    """
    x = np.zeros_like(b)
    r = b.copy()
    z = precond(r)
    rz = float(r @ z)
    rz0 = rz
    history = [1.0]
    alphas, betas = [], []
    if rz0 == 0.0:
        return x, history, alphas, betas
    d = z.copy()
    for _ in range(max_iter):
        q = apply_a(d)
        dq = float(d @ q)
        if not np.isfinite(dq) or dq <= 0.0:
            raise BreakdownError(f"CG breakdown: d.Ad = {dq}")
        alpha = rz / dq
        x += alpha * d
        r -= alpha * q
        z = precond(r)
        rz_new = float(r @ z)
        if not np.isfinite(rz_new):
            raise BreakdownError("NaN in CG iterates")
        beta = rz_new / rz
        alphas.append(alpha)
        betas.append(beta)
        history.append(np.sqrt(max(rz_new, 0.0) / rz0))
        if history[-1] <= tol:
            return x, history, alphas, betas
        d = z + beta * d
        rz = rz_new
    raise NonConvergenceError(
        f"PCG did not reach tol={tol:g} in {max_iter} iterations (residual {history[-1]:.3e})", history
    )


def lanczos_condition(alphas, betas) -> Optional[float]:
    """Extreme Ritz values of the CG tridiagonal; ratio is a condition estimate."""
    k = len(alphas)
    if k == 0:
        return None
    a = np.asarray(alphas)
    bt = np.asarray(betas)
    diag = 1.0 / a
    diag[1:] += bt[:-1] / a[:-1]
    off = np.sqrt(bt[:-1]) / a[:-1]
    ev = eigvalsh_tridiagonal(diag, off)
    return float(ev[-1] / ev[0])


def _near_null_vector(sys: ConstraintSystem) -> np.ndarray:
    """Multipliers encoding the divergence theorem for pure Neumann data."""
    pts = sys.boundary.points
    if sys.grid.d == 2:
        closed = np.vstack([pts, pts[:1]])
        measure = np.linalg.norm(np.diff(closed, axis=0), axis=1).sum()
    else:
        measure = ConvexHull(pts).area
    v = np.concatenate(
        [np.full(sys.n_interior, sys.grid.cell_volume), np.full(sys.n_boundary, measure / sys.n_boundary)]
    )
    return v / np.linalg.norm(v)


def pcg_solve(
    sys: ConstraintSystem,
    p: int,
    tol: float = 1e-10,
    max_iter: int = 500,
    b: Optional[np.ndarray] = None,
    table: Optional[KernelTable] = None,
    cache_dir=None,
    estimate_condition: bool = True,
    normalize: Optional[bool] = None,
    closure: str = "neumann",
) -> PcgReport:
    """Minimum ``S_p``-norm solution of ``C u = b`` with ``p`` in ``{2, 3, 4}``."""
    if p not in PCG_ORDERS:
        raise UnsupportedOrderError(f"PCG supports smoother orders {PCG_ORDERS}, got {p}")
    b = sys.rhs if b is None else np.asarray(b, dtype=float)
    grid = sys.grid
    t0 = time.perf_counter()
    if not np.any(b):
        return PcgReport(
            u=np.zeros(grid.shape),
            multipliers=np.zeros(sys.n_constraints),
            iterations=0,
            final_relative_residual=0.0,
            precond_build_seconds=0.0,
            iterate_seconds=0.0,
            condition_estimate=None,
            residual_history=[0.0],
        )
    precond = BlockPreconditioner(sys, p, table=table, cache_dir=cache_dir, closure=closure)
    t1 = time.perf_counter()
    apply_a = normal_operator(sys, p)
    try:
        lam, history, alphas, betas = pcg(apply_a, b, precond, tol, max_iter)
    except NonConvergenceError:
        if sys.bc is not BoundaryCondition.NEUMANN:
            raise
        # stagnation on the compatibility direction: drop it from the data and retry
        v = _near_null_vector(sys)
        b = b - (v @ b) * v
        lam, history, alphas, betas = pcg(apply_a, b, precond, tol, max_iter)
    t2 = time.perf_counter()
    u = inverse(smoother_symbol(grid, p, "inverse") * sys.ct_spectrum(lam), grid)
    if normalize is None:
        normalize = sys.bc is BoundaryCondition.NEUMANN
    if normalize:
        u = u - evaluate_offgrid(u, grid, np.zeros((1, grid.d)))[0]
    return PcgReport(
        u=u,
        multipliers=lam,
        iterations=len(alphas),
        final_relative_residual=history[-1],
        precond_build_seconds=t1 - t0,
        iterate_seconds=t2 - t1,
        condition_estimate=lanczos_condition(alphas, betas) if estimate_condition else None,
        residual_history=history,
    )
