"""Explicit-matrix solve: factor ``S^{-1/2} C^T = QR`` and form ``u = S^{-1/2} Q R^{-T} b``.

Only ``S^{-1/2}`` ever enters the factored matrix, which is what allows
smoother orders up to 10 before the multiplier underflows double precision.
The Householder reflectors stay packed in the factored matrix; ``Q`` is never
formed, so memory is one ``N_m x N_Lambda`` array.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .constraints import DEFAULT_MAX_ENTRIES, BoundaryCondition, ConstraintSystem, assemble_explicit
from .errors import RankDeficiencyWarning, TooLargeForDenseError, UnsupportedOrderError
from .torus import evaluate_offgrid, forward, inverse, smoother_symbol

__all__ = ["DENSE_NODE_CAP", "QrSolveReport", "smoothed_transpose_matrix", "solve_qr"]

DENSE_NODE_CAP = {1: 1 << 16, 2: 128**2, 3: 48**3}
RANK_TOL = 1e-14


@dataclass
class QrSolveReport:
    u: np.ndarray
    constraint_residual_inf: float
    smallest_R_diagonal: float
    assembly_seconds: float
    factor_seconds: float
    solve_seconds: float


def _check_order(p):
    if int(p) != p or not 0 <= p <= 10:
        raise UnsupportedOrderError(f"QR path supports smoother orders 0..10, got {p}")


def smoothed_transpose_matrix(sys: ConstraintSystem, p: int, max_entries: int = DEFAULT_MAX_ENTRIES) -> np.ndarray:
    """Explicit ``S_p^{-1/2} C^T`` of shape ``(N_m, N_Lambda)`` in Fortran order."""
    grid = sys.grid
    half = smoother_symbol(grid, p, "inverse_half")

    def op(basis):
        return inverse(half * sys.ct_spectrum(basis), grid)

    return assemble_explicit(op, sys.n_constraints, grid.n_nodes, max_entries=max_entries, order="F")


def solve_qr(
    sys: ConstraintSystem,
    p: int,
    b: Optional[np.ndarray] = None,
    max_entries: int = DEFAULT_MAX_ENTRIES,
    normalize: Optional[bool] = None,
) -> QrSolveReport:
    """Minimum ``S_p``-norm solution of ``C u = b`` through a thin QR factorization.

    ``p = 0`` drops the smoother and gives the plain minimum Euclidean norm
    solution.  Pure Neumann problems are normalized so the interpolant vanishes
    at the origin unless ``normalize=False``.
    """
    _check_order(p)
    grid = sys.grid
    if grid.n_nodes > DENSE_NODE_CAP[grid.d]:
        raise TooLargeForDenseError(
            f"{grid.n_nodes} grid nodes exceed the dense cap {DENSE_NODE_CAP[grid.d]} for d={grid.d}; "
            "use the PCG solver"
        )
    b = sys.rhs if b is None else np.asarray(b, dtype=float)
    n = sys.n_constraints

    t0 = time.perf_counter()
    mat = smoothed_transpose_matrix(sys, p, max_entries)
    t1 = time.perf_counter()

    lwork = max(1, int(lapack.dgeqrf_lwork(mat.shape[0], n)[0].real))
    qr, tau, _, info = lapack.dgeqrf(mat, lwork=lwork, overwrite_a=1)
    if info != 0:
        raise RuntimeError(f"dgeqrf failed with info={info}")
    del mat
    t2 = time.perf_counter()

    diag = np.abs(np.diag(qr[:n, :n]))
    smallest = float(diag.min()) if n else 0.0
    if n and smallest < RANK_TOL * diag.max():
        idx = int(np.argmin(diag))
        warnings.warn(
            RankDeficiencyWarning(f"|R[{idx},{idx}]| = {smallest:.3e} is negligible; constraints nearly dependent", idx),
            stacklevel=2,
        )
    y = solve_triangular(qr[:n, :n], b, trans="T", lower=False, check_finite=False)
    padded = np.zeros((grid.n_nodes, 1))
    padded[:n, 0] = y
    qy, _, info = lapack.dormqr("L", "N", qr, tau, padded, lwork=max(64, n), overwrite_c=1)
    if info != 0:
        raise RuntimeError(f"dormqr failed with info={info}")
    half = smoother_symbol(grid, p, "inverse_half")
    u = inverse(half * forward(qy[:, 0].reshape(grid.shape), grid), grid)
    t3 = time.perf_counter()

    residual = float(np.abs(sys.apply_C(u) - b).max(initial=0.0))
    if normalize is None:
        normalize = sys.bc is BoundaryCondition.NEUMANN
    if normalize:
        u = u - evaluate_offgrid(u, grid, np.zeros((1, grid.d)))[0]
    return QrSolveReport(
        u=u,
        constraint_residual_inf=residual,
        smallest_R_diagonal=smallest,
        assembly_seconds=t1 - t0,
        factor_seconds=t2 - t1,
        solve_seconds=t3 - t2,
    )
