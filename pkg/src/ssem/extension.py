"""Minimal ``H^p`` periodic extension of data known on the interior nodes.

The constraint is plain restriction to ``Omega^m``; its transpose is extension
by zero.  Either solve path applies unchanged.
"""

from __future__ import annotations

import itertools
from math import factorial
from typing import Optional

import numpy as np

from .constraints import ConstraintSystem, InteriorOperator
from .errors import DataError, DimensionError, OutOfRangeError
from .geometry import Domain, InteriorIndexSet, classify_interior
from .torus import Grid, derivative_symbol, forward

__all__ = ["SEMINORM_METHODS", "extend", "extension_system", "sobolev_seminorm"]


def extension_system(grid: Grid, interior: InteriorIndexSet, values) -> ConstraintSystem:
    values = np.asarray(values, dtype=float)
    if values.shape != (interior.count,):
        raise DimensionError(f"expected {interior.count} interior values, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise DataError("extension data has non-finite values")
    return ConstraintSystem(grid, interior, InteriorOperator.restriction(grid.d), rhs=values)


def extend(
    values,
    p: int,
    solver: str = "qr",
    grid: Optional[Grid] = None,
    domain: Optional[Domain] = None,
    interior: Optional[InteriorIndexSet] = None,
    **solver_kwargs,
) -> np.ndarray:
    """Extend interior values to the whole box, minimizing ``||S_p^{1/2} u||``.

    ``values`` is either a vector ordered like ``interior.flat`` or a callable
    taking one coordinate array per axis.  Give ``interior`` directly or a
    ``domain`` to classify on ``grid``.
    """
    if grid is None:
        raise ValueError("a grid is required")
    if interior is None:
        if domain is None:
            raise ValueError("give either the interior index set or the domain")
        interior = classify_interior(grid, domain)
    if callable(values):
        values = np.broadcast_to(np.asarray(values(*interior.points.T), dtype=float), (interior.count,))
    sys = extension_system(grid, interior, values)
    if solver == "qr":
        from .solver_qr import solve_qr

        return solve_qr(sys, p, **solver_kwargs).u
    if solver == "pcg":
        from .solver_pcg import pcg_solve

        return pcg_solve(sys, p, **solver_kwargs).u
    raise ValueError(f"solver must be 'qr' or 'pcg', got {solver!r}")


def _multi_indices(d, s):
    for alpha in itertools.product(range(s + 1), repeat=d):
        if sum(alpha) == s:
            yield alpha


SEMINORM_METHODS = ("spectral", "central")


def _central_symbol(grid, alpha):
    """Multiplier of repeated periodic central differences ``(u[j+1] - u[j-1]) / 2s``."""
    sym = np.ones((1,) * grid.d, dtype=complex)
    for k, o in zip(grid.frequencies(True), alpha):
        if o:
            sym = sym * (1j * np.sin(k * grid.spacing) / grid.spacing) ** o
    return sym


def sobolev_seminorm(f, grid: Grid, s: int, method: str = "spectral") -> float:
    """``L2`` norm over the box of the ``s``-th gradient tensor of a grid field.

    The tensor norm sums all ``s``-th partials with multinomial weights.  With
    ``method="spectral"`` each partial uses the same spectral multiplier as the
    derivative operators, so the value equals the grid sum of squared spectral
    derivatives times the cell volume.  ``method="central"`` differentiates with
    repeated periodic central differences instead, which damps the
    grid-scale modes of fields with limited smoothness.
    """
    if int(s) != s or not 0 <= s <= 4:
        raise OutOfRangeError(f"seminorm order must be in 0..4, got {s}")
    if method not in SEMINORM_METHODS:
        raise ValueError(f"method must be one of {SEMINORM_METHODS}, got {method!r}")
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise DimensionError(f"field shape {f.shape} does not match grid {grid.shape}")
    spec = forward(f, grid)
    power = np.abs(spec) ** 2
    # rfft halves the spectrum: double the modes whose conjugate is not stored
    weights = np.full(spec.shape[-1], 2.0)
    weights[0] = 1.0
    if grid.m % 2 == 0:
        weights[-1] = 1.0
    total = 0.0
    for alpha in _multi_indices(grid.d, int(s)):
        mult = factorial(s)
        for a in alpha:
            mult //= factorial(a)
        if not s:
            sym = 1.0
        elif method == "spectral":
            sym = derivative_symbol(grid, alpha)
        else:
            sym = _central_symbol(grid, alpha)
        total += mult * float(np.sum(weights * np.abs(sym) ** 2 * power))
    return float(np.sqrt(total * grid.cell_volume / grid.n_nodes))
