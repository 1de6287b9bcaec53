"""The stacked constraint operator ``C = [A; B]``, its transpose and right-hand side.

``A`` evaluates a second-order operator at interior grid nodes (spectral
derivatives on the whole box, then restriction, then coefficients).  ``B``
evaluates the trace or the outward normal derivative of the trigonometric
interpolant at the off-grid boundary points.  Multiplier vectors and right-hand
sides are always ordered ``(interior block, boundary block)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .errors import DataError, DimensionError, TooLargeForDenseError, UnsupportedOrderError
from .geometry import BoundaryDiscretization, Domain, InteriorIndexSet, classify_interior
from .torus import Grid, TrigInterpolator, derivative_symbol, forward, inverse

__all__ = [
    "BoundaryCondition",
    "ConstraintSystem",
    "DEFAULT_MAX_ENTRIES",
    "InteriorOperator",
    "Term",
    "apply_A",
    "apply_B",
    "apply_C",
    "apply_C_transpose",
    "assemble_explicit",
    "assemble_rhs",
    "build_system",
]

# 3.2 GB of float64: the largest explicit matrix we are willing to form
DEFAULT_MAX_ENTRIES = 400_000_000

Coefficient = Union[float, Callable[..., np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Term:
    """One term ``coefficient(x) * d^orders u`` of the interior operator."""

    coefficient: Coefficient
    orders: tuple


@dataclass(frozen=True)
class InteriorOperator:
    terms: tuple

    def __post_init__(self):
        terms = tuple(t if isinstance(t, Term) else Term(*t) for t in self.terms)
        if not terms:
            raise ValueError("interior operator needs at least one term")
        dims = {len(t.orders) for t in terms}
        if len(dims) != 1:
            raise DimensionError("all terms must have the same number of derivative orders")
        for t in terms:
            if any(o < 0 for o in t.orders) or sum(t.orders) > 2:
                raise UnsupportedOrderError(f"term orders {t.orders} exceed total order 2")
        object.__setattr__(self, "terms", terms)

    @property
    def d(self) -> int:
        return len(self.terms[0].orders)

    @property
    def order(self) -> int:
        return max(sum(t.orders) for t in self.terms)

    @classmethod
    def negative_laplacian(cls, d: int) -> "InteriorOperator":
        return cls(tuple(Term(-1.0, tuple(2 if b == a else 0 for b in range(d))) for a in range(d)))

    @classmethod
    def restriction(cls, d: int) -> "InteriorOperator":
        """Plain evaluation at interior nodes; the constraint of the extension problem."""
        return cls((Term(1.0, (0,) * d),))


class BoundaryCondition(enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


def _coefficient_values(coef, points):
    if callable(coef):
        vals = coef(*points.T)
    else:
        vals = coef
    vals = np.broadcast_to(np.asarray(vals, dtype=float), (points.shape[0],))
    if not np.all(np.isfinite(vals)):
        raise DataError("operator coefficient is not finite at some interior node")
    return vals


class ConstraintSystem:
    """Constraint operator and data for one problem on one grid.

    Treated as immutable after construction.  All ``apply_*`` methods accept
    leading batch axes.
    """

    def __init__(
        self,
        grid: Grid,
        interior: InteriorIndexSet,
        operator: InteriorOperator,
        boundary: Optional[BoundaryDiscretization] = None,
        bc: Optional[BoundaryCondition] = BoundaryCondition.DIRICHLET,
        domain: Optional[Domain] = None,
        rhs=None,
    ):
        if operator.d != grid.d:
            raise DimensionError(f"operator is {operator.d}D but grid is {grid.d}D")
        self.grid = grid
        self.domain = domain
        self.interior = interior
        self.operator = operator
        self.boundary = boundary if boundary is not None and boundary.count else None
        self.bc = bc if self.boundary is not None else None
        self.n_interior = interior.count
        self.n_boundary = 0 if self.boundary is None else self.boundary.count
        self.n_constraints = self.n_interior + self.n_boundary
        if self.n_constraints >= grid.n_nodes:
            raise DimensionError(
                f"{self.n_constraints} constraints on {grid.n_nodes} nodes: system is not under-determined"
            )
        self._groups = self._build_groups()
        self._interp = None if self.boundary is None else TrigInterpolator(grid, self.boundary.points)
        if self.bc is BoundaryCondition.NEUMANN:
            self._grad_symbols = [
                derivative_symbol(grid, tuple(int(b == a) for b in range(grid.d))) for a in range(grid.d)
            ]
        if rhs is None:
            rhs = np.zeros(self.n_constraints)
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != (self.n_constraints,):
            raise DimensionError(f"rhs has shape {rhs.shape}, expected ({self.n_constraints},)")
        self.rhs = rhs

    def _build_groups(self):
        """Merge constant-coefficient terms into a single multiplier."""
        grid, pts = self.grid, self.interior.points
        const_sym = None
        groups = []
        for t in self.operator.terms:
            sym = derivative_symbol(grid, t.orders)
            if np.isscalar(t.coefficient):
                c = float(t.coefficient)
                const_sym = c * sym if const_sym is None else const_sym + c * sym
            else:
                groups.append((_coefficient_values(t.coefficient, pts), sym))
        if const_sym is not None:
            groups.insert(0, (None, const_sym))
        return groups

    def with_rhs(self, rhs) -> "ConstraintSystem":
        new = object.__new__(ConstraintSystem)
        new.__dict__.update(self.__dict__)
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != (self.n_constraints,):
            raise DimensionError(f"rhs has shape {rhs.shape}, expected ({self.n_constraints},)")
        new.rhs = rhs
        return new

    def split(self, lam):
        lam = np.asarray(lam, dtype=float)
        if lam.shape[-1:] != (self.n_constraints,):
            raise DimensionError(f"expected {self.n_constraints} multipliers, got shape {lam.shape}")
        return lam[..., : self.n_interior], lam[..., self.n_interior :]

    # forward operator -------------------------------------------------

    def apply_A_spectrum(self, uhat) -> np.ndarray:
        flat = self.interior.flat
        batch = uhat.shape[: uhat.ndim - self.grid.d]
        out = np.zeros(batch + (self.n_interior,))
        for coef, sym in self._groups:
            vals = inverse(sym * uhat, self.grid).reshape(batch + (-1,))[..., flat]
            out += vals if coef is None else coef * vals
        return out

    def apply_B_spectrum(self, uhat) -> np.ndarray:
        batch = uhat.shape[: uhat.ndim - self.grid.d]
        if self.boundary is None:
            return np.zeros(batch + (0,))
        if self.bc is BoundaryCondition.DIRICHLET:
            return self._interp.evaluate(inverse(uhat, self.grid))
        nu = self.boundary.normals
        out = np.zeros(batch + (self.n_boundary,))
        for a, sym in enumerate(self._grad_symbols):
            out += nu[:, a] * self._interp.evaluate(inverse(sym * uhat, self.grid))
        return out

    def apply_C_spectrum(self, uhat) -> np.ndarray:
        return np.concatenate([self.apply_A_spectrum(uhat), self.apply_B_spectrum(uhat)], axis=-1)

    def apply_A(self, u) -> np.ndarray:
        return self.apply_A_spectrum(forward(self._check(u), self.grid))

    def apply_B(self, u) -> np.ndarray:
        return self.apply_B_spectrum(forward(self._check(u), self.grid))

    def apply_C(self, u) -> np.ndarray:
        return self.apply_C_spectrum(forward(self._check(u), self.grid))

    # transpose --------------------------------------------------------

    def ct_spectrum(self, lam) -> np.ndarray:
        """Real-FFT spectrum of ``C^T lam``; zero blocks are skipped."""
        lam_a, lam_b = self.split(lam)
        grid = self.grid
        batch = lam.shape[:-1]
        spec_shape = batch + grid.shape[:-1] + (grid.m // 2 + 1,)
        spec = np.zeros(spec_shape, dtype=complex)
        if np.any(lam_a):
            for coef, sym in self._groups:
                field = np.zeros(batch + (grid.n_nodes,))
                field[..., self.interior.flat] = lam_a if coef is None else coef * lam_a
                spec += np.conj(sym) * forward(field.reshape(batch + grid.shape), grid)
        if self.boundary is not None and np.any(lam_b):
            if self.bc is BoundaryCondition.DIRICHLET:
                spec += forward(self._interp.adjoint(lam_b), grid)
            else:
                nu = self.boundary.normals
                for a, sym in enumerate(self._grad_symbols):
                    spec += np.conj(sym) * forward(self._interp.adjoint(nu[:, a] * lam_b), grid)
        return spec

    def apply_C_transpose(self, lam) -> np.ndarray:
        return inverse(self.ct_spectrum(lam), self.grid)

    def _check(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape[u.ndim - self.grid.d :] != self.grid.shape:
            raise DimensionError(f"field shape {u.shape} does not match grid {self.grid.shape}")
        return u


def apply_A(sys: ConstraintSystem, u) -> np.ndarray:
    return sys.apply_A(u)


def apply_B(sys: ConstraintSystem, u) -> np.ndarray:
    return sys.apply_B(u)


def apply_C(sys: ConstraintSystem, u) -> np.ndarray:
    return sys.apply_C(u)


def apply_C_transpose(sys: ConstraintSystem, lam) -> np.ndarray:
    return sys.apply_C_transpose(lam)


def assemble_rhs(sys: ConstraintSystem, f, g=None) -> np.ndarray:
    """Sample ``f`` at interior nodes and ``g`` at boundary points, interior first.

    ``f`` and ``g`` take one coordinate array per axis.
    """
    pts = sys.interior.points
    fv = np.broadcast_to(np.asarray(f(*pts.T), dtype=float), (sys.n_interior,))
    parts = [fv]
    if sys.n_boundary:
        if g is None:
            raise DataError("boundary data g is required when the system has boundary points")
        bp = sys.boundary.points
        parts.append(np.broadcast_to(np.asarray(g(*bp.T), dtype=float), (sys.n_boundary,)))
    b = np.concatenate(parts)
    if not np.all(np.isfinite(b)):
        raise DataError("right-hand side has non-finite samples")
    return b


def build_system(
    grid: Grid,
    domain: Domain,
    operator: InteriorOperator,
    boundary: BoundaryDiscretization,
    bc: BoundaryCondition = BoundaryCondition.DIRICHLET,
    f=None,
    g=None,
) -> ConstraintSystem:
    """Classify interior nodes and assemble the boundary value problem's constraints."""
    if operator.order < 2:
        raise UnsupportedOrderError("a boundary value problem needs a second-order interior operator")
    interior = classify_interior(grid, domain)
    sys = ConstraintSystem(grid, interior, operator, boundary, BoundaryCondition(bc), domain)
    if f is not None:
        sys = sys.with_rhs(assemble_rhs(sys, f, g))
    return sys


def assemble_explicit(
    op, n_cols: int, n_rows: int, max_entries: int = DEFAULT_MAX_ENTRIES, block: int = 64, order: str = "C"
) -> np.ndarray:
    """Dense matrix whose column ``i`` is ``op(e_i)``.

    ``op`` receives a ``(b, n_cols)`` stack of basis vectors and must return
    ``b`` results, each flattening to ``n_rows`` values.
    """
    if n_rows * n_cols > max_entries:
        raise TooLargeForDenseError(
            f"explicit {n_rows} x {n_cols} matrix exceeds the dense cap of {max_entries} entries; "
            "use the PCG solver"
        )
    out = np.empty((n_rows, n_cols), order=order)
    for start in range(0, n_cols, block):
        stop = min(start + block, n_cols)
        basis = np.zeros((stop - start, n_cols))
        basis[np.arange(stop - start), np.arange(start, stop)] = 1.0
        out[:, start:stop] = np.asarray(op(basis)).reshape(stop - start, n_rows).T
    return out
