"""Uniform periodic grid on the box (-pi, pi)^d and Fourier-multiplier operators.

Fields are plain float arrays whose trailing ``d`` axes each have length ``m``.
Axis ``a`` of a field is coordinate ``a`` (``indexing='ij'``, C order) and node
``j`` along any axis sits at ``-pi + j * 2*pi/m``.  Any leading axes are a
batch dimension and are carried through every operator unchanged.

Transforms follow numpy: unnormalized forward sums, ``1/m**d`` on the inverse.
Frequencies are the integers ``{-m/2, ..., m/2 - 1}`` in FFT slot order
(``np.fft.fftfreq(m, 1/m)``); the real-transform layout keeps ``0..m/2`` on the
last axis.  Odd-order derivative multipliers vanish on the Nyquist mode of the
differentiated axis so that outputs stay real.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    DimensionError,
    InvalidSymbolError,
    OutOfDomainError,
    UnsupportedOrderError,
)

__all__ = [
    "Grid",
    "TrigInterpolator",
    "apply_symbol",
    "derivative_symbol",
    "evaluate_offgrid",
    "evaluate_offgrid_adjoint",
    "forward",
    "inverse",
    "partial_derivative",
    "smoother_apply",
    "smoother_symbol",
]

MAX_SMOOTHER_ORDER = 10


@dataclass(frozen=True)
class Grid:
    """Periodic grid with ``m`` nodes per axis in ``d`` dimensions."""

    d: int
    m: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise DimensionError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.m <= 0 or self.m % 2:
            raise DimensionError(f"m must be even and positive, got {self.m}")

    @property
    def spacing(self) -> float:
        return 2 * np.pi / self.m

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.m,) * self.d

    @property
    def n_nodes(self) -> int:
        return self.m**self.d

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.d, 0))

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.d

    def axis_nodes(self) -> np.ndarray:
        return -np.pi + self.spacing * np.arange(self.m)

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Full coordinate arrays, one per axis, each of shape ``self.shape``."""
        x = self.axis_nodes()
        return tuple(np.meshgrid(*([x] * self.d), indexing="ij"))

    def node_coordinates(self, flat_index) -> np.ndarray:
        """Coordinates of nodes given by C-order flat indices, shape ``(n, d)``."""
        idx = np.unravel_index(np.asarray(flat_index), self.shape)
        return np.stack([-np.pi + self.spacing * i for i in idx], axis=-1)

    def frequencies(self, real: bool = False) -> tuple[np.ndarray, ...]:
        """Integer frequency vectors as broadcastable per-axis arrays.

        With ``real=True`` the last axis uses the ``rfftn`` half layout.
        """
        return _frequencies(self.d, self.m, real)

    def wavenumber_sq(self, real: bool = True) -> np.ndarray:
        return _wavenumber_sq(self.d, self.m, real)


@lru_cache(maxsize=64)
def _frequencies(d, m, real):
    out = []
    for a in range(d):
        if real and a == d - 1:
            k = np.arange(m // 2 + 1, dtype=float)
        else:
            k = np.fft.fftfreq(m, 1.0 / m)
        shape = [1] * d
        shape[a] = k.size
        k = k.reshape(shape)
        k.setflags(write=False)
        out.append(k)
    return tuple(out)


@lru_cache(maxsize=64)
def _wavenumber_sq(d, m, real):
    k2 = sum(k**2 for k in _frequencies(d, m, real))
    k2 = np.broadcast_to(k2, _spectral_shape(d, m, real)).copy()
    k2.setflags(write=False)
    return k2


def _spectral_shape(d, m, real):
    if real:
        return (m,) * (d - 1) + (m // 2 + 1,)
    return (m,) * d


def _check_field(f, grid):
    f = np.asarray(f, dtype=float)
    if f.shape[f.ndim - grid.d :] != grid.shape:
        raise DimensionError(
            f"field trailing shape {f.shape[f.ndim - grid.d:]} does not match grid {grid.shape}"
        )
    return f


def forward(f, grid: Grid) -> np.ndarray:
    """Real-input forward transform over the trailing grid axes."""
    return np.fft.rfftn(f, axes=grid.axes)


def inverse(fhat, grid: Grid) -> np.ndarray:
    return np.fft.irfftn(fhat, s=grid.shape, axes=grid.axes)


def derivative_symbol(grid: Grid, orders, real: bool = True) -> np.ndarray:
    """Multiplier ``prod_a (i k_a)**orders[a]`` with odd-order Nyquist modes zeroed."""
    orders = tuple(int(o) for o in orders)
    if len(orders) != grid.d:
        raise DimensionError(f"need {grid.d} derivative orders, got {len(orders)}")
    if any(o < 0 for o in orders):
        raise UnsupportedOrderError("derivative orders must be non-negative")
    sym = np.ones((1,) * grid.d, dtype=complex)
    for k, o in zip(grid.frequencies(real), orders):
        if o == 0:
            continue
        factor = (1j * k) ** o
        if o % 2:
            factor = np.where(np.abs(k) == grid.m // 2, 0.0, factor)
        sym = sym * factor
    return sym


def smoother_symbol(grid: Grid, p: float, power: str = "inverse", real: bool = True) -> np.ndarray:
    """Multiplier of ``(1 - Lap)^(-p)`` (``inverse``) or ``(1 - Lap)^(-p/2)`` (``inverse_half``).

    ``p = 0`` gives the identity.  No range check here; see :func:`smoother_apply`.
    """
    if power == "inverse":
        expo = -float(p)
    elif power == "inverse_half":
        expo = -0.5 * float(p)
    else:
        raise ValueError(f"unknown smoother power {power!r}")
    return (1.0 + grid.wavenumber_sq(real)) ** expo


def apply_symbol(f, grid: Grid, symbol) -> np.ndarray:
    """Apply the Fourier multiplier ``symbol`` to a real field.

    ``symbol`` is either an array on the full frequency lattice (FFT slot order,
    shape ``grid.shape``) or a callable taking the per-axis integer frequency
    arrays and returning real values.
    """
    f = _check_field(f, grid)
    if callable(symbol):
        sigma = symbol(*grid.frequencies(real=False))
    else:
        sigma = symbol
    sigma = np.broadcast_to(np.asarray(sigma), grid.shape)
    if np.iscomplexobj(sigma) or not np.all(np.isfinite(sigma)):
        raise InvalidSymbolError("symbol must be real and finite on every lattice frequency")
    out = np.fft.ifftn(sigma * np.fft.fftn(f, axes=grid.axes), axes=grid.axes)
    scale = max(np.abs(out.real).max(initial=0.0), np.abs(f).max(initial=0.0), 1e-300)
    if np.abs(out.imag).max(initial=0.0) > 1e-9 * scale:
        raise InvalidSymbolError("symbol is not even on the lattice; result is not real")
    return out.real


def partial_derivative(f, grid: Grid, orders) -> np.ndarray:
    """Spectral partial derivative with per-axis multi-index ``orders`` (total order <= 2)."""
    f = _check_field(f, grid)
    if sum(orders) > 2:
        raise UnsupportedOrderError(f"total derivative order {sum(orders)} > 2 is not supported")
    return inverse(derivative_symbol(grid, orders) * forward(f, grid), grid)


def smoother_apply(f, grid: Grid, p: int, power: str = "inverse") -> np.ndarray:
    """Apply ``S_p^{-1}`` or ``S_p^{-1/2}`` where ``S_p = (1 - Lap)^p`` on the torus."""
    if not (1 <= p <= MAX_SMOOTHER_ORDER) or int(p) != p:
        raise UnsupportedOrderError(f"smoother order must be an integer in [1, 10], got {p}")
    f = _check_field(f, grid)
    return inverse(smoother_symbol(grid, p, power) * forward(f, grid), grid)


def _cardinal(m, t):
    """Periodic cardinal function of the even-``m`` trigonometric interpolant.

    Equals ``(1/m) * (1 + 2*sum_{k<m/2} cos(k t) + cos(m t / 2))``.
    """
    t = np.mod(t + np.pi, 2 * np.pi) - np.pi
    s = np.sin(0.5 * t)
    small = np.abs(s) < 1e-15
    safe = np.where(small, 1.0, s)
    val = np.sin(0.5 * m * t) * np.cos(0.5 * t) / (m * safe)
    return np.where(small, 1.0, val)


class TrigInterpolator:
    """Evaluation of the trigonometric interpolant at fixed off-grid points.

    The interpolant at ``y`` is ``sum_j f_j prod_a phi(y_a - x_{j,a})`` with
    ``phi`` the 1D cardinal function, so both the evaluation and its exact
    transpose reduce to dense contractions with per-axis factor matrices.
    Cost is ``O(n_points * m**d)`` per call.
    """

    def __init__(self, grid: Grid, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1 and grid.d == 1:
            pts = pts[:, None]
        pts = np.atleast_2d(pts)
        if pts.shape[-1] != grid.d:
            raise DimensionError(f"points must have {grid.d} coordinates, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)) or np.any(pts < -np.pi) or np.any(pts >= np.pi):
            raise OutOfDomainError("evaluation points must lie in [-pi, pi)^d")
        self.grid = grid
        self.points = pts
        x = grid.axis_nodes()
        self.factors = [_cardinal(grid.m, pts[:, a, None] - x[None, :]) for a in range(grid.d)]
        n = pts.shape[0]
        # rows: point i, columns: flattened trailing axes 1..d-1 of the field
        tail = np.ones((n, 1))
        for phi in self.factors[1:]:
            tail = (tail[:, :, None] * phi[:, None, :]).reshape(n, -1)
        self._tail = tail

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def evaluate(self, f) -> np.ndarray:
        f = _check_field(f, self.grid)
        m = self.grid.m
        batch = f.shape[: f.ndim - self.grid.d]
        g = f.reshape(batch + (m, -1)) @ self._tail.T  # (..., m, n)
        return np.einsum("ia,...ai->...i", self.factors[0], g)

    def adjoint(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape[-1:] != (self.n_points,):
            raise DimensionError(f"expected {self.n_points} point values, got shape {w.shape}")
        weighted = w[..., :, None] * self.factors[0]  # (..., n, m)
        out = np.swapaxes(weighted, -1, -2) @ self._tail  # (..., m, m**(d-1))
        return out.reshape(w.shape[:-1] + self.grid.shape)


def evaluate_offgrid(f, grid: Grid, points) -> np.ndarray:
    """Values of the trigonometric interpolant of ``f`` at ``points`` (shape ``(n, d)``)."""
    return TrigInterpolator(grid, points).evaluate(f)


def evaluate_offgrid_adjoint(w, grid: Grid, points) -> np.ndarray:
    """Transpose of :func:`evaluate_offgrid` under the plain Euclidean inner products."""
    interp = TrigInterpolator(grid, points)
    w = np.asarray(w, dtype=float)
    if w.shape[-1:] != (interp.n_points,):
        raise DimensionError(f"{w.shape[-1] if w.ndim else 0} values for {interp.n_points} points")
    return interp.adjoint(w)
