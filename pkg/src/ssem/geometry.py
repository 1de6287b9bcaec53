"""Domains inside the periodic box, interior node classification and boundary points."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import PchipInterpolator

from .errors import DegenerateDomainError, DimensionError, OutOfDomainError, TooCoarseError
from .torus import Grid

__all__ = [
    "BoundaryDiscretization",
    "Domain",
    "InteriorIndexSet",
    "ball",
    "boundary_density",
    "classify_interior",
    "disc",
    "discretize_boundary",
    "discretize_boundary_2d",
    "discretize_boundary_sphere",
    "flower",
    "from_level_set",
    "get_domain",
]

# floor() guard so that rho*L landing on an integer up to quadrature roundoff
# is not pushed down by one
_COUNT_EPS = 1e-9
_SAMPLES_PER_POINT = 10_000


@dataclass(frozen=True)
class Domain:
    """An open domain whose closure sits strictly inside (-pi, pi)^d.

    ``inside`` and ``normal`` act on ``(n, d)`` coordinate arrays.  Planar
    domains carry a counterclockwise parametrization ``curve(theta)`` over
    ``[0, 2*pi)`` together with its derivative, used for arc-length placement
    of boundary points.  ``level_set`` is negative inside, zero on the boundary.
    """

    name: str
    d: int
    inside: Callable[[np.ndarray], np.ndarray]
    normal: Callable[[np.ndarray], np.ndarray]
    extent: float
    level_set: Optional[Callable[[np.ndarray], np.ndarray]] = None
    curve: Optional[Callable[[np.ndarray], np.ndarray]] = None
    curve_derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None
    radius: Optional[float] = None


@dataclass(frozen=True)
class InteriorIndexSet:
    """Grid nodes strictly inside the domain, in increasing C-order flat index."""

    flat: np.ndarray
    points: np.ndarray

    @property
    def count(self) -> int:
        return int(self.flat.size)


@dataclass(frozen=True)
class BoundaryDiscretization:
    points: np.ndarray
    normals: np.ndarray
    parameters: Optional[np.ndarray] = None

    @property
    def count(self) -> int:
        return int(self.points.shape[0])


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _polar(x):
    return np.hypot(x[:, 0], x[:, 1]), np.arctan2(x[:, 1], x[:, 0])


def disc(radius: float = 1.0, center=(0.0, 0.0)) -> Domain:
    c = np.asarray(center, dtype=float)

    def inside(x):
        return np.sum((x - c) ** 2, axis=-1) < radius**2

    def curve(t):
        return c + radius * np.stack([np.cos(t), np.sin(t)], axis=-1)

    def dcurve(t):
        return radius * np.stack([-np.sin(t), np.cos(t)], axis=-1)

    return Domain(
        name="disc",
        d=2,
        inside=inside,
        normal=lambda y: _unit(y - c),
        extent=float(np.abs(c).max() + radius),
        level_set=lambda x: np.sqrt(np.sum((x - c) ** 2, axis=-1)) - radius,
        curve=curve,
        curve_derivative=dcurve,
        radius=radius,
    )


def flower(petals: int = 5, amplitude: float = 0.2) -> Domain:
    """Star-shaped domain ``r < 1 + amplitude * cos(petals * theta)``."""

    def rad(t):
        return 1.0 + amplitude * np.cos(petals * t)

    def drad(t):
        return -amplitude * petals * np.sin(petals * t)

    def curve(t):
        r = rad(t)
        return np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)

    def dcurve(t):
        r, dr = rad(t), drad(t)
        return np.stack(
            [dr * np.cos(t) - r * np.sin(t), dr * np.sin(t) + r * np.cos(t)], axis=-1
        )

    def inside(x):
        r, t = _polar(x)
        return r < rad(t)

    def normal(y):
        t = np.arctan2(y[:, 1], y[:, 0])
        tangent = dcurve(t)
        return _unit(np.stack([tangent[:, 1], -tangent[:, 0]], axis=-1))

    def level_set(x):
        r, t = _polar(x)
        return r - rad(t)

    return Domain(
        name="flower",
        d=2,
        inside=inside,
        normal=normal,
        extent=1.0 + abs(amplitude),
        level_set=level_set,
        curve=curve,
        curve_derivative=dcurve,
    )


def ball(radius: float = 1.0) -> Domain:
    """Ball centred at the origin in three dimensions."""
    return Domain(
        name="sphere",
        d=3,
        inside=lambda x: np.sum(x**2, axis=-1) < radius**2,
        normal=_unit,
        extent=radius,
        level_set=lambda x: np.linalg.norm(x, axis=-1) - radius,
        radius=radius,
    )


def from_level_set(
    name: str,
    d: int,
    level_set: Callable[[np.ndarray], np.ndarray],
    gradient: Callable[[np.ndarray], np.ndarray],
    extent: float,
    curve=None,
    curve_derivative=None,
) -> Domain:
    """Generic domain ``{level_set < 0}`` with normals from the level-set gradient.

    Boundary points for such domains come from ``curve`` (planar case) or must be
    supplied by the caller as a :class:`BoundaryDiscretization`.
    """
    return Domain(
        name=name,
        d=d,
        inside=lambda x: level_set(x) < 0,
        normal=lambda y: _unit(gradient(y)),
        extent=float(extent),
        level_set=level_set,
        curve=curve,
        curve_derivative=curve_derivative,
    )


_CATALOG = {"disc": disc, "flower": flower, "sphere": ball, "ball": ball}


def get_domain(name: str) -> Domain:
    try:
        return _CATALOG[name]()
    except KeyError:
        raise KeyError(f"unknown domain {name!r}; choose from {sorted(_CATALOG)}") from None


def classify_interior(grid: Grid, domain: Domain) -> InteriorIndexSet:
    if domain.d != grid.d:
        raise DimensionError(f"domain is {domain.d}D but grid is {grid.d}D")
    if not domain.extent < np.pi:
        raise OutOfDomainError(f"domain {domain.name!r} does not fit strictly inside the box")
    flat_all = np.arange(grid.n_nodes)
    pts = grid.node_coordinates(flat_all)
    mask = np.asarray(domain.inside(pts), dtype=bool)
    if not mask.any():
        raise DegenerateDomainError(f"no grid nodes inside {domain.name!r} at m={grid.m}")
    flat = flat_all[mask]
    return InteriorIndexSet(flat=flat, points=pts[mask])


def boundary_density(d: int, m: int, method: str) -> float:
    """Default boundary-point density for a solver.

    Points per unit length for ``d == 2``; points per unit area for ``d == 3``.
    """
    if method not in ("qr", "pcg"):
        raise ValueError(f"unknown solver method {method!r}")
    ratio = m / (2 * np.pi)
    if d == 2:
        return (0.5 if method == "qr" else 0.25) * ratio
    if d == 3:
        return (2.0 if method == "qr" else 1.0 / 16.0) * ratio**2
    raise DimensionError(f"no boundary density rule for d={d}")


def _arc_length_table(domain, n_samples):
    t = np.linspace(0.0, 2 * np.pi, n_samples + 1)
    speed = np.linalg.norm(domain.curve_derivative(t), axis=-1)
    s = cumulative_trapezoid(speed, t, initial=0.0)
    return t, s


def discretize_boundary_2d(domain: Domain, m: int, density_factor: float = 0.25) -> BoundaryDiscretization:
    """Points equally spaced in arc length, ``floor(density_factor * m/(2 pi) * L) + 1`` of them."""
    if domain.d != 2 or domain.curve is None:
        raise DimensionError("arc-length discretization needs a planar parametrized domain")
    rho = density_factor * m / (2 * np.pi)
    _, s0 = _arc_length_table(domain, 1 << 16)
    n = int(np.floor(rho * s0[-1] + _COUNT_EPS)) + 1
    if n < 3:
        raise TooCoarseError(f"only {n} boundary points at m={m}; increase m or the density")
    t, s = _arc_length_table(domain, _SAMPLES_PER_POINT * n)
    targets = s[-1] * np.arange(n) / n
    theta = PchipInterpolator(s, t)(targets)
    pts = domain.curve(theta)
    tangent = domain.curve_derivative(theta)
    normals = _unit(np.stack([tangent[:, 1], -tangent[:, 0]], axis=-1))
    return BoundaryDiscretization(points=pts, normals=normals, parameters=theta)


def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n)
    golden = 0.5 * (1.0 + np.sqrt(5.0))
    z = 1.0 - (2 * i + 1) / n
    rho = np.sqrt(1.0 - z * z)
    phi = 2 * np.pi * i / golden
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


def discretize_boundary_sphere(m: int, density_per_area: float, radius: float = 1.0) -> BoundaryDiscretization:
    """Fibonacci lattice with ``round(density_per_area * area)`` points on the sphere."""
    n = int(round(density_per_area * 4 * np.pi * radius**2))
    if n < 4:
        raise TooCoarseError(f"only {n} sphere points at m={m}; increase m or the density")
    unit = fibonacci_sphere(n)
    return BoundaryDiscretization(points=radius * unit, normals=unit)


def discretize_boundary(domain: Domain, m: int, method: str = "qr", density: Optional[float] = None):
    """Dispatch to the 2D arc-length or 3D sphere construction with solver defaults.

    ``density`` overrides the default: a factor multiplying ``m/(2 pi)`` in 2D,
    an absolute per-area density in 3D.
    """
    if domain.d == 2:
        factor = density if density is not None else boundary_density(2, m, method) * 2 * np.pi / m
        return discretize_boundary_2d(domain, m, factor)
    if domain.d == 3 and domain.radius is not None and domain.name == "sphere":
        rho = density if density is not None else boundary_density(3, m, method)
        return discretize_boundary_sphere(m, rho, domain.radius)
    raise DimensionError(f"no automatic boundary discretization for domain {domain.name!r}")
