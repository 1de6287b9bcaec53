"""Catalog of the boundary value problems used in the convergence studies.

Every problem carries its exact solution so errors can be reported.  Data
functions take one coordinate array per axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .constraints import BoundaryCondition, InteriorOperator, Term
from .geometry import Domain, ball, disc, flower

__all__ = ["PROBLEMS", "Problem", "get_problem", "nonsmooth_closed_form", "step_data"]


@dataclass(frozen=True)
class Problem:
    name: str
    d: int
    domain: Callable[[], Domain]
    operator: InteriorOperator
    bc: BoundaryCondition
    f: Callable
    g: Callable
    exact: Callable
    # excluded balls (center, radius) for error norms
    mask: tuple = field(default=())
    description: str = ""


def _cubic(x, y):
    return x**3 - y**3


def _saddle(x, y):
    return x**2 - y**2


def step_data(x, y):
    """+1 on the upper half of the circle, -1 on the lower half, 0 at the two jumps."""
    s = np.sign(y)
    return np.where(np.abs(y) < 1e-12, 0.0, s)


def nonsmooth_closed_form(x, y):
    """Harmonic extension of :func:`step_data` into the unit disc."""
    r2 = x**2 + y**2
    return (2 / np.pi) * np.arctan2(2 * y, 1 - r2)


_LAP2 = InteriorOperator.negative_laplacian(2)

PROBLEMS = {
    "exp1": Problem(
        name="exp1",
        d=2,
        domain=disc,
        operator=_LAP2,
        bc=BoundaryCondition.DIRICHLET,
        # -Lap(x^3 - y^3) = 6(y - x)
        f=lambda x, y: 6.0 * (y - x),
        g=_cubic,
        exact=_cubic,
        description="Poisson on the unit disc, exact solution x^3 - y^3",
    ),
    "exp2": Problem(
        name="exp2",
        d=2,
        domain=disc,
        operator=InteriorOperator(
            (
                Term(lambda x, y: -(2.0 + y), (2, 0)),
                Term(lambda x, y: -(2.0 - x), (0, 2)),
            )
        ),
        bc=BoundaryCondition.DIRICHLET,
        f=lambda x, y: -6.0 * x * (2.0 + y) + 6.0 * y * (2.0 - x),
        g=_cubic,
        exact=_cubic,
        description="variable coefficients -[(2+y) u_xx + (2-x) u_yy] on the disc",
    ),
    "exp3": Problem(
        name="exp3",
        d=2,
        domain=flower,
        operator=_LAP2,
        bc=BoundaryCondition.DIRICHLET,
        f=lambda x, y: 0.0,
        g=_saddle,
        exact=_saddle,
        description="harmonic data on the five-petal flower",
    ),
    "exp4": Problem(
        name="exp4",
        d=2,
        domain=disc,
        operator=_LAP2,
        bc=BoundaryCondition.NEUMANN,
        f=lambda x, y: 0.0,
        g=lambda x, y: 2.0 * (x**2 - y**2),
        exact=_saddle,
        description="Neumann problem on the disc, solution fixed by u(0) = 0",
    ),
    "exp5": Problem(
        name="exp5",
        d=2,
        domain=disc,
        operator=_LAP2,
        bc=BoundaryCondition.DIRICHLET,
        f=lambda x, y: 0.0,
        g=step_data,
        exact=nonsmooth_closed_form,
        mask=(((1.0, 0.0), 0.2), ((-1.0, 0.0), 0.2)),
        description="discontinuous Dirichlet data; errors away from the jumps",
    ),
    "exp6": Problem(
        name="exp6",
        d=3,
        domain=ball,
        operator=InteriorOperator.negative_laplacian(3),
        bc=BoundaryCondition.DIRICHLET,
        f=lambda x, y, z: 1.0,
        g=lambda x, y, z: 0.0,
        exact=lambda x, y, z: (1.0 - x**2 - y**2 - z**2) / 6.0,
        description="-Lap u = 1 in the unit ball, u = 0 on the sphere",
    ),
}


def get_problem(name: str) -> Problem:
    try:
        return PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
