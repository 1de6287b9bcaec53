"""Elliptic boundary value problems on irregular domains by smooth selection.

The problem is embedded in the periodic box ``(-pi, pi)^d``; the discretized
equation and boundary condition become linear constraints ``C u = b`` and the
solution is the grid field of smallest ``(1 - Lap)^p`` energy satisfying them.
"""

from .constraints import (
    BoundaryCondition,
    ConstraintSystem,
    InteriorOperator,
    Term,
    apply_A,
    apply_B,
    apply_C,
    apply_C_transpose,
    assemble_rhs,
    build_system,
)
from .errors import *  # noqa: F401,F403
from .extension import extend, sobolev_seminorm
from .geometry import (
    BoundaryDiscretization,
    Domain,
    InteriorIndexSet,
    ball,
    classify_interior,
    disc,
    discretize_boundary,
    flower,
    from_level_set,
    get_domain,
)
from .harness import ConvergenceReport, ExperimentConfig, error_norms, fit_rate, reference_nonsmooth, run_problem
from .kernel import KernelTable, build_kernel_table
from .problems import PROBLEMS, get_problem
from .solver_pcg import PcgReport, pcg_solve
from .solver_qr import QrSolveReport, solve_qr
from .torus import Grid, TrigInterpolator, evaluate_offgrid, partial_derivative, smoother_apply

__version__ = "0.1.0"
