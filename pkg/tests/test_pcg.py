import numpy as np
import pytest
import scipy.sparse as sp

from ssem.constraints import BoundaryCondition, build_system
from ssem.errors import BreakdownError, NonConvergenceError, PreconditionerFailure, UnsupportedOrderError
from ssem.geometry import classify_interior, disc, discretize_boundary
from ssem.kernel import build_kernel_table
from ssem.problems import get_problem
from ssem.solver_pcg import (
    BlockPreconditioner,
    apply_interior_preconditioner,
    assemble_boundary_preconditioner,
    interior_stencil,
    lanczos_condition,
    normal_operator,
    pcg,
    pcg_solve,
)
from ssem.solver_qr import solve_qr
from ssem.torus import Grid, evaluate_offgrid


def _system(name, m, method="pcg"):
    prob = get_problem(name)
    dom = prob.domain()
    g = Grid(prob.d, m)
    return build_system(g, dom, prob.operator, discretize_boundary(dom, m, method), prob.bc, prob.f, prob.g)


@pytest.mark.parametrize("p", [2, 3, 4])
def test_agrees_with_qr_on_same_system(p):
    sys = _system("exp1", 32)
    a = pcg_solve(sys, p).u.ravel()[sys.interior.flat]
    b = solve_qr(sys, p).u.ravel()[sys.interior.flat]
    assert np.linalg.norm(a - b) <= 1e-7 * np.linalg.norm(b)


def test_report_fields():
    sys = _system("exp1", 64)
    rep = pcg_solve(sys, 2)
    assert 5 <= rep.iterations <= 40
    assert rep.final_relative_residual <= 1e-10
    assert len(rep.residual_history) == rep.iterations + 1
    assert 1 <= rep.condition_estimate <= 20
    assert rep.multipliers.shape == (sys.n_constraints,)
    np.testing.assert_allclose(sys.apply_C(rep.u), sys.rhs, atol=1e-7)


def test_zero_rhs_shortcut():
    sys = _system("exp1", 32)
    rep = pcg_solve(sys, 3, b=np.zeros(sys.n_constraints))
    assert rep.iterations == 0
    assert not rep.u.any() and not rep.multipliers.any()


def test_neumann_and_3d_paths():
    sys = _system("exp4", 64)
    rep = pcg_solve(sys, 3)
    assert abs(evaluate_offgrid(rep.u, sys.grid, np.zeros((1, 2)))[0]) < 1e-12
    sys3 = _system("exp6", 16)
    rep3 = pcg_solve(sys3, 2)
    assert rep3.iterations <= 40


@pytest.mark.parametrize("p", [1, 5])
def test_order_limits(p):
    sys = _system("exp1", 16)
    with pytest.raises(UnsupportedOrderError):
        pcg_solve(sys, p)


def test_interior_preconditioner_limits():
    g = Grid(2, 16)
    interior = classify_interior(g, disc())
    v = np.ones(interior.count)
    np.testing.assert_array_equal(apply_interior_preconditioner(v, 2, interior, g), v)
    with pytest.raises(UnsupportedOrderError):
        apply_interior_preconditioner(v, 5, interior, g)


def test_stencil_closures():
    g = Grid(2, 32)
    interior = classify_interior(g, disc())
    neu = interior_stencil(g, interior)
    dirichlet = interior_stencil(g, interior, "dirichlet")
    s2 = g.spacing**2
    assert (neu - neu.T).nnz == 0
    np.testing.assert_allclose(neu @ np.ones(interior.count), 0.0, atol=1e-9)
    np.testing.assert_allclose(dirichlet.diagonal(), 4 / s2)
    # away from the boundary both agree with the five-point Laplacian
    deep = np.flatnonzero(np.linalg.norm(interior.points, axis=1) < 0.5)
    np.testing.assert_allclose(neu.diagonal()[deep], 4 / s2)
    assert np.all(np.linalg.eigvalsh(dirichlet.toarray()) > 0)
    with pytest.raises(ValueError):
        interior_stencil(g, interior, "robin")


def test_interior_preconditioner_matches_matrix_power():
    g = Grid(2, 16)
    interior = classify_interior(g, disc())
    v = np.random.default_rng(1).standard_normal(interior.count)
    op = sp.identity(interior.count) + interior_stencil(g, interior)
    np.testing.assert_allclose(apply_interior_preconditioner(v, 4, interior, g), op @ (op @ v))


def test_boundary_preconditioner_failure_for_coincident_points():
    table = build_kernel_table(2, 2)
    t = np.linspace(0, 2 * np.pi, 20, endpoint=False)
    pts = np.stack([np.cos(t), np.sin(t)], axis=1)
    pts = np.vstack([pts, pts[:1]])
    with pytest.raises(PreconditionerFailure):
        assemble_boundary_preconditioner(table, pts, 16)


def test_boundary_preconditioner_is_inverse():
    table = build_kernel_table(2, 2)
    b = discretize_boundary(disc(), 64, "pcg")
    inv = assemble_boundary_preconditioner(table, b.points, 64)
    from ssem.solver_pcg import boundary_kernel_matrix

    np.testing.assert_allclose(inv @ boundary_kernel_matrix(table, b.points, 64), np.eye(b.count), atol=1e-9)


def test_lanczos_estimate_matches_dense_condition():
    sys = _system("exp1", 32)
    p = 3
    apply_a = normal_operator(sys, p)
    M = BlockPreconditioner(sys, p)
    n = sys.n_constraints
    A = np.array([apply_a(e) for e in np.eye(n)])
    Mm = np.array([M(e) for e in np.eye(n)])
    L = np.linalg.cholesky(0.5 * (Mm + Mm.T))
    ev = np.linalg.eigvalsh(L.T @ A @ L)
    _, _, alphas, betas = pcg(apply_a, sys.rhs, M, tol=1e-14, max_iter=n)
    est = lanczos_condition(alphas, betas)
    assert est == pytest.approx(ev[-1] / ev[0], rel=0.05)


def test_nonconvergence_reports_history():
    sys = _system("exp1", 64)
    with pytest.raises(NonConvergenceError) as info:
        pcg_solve(sys, 4, max_iter=3)
    assert len(info.value.history) == 4


def test_breakdown_on_indefinite_operator():
    with pytest.raises(BreakdownError):
        pcg(lambda x: -x, np.ones(3), lambda r: r)


def test_neumann_uses_lower_order_kernel():
    sys = _system("exp4", 32)
    assert sys.bc is BoundaryCondition.NEUMANN
    assert BlockPreconditioner(sys, 3).table.p == 2
