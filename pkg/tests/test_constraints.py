import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import derivative_matrix, interpolation_matrix
from ssem.constraints import (
    BoundaryCondition,
    ConstraintSystem,
    InteriorOperator,
    Term,
    assemble_explicit,
    assemble_rhs,
    build_system,
)
from ssem.errors import DataError, DimensionError, TooLargeForDenseError, UnsupportedOrderError
from ssem.geometry import ball, classify_interior, disc, discretize_boundary, flower
from ssem.problems import get_problem
from ssem.torus import Grid


def _system(m=16, bc=BoundaryCondition.DIRICHLET, operator=None, domain=None):
    dom = domain or disc()
    g = Grid(2, m)
    op = operator or InteriorOperator.negative_laplacian(2)
    return build_system(g, dom, op, discretize_boundary(dom, m, "pcg"), bc)


def test_dense_oracle_for_C():
    s = _system(8)
    lap = -(derivative_matrix(8, 2, (2, 0)) + derivative_matrix(8, 2, (0, 2)))
    expected_a = lap[s.interior.flat]
    expected_b = interpolation_matrix(8, 2, s.boundary.points)
    C = assemble_explicit(lambda basis: s.apply_C(basis.reshape(-1, 8, 8)), 64, s.n_constraints, order="C")
    # assemble_explicit returns columns op(e_i); here op maps fields to constraints
    np.testing.assert_allclose(C, np.vstack([expected_a, expected_b]), atol=1e-11)


def test_variable_coefficients_against_oracle(rng):
    op = get_problem("exp2").operator
    s = _system(8, operator=op)
    pts = s.interior.points
    dxx = derivative_matrix(8, 2, (2, 0))[s.interior.flat]
    dyy = derivative_matrix(8, 2, (0, 2))[s.interior.flat]
    expected = -(2 + pts[:, 1])[:, None] * dxx - (2 - pts[:, 0])[:, None] * dyy
    u = rng.standard_normal((8, 8))
    np.testing.assert_allclose(s.apply_A(u), expected @ u.ravel(), atol=1e-11)


def test_neumann_rows_are_normal_derivatives():
    s = _system(32, BoundaryCondition.NEUMANN)
    g = s.grid
    x, y = g.coordinates()
    u = np.sin(x) * np.cos(2 * y)
    pts, nu = s.boundary.points, s.boundary.normals
    grad = np.stack(
        [np.cos(pts[:, 0]) * np.cos(2 * pts[:, 1]), -2 * np.sin(pts[:, 0]) * np.sin(2 * pts[:, 1])], axis=1
    )
    np.testing.assert_allclose(s.apply_B(u), np.sum(grad * nu, axis=1), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    bc=st.sampled_from(list(BoundaryCondition)),
    problem=st.sampled_from(["exp1", "exp2", "exp3"]),
)
def test_adjoint_identity(seed, bc, problem):
    prob = get_problem(problem)
    s = _system(16, bc, prob.operator, prob.domain())
    r = np.random.default_rng(seed)
    u = r.standard_normal(s.grid.shape)
    lam = r.standard_normal(s.n_constraints)
    lhs = np.dot(s.apply_C(u), lam)
    rhs = np.sum(u * s.apply_C_transpose(lam))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-9)


def test_adjoint_identity_3d(rng):
    g = Grid(3, 16)
    dom = ball()
    s = build_system(g, dom, InteriorOperator.negative_laplacian(3), discretize_boundary(dom, 16, "pcg"))
    u = rng.standard_normal(g.shape)
    lam = rng.standard_normal(s.n_constraints)
    assert np.dot(s.apply_C(u), lam) == pytest.approx(np.sum(u * s.apply_C_transpose(lam)), rel=1e-10)


def test_batched_application(rng):
    s = _system(16)
    us = rng.standard_normal((3, 16, 16))
    np.testing.assert_allclose(s.apply_C(us)[2], s.apply_C(us[2]))
    lams = rng.standard_normal((2, s.n_constraints))
    np.testing.assert_allclose(s.apply_C_transpose(lams)[1], s.apply_C_transpose(lams[1]))


def test_rhs_samples_boundary_data_at_boundary_points():
    prob = get_problem("exp3")
    s = build_system(Grid(2, 64), flower(), prob.operator, discretize_boundary(flower(), 64), prob.bc, prob.f, prob.g)
    assert s.rhs.shape == (s.n_constraints,)
    np.testing.assert_allclose(s.rhs[s.n_interior :], prob.g(*s.boundary.points.T))


def test_rhs_ordering_and_validation():
    s = _system(16)
    b = assemble_rhs(s, lambda x, y: x + 10, lambda x, y: y)
    np.testing.assert_allclose(b[: s.n_interior], s.interior.points[:, 0] + 10)
    np.testing.assert_allclose(b[s.n_interior :], s.boundary.points[:, 1])
    with pytest.raises(DataError):
        assemble_rhs(s, lambda x, y: np.where(x > 0, np.nan, x), lambda x, y: y)
    with pytest.raises(DataError):
        assemble_rhs(s, lambda x, y: x, None)


def test_operator_validation():
    with pytest.raises(UnsupportedOrderError):
        InteriorOperator((Term(1.0, (2, 1)),))
    with pytest.raises(DimensionError):
        InteriorOperator((Term(1.0, (2, 0)), Term(1.0, (0, 0, 2))))
    assert InteriorOperator.negative_laplacian(3).order == 2
    assert InteriorOperator.restriction(2).order == 0
    with pytest.raises(UnsupportedOrderError):
        build_system(Grid(2, 16), disc(), InteriorOperator.restriction(2), discretize_boundary(disc(), 16))


def test_overdetermined_rejected():
    g = Grid(2, 8)
    interior = classify_interior(g, disc(2.5))
    bd = discretize_boundary(disc(2.5), 8, density=2.0)
    with pytest.raises(DimensionError):
        ConstraintSystem(g, interior, InteriorOperator.negative_laplacian(2), bd)


def test_dense_cap():
    with pytest.raises(TooLargeForDenseError):
        assemble_explicit(lambda b: b, 100, 100, max_entries=999)


def test_non_finite_coefficient():
    op = InteriorOperator((Term(lambda x, y: np.full_like(x, np.inf), (2, 0)),))
    with pytest.raises(DataError):
        _system(16, operator=op)
