import warnings

import numpy as np
import pytest

from oracles import derivative_matrix, interpolation_matrix, smoother_matrix
from ssem.constraints import BoundaryCondition, InteriorOperator, build_system
from ssem.errors import RankDeficiencyWarning, TooLargeForDenseError, UnsupportedOrderError
from ssem.geometry import BoundaryDiscretization, disc, discretize_boundary
from ssem.problems import get_problem
from ssem.solver_qr import smoothed_transpose_matrix, solve_qr
from ssem.torus import Grid, evaluate_offgrid, forward, inverse


def _exp1(m, method="qr"):
    prob = get_problem("exp1")
    dom = prob.domain()
    return build_system(Grid(2, m), dom, prob.operator, discretize_boundary(dom, m, method), prob.bc, prob.f, prob.g)


def dense_formula(sys, p):
    """u = S^{-1} C^T (C S^{-1} C^T)^{-1} b from explicit oracle matrices."""
    m = sys.grid.m
    lap = -(derivative_matrix(m, 2, (2, 0)) + derivative_matrix(m, 2, (0, 2)))
    C = np.vstack([lap[sys.interior.flat], interpolation_matrix(m, 2, sys.boundary.points)])
    Sinv = smoother_matrix(m, 2, -float(p))
    return Sinv @ C.T @ np.linalg.solve(C @ Sinv @ C.T, sys.rhs)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_matches_dense_formula(p):
    sys = _exp1(8)
    u = solve_qr(sys, p).u.ravel()
    ref = dense_formula(sys, p)
    assert np.linalg.norm(u - ref) <= 1e-9 * np.linalg.norm(ref)


def test_constraints_satisfied_and_reported():
    sys = _exp1(32)
    rep = solve_qr(sys, 4)
    assert rep.constraint_residual_inf < 1e-10
    np.testing.assert_allclose(sys.apply_C(rep.u), sys.rhs, atol=1e-10)
    assert rep.smallest_R_diagonal > 0
    assert min(rep.assembly_seconds, rep.factor_seconds, rep.solve_seconds) >= 0


def _energy(w, grid, p):
    """``w . S_p w`` with ``S_p = (1 - Lap)^p``."""
    return float(np.sum(w * inverse((1.0 + grid.wavenumber_sq()) ** p * forward(w, grid), grid)))


def test_minimum_norm_property(rng):
    sys = _exp1(16)
    p = 2
    u = solve_qr(sys, p).u
    Ct = smoothed_transpose_matrix(sys, 0)
    for v in rng.standard_normal((5,) + sys.grid.shape):
        # project onto ker C, then perturb: the S_p energy must not drop
        null = v.ravel() - Ct @ np.linalg.lstsq(Ct, v.ravel(), rcond=None)[0]
        null = null.reshape(sys.grid.shape)
        assert np.abs(sys.apply_C(null)).max() < 1e-8
        assert _energy(u + 1e-3 * null, sys.grid, p) >= _energy(u, sys.grid, p) * (1 - 1e-12)


def test_zero_data_gives_zero():
    sys = _exp1(16)
    u = solve_qr(sys, 2, b=np.zeros(sys.n_constraints)).u
    assert np.abs(u).max() == 0.0


def test_p_zero_is_minimum_euclidean_norm():
    sys = _exp1(16)
    u = solve_qr(sys, 0).u.ravel()
    C = smoothed_transpose_matrix(sys, 0).T
    ref = np.linalg.lstsq(C, sys.rhs, rcond=None)[0]
    np.testing.assert_allclose(u, ref, atol=1e-10)


def test_neumann_solution_vanishes_at_origin():
    prob = get_problem("exp4")
    dom = prob.domain()
    sys = build_system(Grid(2, 32), dom, prob.operator, discretize_boundary(dom, 32), prob.bc, prob.f, prob.g)
    u = solve_qr(sys, 3).u
    assert abs(evaluate_offgrid(u, sys.grid, np.zeros((1, 2)))[0]) < 1e-12


@pytest.mark.parametrize("p", [-1, 11, 2.5])
def test_order_range(p):
    with pytest.raises(UnsupportedOrderError):
        solve_qr(_exp1(8), p)


def test_dense_caps():
    with pytest.raises(TooLargeForDenseError):
        solve_qr(_exp1(256, "pcg"), 2)
    with pytest.raises(TooLargeForDenseError):
        solve_qr(_exp1(32), 2, max_entries=1000)


def test_duplicate_boundary_points_warn():
    dom = disc()
    g = Grid(2, 16)
    b = discretize_boundary(dom, 16)
    dup = BoundaryDiscretization(np.vstack([b.points, b.points[:1]]), np.vstack([b.normals, b.normals[:1]]))
    sys = build_system(g, dom, InteriorOperator.negative_laplacian(2), dup, BoundaryCondition.DIRICHLET)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        solve_qr(sys, 2, b=np.ones(sys.n_constraints))
    hits = [w for w in caught if issubclass(w.category, RankDeficiencyWarning)]
    assert hits and hits[0].message.index >= 0
