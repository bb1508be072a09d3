import numpy as np
import pytest
from numpy.testing import assert_allclose

from gdopt.linalg import (LinearSolverError, assemble, solve_spd,
                          solve_spd_operator)


def test_duplicate_triplets_summed():
    A = assemble([(0, 0, 1.0), (0, 0, 1.0)], (1, 1))
    assert A.csr.nnz == 1
    assert A.toarray()[0, 0] == 2.0


def test_identity_matvec():
    A = assemble([(i, i, 1.0) for i in range(3)], (3, 3), symmetric=True)
    x = np.array([1.0, -2.0, 3.5])
    assert_allclose(A @ x, x)


def test_empty_triplets_zero_matrix():
    A = assemble([], (4, 4))
    assert A.csr.nnz == 0
    assert_allclose(A @ np.ones(4), np.zeros(4))


def test_out_of_range_rejected():
    with pytest.raises(ValueError):
        assemble([(0, 5, 1.0)], (2, 2))
    with pytest.raises(ValueError):
        assemble([(-1, 0, 1.0)], (2, 2))


def test_solve_identity():
    A = assemble([(i, i, 1.0) for i in range(5)], (5, 5), symmetric=True)
    b = np.arange(5.0)
    assert_allclose(solve_spd(A, b), b, atol=1e-13)


def test_solve_diagonal():
    A = assemble([(0, 0, 1.0), (1, 1, 2.0), (2, 2, 4.0)], (3, 3),
                 symmetric=True)
    x = solve_spd(A, np.array([1.0, 2.0, 4.0]))
    assert_allclose(x, np.ones(3), atol=1e-13)


def test_random_spd_residual():
    rng = np.random.default_rng(42)
    M = rng.standard_normal((10, 10))
    dense = M.T @ M + np.eye(10)
    rows, cols = np.nonzero(dense)
    A = assemble((rows, cols, dense[rows, cols]), (10, 10), symmetric=True)
    b = rng.standard_normal(10)
    x = solve_spd(A, b, rel_tol=1e-12)
    assert np.linalg.norm(dense @ x - b) <= 1e-12 * np.linalg.norm(b)


def test_zero_rhs_short_circuits():
    A = assemble([(i, i, 2.0) for i in range(3)], (3, 3), symmetric=True)
    assert_allclose(solve_spd(A, np.zeros(3)), np.zeros(3))


def test_nonconvergence_carries_residual():
    rng = np.random.default_rng(7)
    M = rng.standard_normal((30, 30))
    dense = M.T @ M + 1e-6 * np.eye(30)
    rows, cols = np.nonzero(dense)
    A = assemble((rows, cols, dense[rows, cols]), (30, 30), symmetric=True)
    b = rng.standard_normal(30)
    with pytest.raises(LinearSolverError) as err:
        solve_spd(A, b, rel_tol=1e-14, max_iter=2)
    assert err.value.residual_norm > 0.0
    assert err.value.iterations == 2


def test_indefinite_breakdown():
    A = assemble([(0, 0, -1.0), (1, 1, 1.0)], (2, 2), symmetric=True)
    with pytest.raises(LinearSolverError):
        solve_spd(A, np.array([1.0, 1.0]))


def test_symmetric_matvec_adjoint_identity():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((12, 12))
    dense = M.T @ M + np.eye(12)
    rows, cols = np.nonzero(dense)
    A = assemble((rows, cols, dense[rows, cols]), (12, 12), symmetric=True)
    for _ in range(5):
        x = rng.standard_normal(12)
        y = rng.standard_normal(12)
        lhs = (A @ x) @ y
        rhs = x @ (A @ y)
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


def test_operator_interface_rank_one():
    # solve (I + e e^T) x = b through the operator route
    n = 6
    e = np.ones(n)
    rng = np.random.default_rng(11)
    b = rng.standard_normal(n)

    def matvec(x):
        return x + e * (e @ x)

    x = solve_spd_operator(matvec, 1.0 + e ** 2, b, rel_tol=1e-13)
    assert np.linalg.norm(matvec(x) - b) <= 1e-12 * np.linalg.norm(b)
