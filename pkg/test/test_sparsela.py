import argparse

import numpy as np
import pytest
import scipy.sparse

import config
import sparsela
import study

config.args = argparse.Namespace()
config.RUNNING_TEST = True


def laplacian(n):
    return scipy.sparse.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tocsr()


class TestSolve:
    def test_dense(self):
        m = np.array([[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]])
        rhs = np.array([1.0, 2.0, 3.0])
        x, stats = sparsela.solve(m, rhs)
        assert np.allclose(m @ x, rhs)
        assert stats.kind == 'dense'
        assert stats.dimension == 3
        assert stats.residual < 1e-14

    def test_sparse(self):
        m = laplacian(2500)
        rhs = np.ones(2500)
        x, stats = sparsela.solve(m, rhs)
        assert stats.kind == 'sparse'
        assert stats.residual < 1e-10
        assert np.allclose(m @ x, rhs)

    def test_trivial(self):
        x, stats = sparsela.solve(laplacian(5), np.zeros(5))
        assert stats.kind == 'trivial'
        assert np.all(x == 0)

    def test_singular_dense(self):
        with pytest.raises(sparsela.SingularMatrixError) as e:
            sparsela.solve(np.array([[1.0, 1.0], [1.0, 1.0]]), np.ones(2))
        assert e.value.row == 1

    def test_singular_sparse(self):
        d = np.ones(2500)
        d[1234] = 0
        with pytest.raises(sparsela.SingularMatrixError):
            sparsela.solve(scipy.sparse.diags(d).tocsr(), np.ones(2500))

    def test_zero_matrix(self):
        with pytest.raises(sparsela.SingularMatrixError):
            sparsela.solve(scipy.sparse.csr_matrix((4, 4)), np.ones(4))

    def test_not_square(self):
        with pytest.raises(ValueError):
            sparsela.solve(np.ones((2, 3)), np.ones(2))


class TestConditionEstimate:
    def test_dense_path(self):
        estimate = sparsela.estimate_condition(np.diag(np.arange(1.0, 11.0)))
        assert estimate.lambda_max == pytest.approx(10)
        assert estimate.lambda_min == pytest.approx(1)
        assert estimate.cond == pytest.approx(10)
        assert estimate.definite

    def test_diagonal(self):
        estimate = sparsela.estimate_condition(scipy.sparse.diags(np.arange(1.0, 101.0)).tocsr())
        assert estimate.cond == pytest.approx(100, rel=1e-6)
        assert estimate.iterations > 0
        assert max(estimate.residuals) < 1e-4

    def test_against_dense(self):
        m = laplacian(50)
        eigenvalues = np.linalg.eigvalsh(m.toarray())
        estimate = sparsela.estimate_condition(m)
        assert estimate.cond == pytest.approx(eigenvalues[-1] / eigenvalues[0], rel=1e-3)

    def test_indefinite(self):
        estimate = sparsela.estimate_condition(np.diag([-3.0, 1.0, 2.0]))
        assert not estimate.definite
        assert estimate.cond == pytest.approx(3)

    def test_not_square(self):
        with pytest.raises(ValueError):
            sparsela.estimate_condition(np.ones((2, 3)))

    def test_smallest_eigenvalue(self):
        assert sparsela.smallest_eigenvalue(np.diag([3.0, -2.0, 5.0])) == pytest.approx(-2)

    @pytest.mark.parametrize('method', ['hdg', 'mcs'])
    @pytest.mark.parametrize('n', [1, 2])
    def test_reduced_blocks_against_dense(self, method, n):
        system, _ = study.reduced_system(method, study.build_spaces(n), nu=1.0, add_divdiv=True)
        scaled = sparsela.jacobi_scaled(system.A)
        eigenvalues = np.linalg.eigvalsh(scaled.toarray())
        assert eigenvalues[0] > 0
        estimate = sparsela.estimate_condition(scaled)
        assert estimate.cond == pytest.approx(eigenvalues[-1] / eigenvalues[0], rel=0.05)


class TestSymmetry:
    def test_sparse(self):
        m = laplacian(10)
        assert sparsela.is_symmetric(m)
        m = m.tolil()
        m[0, 3] = 1.0
        assert not sparsela.is_symmetric(m.tocsr())

    def test_dense(self):
        assert sparsela.is_symmetric(np.eye(3))
        assert not sparsela.is_symmetric(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_empty(self):
        assert sparsela.is_symmetric(scipy.sparse.csr_matrix((3, 3)))


class TestJacobiScaling:
    def test_unit_diagonal(self):
        m = np.array([[4.0, 2.0], [2.0, 9.0]])
        scaled = sparsela.jacobi_scaled(m)
        assert np.allclose(scaled.diagonal(), 1)
        assert scaled[0, 1] == pytest.approx(2 / 6)
        assert sparsela.is_symmetric(scaled)

    def test_negative_diagonal(self):
        scaled = sparsela.jacobi_scaled(np.diag([-4.0, 1.0]))
        assert np.allclose(scaled.diagonal(), [-1, 1])

    def test_zero_diagonal(self):
        with pytest.raises(sparsela.SingularMatrixError) as e:
            sparsela.jacobi_scaled(np.array([[1.0, 1.0], [1.0, 0.0]]))
        assert e.value.row == 1
