"""
Unit tests for the covariance spectrum and the M0 estimate.
"""

import pytest
import os
import sys

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from dataset import SensorDataset
from errors import EigenError
from pca import covariance_matrix, eigendecompose_sym, estimate_min_sensors, spectrum_of


def _dataset(values):
    values = np.asarray(values, dtype=float)
    return SensorDataset(tuple(f"s{j}" for j in range(values.shape[1])), values)


class TestCovariance:
    """Tests for covariance_matrix."""

    def test_identical_columns(self):
        """Two identical columns give a matrix of equal entries."""
        x = np.array([1.0, 3.0, 2.0, 5.0])
        c = covariance_matrix(_dataset(np.column_stack([x, x])))
        assert np.allclose(c, c[0, 0])

    def test_negated_column(self):
        """A column and its negation covary by minus the variance."""
        x = np.array([1.0, 3.0, 2.0, 5.0])
        c = covariance_matrix(_dataset(np.column_stack([x, -x])))
        assert c[0, 1] == pytest.approx(-c[0, 0])

    def test_matches_double_loop(self):
        """Agrees with a direct unbiased double-loop computation."""
        rng = np.random.default_rng(0)
        x = rng.normal(size=(5, 3))
        c = covariance_matrix(_dataset(x))
        mean = x.mean(axis=0)
        expected = np.zeros((3, 3))
        for i in range(3):
            for j in range(3):
                expected[i, j] = sum((x[k, i] - mean[i]) * (x[k, j] - mean[j]) for k in range(5)) / 4
        np.testing.assert_allclose(c, expected, atol=1e-12)

    def test_needs_two_samples(self):
        """A single reading has no covariance."""
        with pytest.raises(EigenError):
            covariance_matrix(_dataset([[1.0, 2.0]]))


class TestEigendecomposition:
    """Tests for the Jacobi eigensolver."""

    def test_diagonal_matrix(self):
        """A diagonal matrix is its own spectrum."""
        s = eigendecompose_sym(np.diag([1.0, 3.0]))
        np.testing.assert_allclose(s.eigenvalues, [3.0, 1.0])
        np.testing.assert_allclose(np.abs(s.eigenvectors), [[0.0, 1.0], [1.0, 0.0]])

    def test_two_by_two(self):
        """[[2,1],[1,2]] has eigenvalues 3 and 1."""
        s = eigendecompose_sym(np.array([[2.0, 1.0], [1.0, 2.0]]))
        np.testing.assert_allclose(s.eigenvalues, [3.0, 1.0], atol=1e-12)

    def test_random_symmetric_residuals(self):
        """Every eigenpair satisfies M v = lambda v; V is orthonormal; V L V^T = M."""
        rng = np.random.default_rng(1)
        a = rng.normal(size=(6, 6))
        m = a + a.T
        s = eigendecompose_sym(m)
        for k in range(6):
            v = s.eigenvectors[:, k]
            assert np.linalg.norm(m @ v - s.eigenvalues[k] * v) <= 1e-8
        np.testing.assert_allclose(s.eigenvectors.T @ s.eigenvectors, np.eye(6), atol=1e-10)
        assert np.linalg.norm(s.reconstruct() - m) <= 1e-8 * np.linalg.norm(m)
        assert np.all(np.diff(s.eigenvalues) <= 0)

    def test_eigenvalue_sum_is_trace(self):
        """Sum of eigenvalues equals the covariance trace."""
        rng = np.random.default_rng(2)
        d = _dataset(rng.normal(size=(40, 7)))
        s = spectrum_of(d)
        trace = np.trace(covariance_matrix(d))
        assert s.eigenvalues.sum() == pytest.approx(trace, rel=1e-8)

    def test_rejects_asymmetric(self):
        """Asymmetric input is refused."""
        with pytest.raises(EigenError):
            eigendecompose_sym(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_sweep_limit(self):
        """Running out of sweeps raises EigenError."""
        with pytest.raises(EigenError):
            eigendecompose_sym(np.array([[2.0, 1.0], [1.0, 2.0]]), max_sweeps=0)


class TestEstimateMinSensors:
    """Tests for the M0 estimate."""

    def test_duplicated_signal(self):
        """One signal copied five times needs one representative."""
        rng = np.random.default_rng(3)
        x = rng.normal(size=200)
        cols = [x + 1e-9 * rng.normal(size=200) for _ in range(5)]
        assert estimate_min_sensors(_dataset(np.column_stack(cols))) == 1

    def test_two_orthogonal_signals(self):
        """Two orthogonal equal-variance signals, each duplicated, need two."""
        a = np.array([1.0, -1.0] * 4)
        b = np.array([1.0, 1.0, -1.0, -1.0] * 2)
        d = _dataset(np.column_stack([a, a, b, b]))
        assert estimate_min_sensors(d, 0.95) == 2

    def test_duplicating_columns_keeps_m0(self):
        """Redundant copies of every column do not change M0."""
        rng = np.random.default_rng(4)
        base = rng.normal(size=(300, 3)) @ rng.normal(size=(3, 6))
        base += 0.1 * rng.normal(size=base.shape)
        m0 = estimate_min_sensors(_dataset(base))
        assert estimate_min_sensors(_dataset(np.hstack([base, base]))) == m0

    def test_full_fraction_counts_all_nonzero(self):
        """Fraction 1 needs every direction with variance."""
        rng = np.random.default_rng(5)
        d = _dataset(rng.normal(size=(50, 4)))
        assert estimate_min_sensors(d, 1.0) == 4

    def test_all_zero_covariance(self):
        """Constant data has no variance to explain."""
        with pytest.raises(EigenError):
            estimate_min_sensors(_dataset(np.ones((5, 3))))

    @pytest.mark.parametrize("fraction", [0.0, 1.5])
    def test_fraction_range(self, small_dataset, fraction):
        """The fraction must lie in (0, 1]."""
        with pytest.raises(EigenError):
            estimate_min_sensors(small_dataset, fraction)
