"""
Covariance Spectrum
===================
Sample covariance between sensors, its eigendecomposition by cyclic
Jacobi rotations, and the minimum representative-sensor estimate M0.
"""

import logging
from dataclasses import dataclass

import numpy as np

from dataset import SensorDataset
from errors import EigenError

logger = logging.getLogger("PCA")

SYMMETRY_TOL = 1e-10
DEFAULT_VARIANCE_FRACTION = 0.95


@dataclass(frozen=True)
class Spectrum:
    """Eigenpairs sorted by descending eigenvalue; eigenvectors are columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T

    def explained_variance_ratio(self) -> np.ndarray:
        positive = np.clip(self.eigenvalues, 0.0, None)
        total = positive.sum()
        if total <= 0:
            raise EigenError("spectrum has no positive variance")
        return positive / total


def covariance_matrix(d: SensorDataset) -> np.ndarray:
    """Unbiased sample covariance between sensors (columns)."""
    if d.n_samples < 2:
        raise EigenError(f"covariance needs at least 2 samples, got {d.n_samples}")
    return np.atleast_2d(np.cov(d.values, rowvar=False, ddof=1))


def _rotate(a: np.ndarray, v: np.ndarray, p: int, q: int) -> None:
    """Apply the Jacobi rotation that zeroes a[p, q], in place."""
    apq = a[p, q]
    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
    if theta < 0.0:
        t = -t
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c

    col_p = a[:, p].copy()
    col_q = a[:, q].copy()
    a[:, p] = c * col_p - s * col_q
    a[:, q] = s * col_p + c * col_q

    row_p = a[p, :].copy()
    row_q = a[q, :].copy()
    a[p, :] = c * row_p - s * row_q
    a[q, :] = s * row_p + c * row_q
    a[p, q] = a[q, p] = 0.0

    vec_p = v[:, p].copy()
    vec_q = v[:, q].copy()
    v[:, p] = c * vec_p - s * vec_q
    v[:, q] = s * vec_p + c * vec_q


def eigendecompose_sym(m: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> Spectrum:
    """
    Full spectrum of a symmetric matrix by cyclic Jacobi sweeps.

    Converged when the off-diagonal Frobenius norm falls below
    tol * ||m||_F. Raises EigenError after max_sweeps.
    """
    a = np.array(m, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise EigenError(f"matrix must be square, got shape {a.shape}")
    if not np.allclose(a, a.T, atol=SYMMETRY_TOL, rtol=0.0):
        raise EigenError("matrix is not symmetric within 1e-10")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    threshold = tol * scale

    for sweep in range(max_sweeps + 1):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if not np.isfinite(off):
            raise EigenError("non-finite entries during Jacobi sweeps")
        if off <= threshold:
            break
        if sweep == max_sweeps:
            raise EigenError(f"Jacobi did not converge after {max_sweeps} sweeps (off-norm {off:.3e})")
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) > 0.0:
                    _rotate(a, v, p, q)

    eigenvalues = np.diag(a).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    return Spectrum(eigenvalues=eigenvalues[order], eigenvectors=v[:, order])


def spectrum_of(d: SensorDataset) -> Spectrum:
    return eigendecompose_sym(covariance_matrix(d))


def estimate_min_sensors(d: SensorDataset, variance_fraction: float = DEFAULT_VARIANCE_FRACTION) -> int:
    """Smallest M whose top-M eigenvalues explain `variance_fraction` of the variance."""
    if not 0.0 < variance_fraction <= 1.0:
        raise EigenError(f"variance_fraction must be in (0, 1], got {variance_fraction}")
    cov = covariance_matrix(d)
    if not np.any(cov):
        raise EigenError("covariance matrix is all zero; no variance to explain")
    spectrum = eigendecompose_sym(cov)
    cumulative = np.cumsum(spectrum.explained_variance_ratio())
    m0 = int(np.searchsorted(cumulative, variance_fraction - 1e-12) + 1)
    m0 = min(m0, d.n_sensors)
    logger.info(f"📐 M0 = {m0} of {d.n_sensors} sensors at {variance_fraction:.0%} explained variance")
    return m0
