"""
Synthetic Sensor Data Generator
===============================
Datasets with a planted cluster structure for validating the fusion step:

1. pick a random sensor -> cluster assignment (ClusterSpec)
2. fill within-cluster correlations from a triangular density, zero across clusters
3. clamp eigenvalues so the matrix is positive definite, rescale to unit diagonal
4. draw Gaussian readings through the Cholesky factor, min-max normalize

Correlation and Euclidean distance move in opposite directions for
standardized vectors, so highly correlated sensors end up close together.
"""

import json
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from dataset import SensorDataset, normalize
from errors import SynthesisError

logger = logging.getLogger("SynthGen")

Seed = Union[int, np.random.Generator, None]

DEFAULT_PEAK = 0.75
DEFAULT_LOW = 0.5
DEFAULT_HIGH = 1.0
EIGEN_FLOOR = 1e-7

# ============================================================================
# DATA MODELS
# ============================================================================

class ClusterSpec(BaseModel):
    """Planted sensor -> cluster assignment; labels run 1..n_clusters."""

    assignment: List[int]
    n_clusters: int = Field(ge=1)

    @model_validator(mode="after")
    def _every_cluster_used(self):
        used = set(self.assignment)
        expected = set(range(1, self.n_clusters + 1))
        if used != expected:
            raise ValueError(
                f"labels must cover 1..{self.n_clusters} exactly; missing {sorted(expected - used)}, "
                f"unexpected {sorted(used - expected)}"
            )
        return self

    @property
    def n_sensors(self) -> int:
        return len(self.assignment)

    def members(self, label: int) -> List[int]:
        return [i for i, lab in enumerate(self.assignment) if lab == label]

    def to_ground_truth(self, names: Sequence[str]) -> Dict[str, List[str]]:
        """JSON form: {cluster_label: [sensor names]}."""
        if len(names) != self.n_sensors:
            raise SynthesisError(f"{len(names)} names for {self.n_sensors} sensors")
        return {str(k): [names[i] for i in self.members(k)] for k in range(1, self.n_clusters + 1)}

    @classmethod
    def from_ground_truth(cls, payload: Dict[str, List[str]], names: Sequence[str]) -> "ClusterSpec":
        index = {n: i for i, n in enumerate(names)}
        assignment = [0] * len(names)
        try:
            for label, members in payload.items():
                for name in members:
                    assignment[index[name]] = int(label)
            return cls(assignment=assignment, n_clusters=len(payload))
        except KeyError as e:
            raise SynthesisError(f"ground truth names unknown sensor {e}") from None
        except (TypeError, ValueError, AttributeError) as e:
            raise SynthesisError(f"malformed ground truth: {e}") from None


# The planted clustering is the ground truth for a generated dataset.
GroundTruth = ClusterSpec


@dataclass(frozen=True)
class SyntheticDataset:
    dataset: SensorDataset
    ground_truth: ClusterSpec
    correlation: np.ndarray

# ============================================================================
# SAMPLING
# ============================================================================

def sample_cluster_spec(n_sensors: int, n_clusters: int, seed: Seed = None) -> ClusterSpec:
    """One sensor per cluster first, the rest uniformly over clusters."""
    if n_clusters < 1 or n_clusters > n_sensors:
        raise SynthesisError(f"n_clusters must be in [1, {n_sensors}], got {n_clusters}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n_sensors)
    labels = np.empty(n_sensors, dtype=int)
    labels[order[:n_clusters]] = np.arange(1, n_clusters + 1)
    labels[order[n_clusters:]] = rng.integers(1, n_clusters + 1, size=n_sensors - n_clusters)
    return ClusterSpec(assignment=labels.tolist(), n_clusters=n_clusters)


def triangular_inverse_cdf(
    u: Union[float, np.ndarray],
    peak: float = DEFAULT_PEAK,
    low: float = DEFAULT_LOW,
    high: float = DEFAULT_HIGH,
) -> Union[float, np.ndarray]:
    """Quantile function of the triangular density with mode `peak` on [low, high]."""
    if not low < peak < high:
        raise SynthesisError(f"need low < peak < high, got ({low}, {peak}, {high})")
    u = np.asarray(u, dtype=float)
    width = high - low
    split = (peak - low) / width
    rising = low + np.sqrt(u * width * (peak - low))
    falling = high - np.sqrt((1.0 - u) * width * (high - peak))
    out = np.where(u < split, rising, falling)
    return float(out) if out.ndim == 0 else out


def sample_triangular(
    peak: float = DEFAULT_PEAK,
    low: float = DEFAULT_LOW,
    high: float = DEFAULT_HIGH,
    seed: Seed = None,
    size: Optional[int] = None,
) -> Union[float, np.ndarray]:
    """Draw correlation values by inverse-CDF sampling."""
    rng = np.random.default_rng(seed)
    return triangular_inverse_cdf(rng.random(size), peak=peak, low=low, high=high)

# ============================================================================
# CORRELATION MATRIX
# ============================================================================

def build_correlation_matrix(
    spec: ClusterSpec,
    seed: Seed = None,
    peak: float = DEFAULT_PEAK,
    low: float = DEFAULT_LOW,
    high: float = DEFAULT_HIGH,
) -> np.ndarray:
    """Triangular within-cluster correlations, zero across clusters, unit diagonal."""
    rng = np.random.default_rng(seed)
    labels = np.asarray(spec.assignment)
    n = labels.size
    c = np.eye(n)
    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    draws = sample_triangular(peak=peak, low=low, high=high, seed=rng, size=int(same.sum()))
    c[iu[same], ju[same]] = draws
    c[ju[same], iu[same]] = draws
    return c


def repair_psd(c: np.ndarray, floor: float = EIGEN_FLOOR) -> np.ndarray:
    """
    Clamp eigenvalues below `floor` up to `floor`, rebuild, and rescale to a
    unit diagonal (D^-1/2 C D^-1/2).
    """
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise SynthesisError(f"correlation matrix must be square, got shape {c.shape}")
    if not np.allclose(c, c.T, atol=1e-12, rtol=0.0):
        raise SynthesisError("correlation matrix is not symmetric")
    try:
        eigenvalues, eigenvectors = np.linalg.eigh(c)
    except np.linalg.LinAlgError as e:
        raise SynthesisError(f"eigendecomposition did not converge: {e}") from None

    clamped = np.maximum(eigenvalues, floor)
    n_clamped = int((eigenvalues < floor).sum())
    if n_clamped:
        logger.debug(f"Clamped {n_clamped} eigenvalues up to {floor}")
    rebuilt = (eigenvectors * clamped) @ eigenvectors.T
    rebuilt = 0.5 * (rebuilt + rebuilt.T)
    scale = 1.0 / np.sqrt(np.diag(rebuilt))
    repaired = rebuilt * np.outer(scale, scale)
    np.fill_diagonal(repaired, 1.0)
    return repaired

# ============================================================================
# DATA GENERATION
# ============================================================================

def generate_dataset(
    c: np.ndarray,
    n_readings: int,
    seed: Seed = None,
    names: Optional[Sequence[str]] = None,
) -> SensorDataset:
    """X = Z L^T with L the Cholesky factor of c; columns then min-max normalized."""
    c = np.asarray(c, dtype=float)
    try:
        chol = np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        raise SynthesisError("Cholesky factorization failed; run repair_psd first") from None
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_readings, c.shape[0]))
    names = tuple(names) if names is not None else tuple(f"s{j}" for j in range(c.shape[0]))
    scaled, _ = normalize(SensorDataset(names, z @ chol.T))
    return scaled


def generate_synthetic(
    n_sensors: int,
    n_clusters: int,
    n_readings: int,
    seed: Seed = None,
    peak: float = DEFAULT_PEAK,
    low: float = DEFAULT_LOW,
    high: float = DEFAULT_HIGH,
    floor: float = EIGEN_FLOOR,
) -> SyntheticDataset:
    """Planted-cluster dataset, ground truth and the correlation matrix used."""
    rng = np.random.default_rng(seed)
    spec = sample_cluster_spec(n_sensors, n_clusters, rng)
    corr = repair_psd(build_correlation_matrix(spec, rng, peak=peak, low=low, high=high), floor=floor)
    data = generate_dataset(corr, n_readings, rng)
    logger.info(
        f"🧪 Generated {n_sensors} sensors x {n_readings} readings in {n_clusters} planted clusters"
    )
    return SyntheticDataset(dataset=data, ground_truth=spec, correlation=corr)


def generate_latent_clusters(
    n_sensors: int,
    n_clusters: int,
    n_readings: int,
    noise: float = 0.05,
    seed: Seed = None,
) -> SyntheticDataset:
    """
    Every sensor is an affine copy of its cluster's uniform latent signal plus
    Gaussian noise, so each virtual sensor is a noisy linear function of any
    representative of its cluster.
    """
    rng = np.random.default_rng(seed)
    spec = sample_cluster_spec(n_sensors, n_clusters, rng)
    labels = np.asarray(spec.assignment) - 1
    latent = rng.random((n_readings, n_clusters))
    gain = rng.uniform(0.5, 1.5, size=n_sensors)
    offset = rng.uniform(-1.0, 1.0, size=n_sensors)
    readings = latent[:, labels] * gain + offset + noise * rng.standard_normal((n_readings, n_sensors))
    names = tuple(f"s{j}" for j in range(n_sensors))
    scaled, _ = normalize(SensorDataset(names, readings))
    corr = np.corrcoef(scaled.values, rowvar=False)
    return SyntheticDataset(dataset=scaled, ground_truth=spec, correlation=corr)


def ground_truth_json(spec: ClusterSpec, names: Sequence[str]) -> str:
    return json.dumps(spec.to_ground_truth(names), indent=2)
