"""
K-Means Over Sensors
====================
Points are sensors: within a block, each sensor is the vector of its
readings, so the block matrix is used transposed. Lloyd iterations start
from k-means++ seeding; an emptied cluster takes over the point farthest
from its own centroid, which keeps exactly m clusters in use.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from dataset import BlockPartition
from errors import ClusteringError

logger = logging.getLogger("KMeans")

Seed = Union[int, np.random.Generator, None]

# ============================================================================
# DATA MODELS
# ============================================================================

class ClusteringSolution(BaseModel):
    """Sensor -> cluster assignment with labels 1..m, every label in use."""

    model_config = ConfigDict(frozen=True)

    assignment: Tuple[int, ...]
    m: int = Field(ge=1)

    @model_validator(mode="after")
    def _every_cluster_nonempty(self):
        used = set(self.assignment)
        if used != set(range(1, self.m + 1)):
            raise ValueError(
                f"solution must use every label 1..{self.m} exactly; got labels {sorted(used)}"
            )
        return self

    @classmethod
    def from_labels(cls, labels: Sequence[int], m: int) -> "ClusteringSolution":
        """Build from 1-based labels."""
        try:
            return cls(assignment=tuple(int(x) for x in labels), m=int(m))
        except ValueError as e:
            raise ClusteringError(str(e)) from None

    @property
    def n_sensors(self) -> int:
        return len(self.assignment)

    def labels(self) -> np.ndarray:
        """1-based label array."""
        return np.asarray(self.assignment, dtype=int)

    def clusters(self) -> List[np.ndarray]:
        """Member indices per cluster, ordered by label."""
        labels = self.labels()
        return [np.flatnonzero(labels == k) for k in range(1, self.m + 1)]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels(), minlength=self.m + 1)[1:]

    def to_json_dict(self, names: Sequence[str]) -> Dict[str, List[str]]:
        return {str(k + 1): [names[i] for i in members] for k, members in enumerate(self.clusters())}

    @classmethod
    def from_json_dict(cls, payload: Dict[str, List[str]], names: Sequence[str]) -> "ClusteringSolution":
        index = {n: i for i, n in enumerate(names)}
        labels = [0] * len(names)
        try:
            for label, members in payload.items():
                for name in members:
                    labels[index[name]] = int(label)
        except KeyError as e:
            raise ClusteringError(f"clustering names unknown sensor {e}") from None
        except (TypeError, ValueError, AttributeError) as e:
            raise ClusteringError(f"malformed clustering: {e}") from None
        return cls.from_labels(labels, len(payload))


@dataclass(frozen=True)
class KMeansResult:
    solution: ClusteringSolution
    centroids: np.ndarray
    inertia: float
    n_iter: int
    inertia_history: Tuple[float, ...]

# ============================================================================
# LLOYD ITERATIONS
# ============================================================================

def _sq_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n_points, m) squared Euclidean distances."""
    d2 = (
        np.sum(points * points, axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + np.sum(centroids * centroids, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _means(points: np.ndarray, labels: np.ndarray, m: int) -> np.ndarray:
    onehot = np.zeros((points.shape[0], m))
    onehot[np.arange(points.shape[0]), labels] = 1.0
    counts = onehot.sum(axis=0)
    return (onehot.T @ points) / counts[:, None]


def _label_inertia(points: np.ndarray, labels: np.ndarray, m: int) -> float:
    residual = points - _means(points, labels, m)[labels]
    return float(np.sum(residual * residual))


def _seed_plus_plus(points: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((m, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for k in range(1, m):
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centroids[k] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centroids[k]) ** 2, axis=1))
    return centroids


def _repair_empty(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> None:
    """Give each empty cluster the point farthest from its centroid, in place."""
    m = centroids.shape[0]
    counts = np.bincount(labels, minlength=m)
    for k in np.flatnonzero(counts == 0):
        dist = np.sum((points - centroids[labels]) ** 2, axis=1)
        dist[counts[labels] < 2] = -1.0
        i = int(np.argmax(dist))
        counts[labels[i]] -= 1
        labels[i] = k
        counts[k] = 1
        centroids[k] = points[i]


def _lloyd(points, m, rng, max_iter, tol) -> KMeansResult:
    centroids = _seed_plus_plus(points, m, rng)
    labels = np.argmin(_sq_distances(points, centroids), axis=1)
    _repair_empty(points, labels, centroids)
    history = [_label_inertia(points, labels, m)]

    n_iter = 0
    for it in range(max_iter):
        updated = _means(points, labels, m)
        shift = float(np.sqrt(np.sum((updated - centroids) ** 2, axis=1)).max())
        centroids = updated
        labels = np.argmin(_sq_distances(points, centroids), axis=1)
        _repair_empty(points, labels, centroids)
        history.append(_label_inertia(points, labels, m))
        n_iter = it + 1
        if shift < tol:
            break

    return KMeansResult(
        solution=ClusteringSolution.from_labels(labels + 1, m),
        centroids=_means(points, labels, m),
        inertia=history[-1],
        n_iter=n_iter,
        inertia_history=tuple(history),
    )


def fit_kmeans(
    points: np.ndarray,
    m: int,
    seed: Seed = None,
    max_iter: int = 300,
    tol: float = 1e-6,
    n_init: int = 1,
) -> KMeansResult:
    """Best of `n_init` k-means++/Lloyd runs by inertia."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ClusteringError(f"points must be 2-D, got shape {points.shape}")
    if not np.isfinite(points).all():
        raise ClusteringError("points contain non-finite values")
    if m < 1 or m > points.shape[0]:
        raise ClusteringError(f"m must be in [1, {points.shape[0]}], got {m}")
    if n_init < 1:
        raise ClusteringError(f"n_init must be >= 1, got {n_init}")

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        result = _lloyd(points, m, rng, max_iter, tol)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def kmeans(
    points: np.ndarray,
    m: int,
    seed: Seed = None,
    max_iter: int = 300,
    tol: float = 1e-6,
    n_init: int = 1,
) -> ClusteringSolution:
    return fit_kmeans(points, m, seed=seed, max_iter=max_iter, tol=tol, n_init=n_init).solution


def inertia(points: np.ndarray, solution: ClusteringSolution) -> float:
    """Total squared distance of every point to its cluster mean."""
    points = np.asarray(points, dtype=float)
    if points.shape[0] != solution.n_sensors:
        raise ClusteringError(f"{points.shape[0]} points for a {solution.n_sensors}-sensor solution")
    return _label_inertia(points, solution.labels() - 1, solution.m)


def cluster_all_blocks(
    p: BlockPartition,
    m: int,
    seed: Seed = None,
    max_iter: int = 300,
    tol: float = 1e-6,
    n_init: int = 1,
    workers: int = 1,
) -> List[ClusteringSolution]:
    """One K-Means solution per block; every block is seeded identically."""
    if p.n_blocks == 0:
        raise ClusteringError("partition has no blocks")
    base = seed if isinstance(seed, (int, np.integer)) or seed is None else int(seed.integers(2**62))

    def run(b: int) -> ClusteringSolution:
        return kmeans(p.sensor_vectors(b), m, seed=base, max_iter=max_iter, tol=tol, n_init=n_init)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            solutions = list(pool.map(run, range(p.n_blocks)))
    else:
        solutions = [run(b) for b in range(p.n_blocks)]
    logger.info(f"🔹 Clustered {p.n_blocks} blocks into {m} clusters each")
    return solutions
