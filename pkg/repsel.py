"""
Representative Sensor Selection
===============================
One physically retained sensor per cluster. Each member is scored by

    Q(s_i) = (1 - Var(c)) / max(1 - Mean(c), epsilon_q)

where c holds the Pearson correlations of s_i with every member of its
cluster, itself included. High mean and low spread of correlation win.
"""

import json
import logging
from typing import Dict, List, Sequence

import numpy as np
from pydantic import BaseModel, Field

from dataset import SensorDataset
from errors import ConstantSensorError, SelectionError
from kmeans import ClusteringSolution

logger = logging.getLogger("RepSel")

EPSILON_Q = 1e-9

# ============================================================================
# DATA MODELS
# ============================================================================

class QualityScore(BaseModel):
    sensor: int = Field(ge=0, description="sensor column index")
    q: float


class Representative(BaseModel):
    """Selected sensor of one cluster."""

    label: int = Field(ge=1)
    sensor: int = Field(ge=0)
    name: str
    quality: float

# ============================================================================
# CORRELATION
# ============================================================================

def pearson(a: Sequence[float], b: Sequence[float]) -> float:
    """Sample Pearson correlation of two reading vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise SelectionError(f"pearson needs two equal-length vectors, got {a.shape} and {b.shape}")
    if a.size < 2:
        raise SelectionError("pearson needs at least 2 readings")
    da = a - a.mean()
    db = b - b.mean()
    na = np.sqrt(np.dot(da, da))
    nb = np.sqrt(np.dot(db, db))
    if na == 0.0 or nb == 0.0:
        raise ConstantSensorError("correlation is undefined for a constant reading vector")
    return float(np.clip(np.dot(da, db) / (na * nb), -1.0, 1.0))


def _correlations(values: np.ndarray, names: Sequence[str]) -> np.ndarray:
    """Pairwise Pearson matrix of the columns, unit diagonal."""
    centered = values - values.mean(axis=0)
    norms = np.sqrt(np.sum(centered * centered, axis=0))
    constant = [names[j] for j in np.flatnonzero(norms == 0.0)]
    if constant:
        raise ConstantSensorError(f"constant sensors have no defined correlation: {constant}")
    unit = centered / norms
    r = np.clip(unit.T @ unit, -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    return r

# ============================================================================
# QUALITY
# ============================================================================

def _quality_from_row(c: np.ndarray, epsilon_q: float) -> float:
    mean = float(np.mean(c))
    var = float(np.var(c))
    return (1.0 - var) / max(1.0 - mean, epsilon_q)


def quality(i: int, cluster: Sequence[int], d: SensorDataset, epsilon_q: float = EPSILON_Q) -> QualityScore:
    members = [int(j) for j in cluster]
    if i not in members:
        raise SelectionError(f"sensor {i} is not in the cluster {members}")
    c = np.array([1.0 if j == i else pearson(d.values[:, i], d.values[:, j]) for j in members])
    return QualityScore(sensor=i, q=_quality_from_row(c, epsilon_q))


def cluster_qualities(members: Sequence[int], d: SensorDataset, epsilon_q: float = EPSILON_Q) -> List[QualityScore]:
    """Quality of every member of one cluster, in member order."""
    members = [int(j) for j in members]
    r = _correlations(d.values[:, members], [d.names[j] for j in members])
    return [QualityScore(sensor=j, q=_quality_from_row(r[k], epsilon_q)) for k, j in enumerate(members)]

# ============================================================================
# SELECTION
# ============================================================================

def select_representative_details(
    sol: ClusteringSolution,
    d: SensorDataset,
    epsilon_q: float = EPSILON_Q,
) -> List[Representative]:
    """Highest-quality member per cluster, ordered by label; lowest index on ties."""
    if sol.n_sensors != d.n_sensors:
        raise SelectionError(f"solution covers {sol.n_sensors} sensors, dataset has {d.n_sensors}")
    chosen = []
    for label, members in enumerate(sol.clusters(), start=1):
        scores = cluster_qualities(sorted(members.tolist()), d, epsilon_q)
        best = max(scores, key=lambda s: (s.q, -s.sensor))
        chosen.append(Representative(label=label, sensor=best.sensor, name=d.names[best.sensor], quality=best.q))
    logger.info(f"🎯 Selected {len(chosen)} representatives out of {d.n_sensors} sensors")
    return chosen


def select_representatives(sol: ClusteringSolution, d: SensorDataset, epsilon_q: float = EPSILON_Q) -> List[int]:
    return [r.sensor for r in select_representative_details(sol, d, epsilon_q)]


def representatives_to_json(reps: Sequence[Representative]) -> str:
    """{cluster_label: {"sensor": name, "quality": Q}}"""
    return json.dumps({str(r.label): {"sensor": r.name, "quality": r.quality} for r in reps}, indent=2)


def representatives_from_dict(payload: Dict[str, Dict], d: SensorDataset) -> List[Representative]:
    reps = []
    try:
        for label in sorted(payload, key=int):
            entry = payload[label]
            reps.append(Representative(
                label=int(label),
                sensor=d.index_of(entry["sensor"]),
                name=entry["sensor"],
                quality=float(entry.get("quality", float("nan"))),
            ))
    except KeyError as e:
        raise SelectionError(f"representative entry is missing {e}") from None
    except (TypeError, ValueError, AttributeError) as e:
        raise SelectionError(f"malformed representatives: {e}") from None
    return reps
