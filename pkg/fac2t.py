"""
FAC2T - Fusion using Ant Colony Clustering
==========================================
Fuses per-block K-Means solutions into one global M-cluster solution.

Each ant is a full sensor -> cluster assignment. Per iteration every ant
moves `beta` random sensors into the cluster of a pairing sensor sampled
from the pheromone table (uniformly every `tau`-th iteration), the table
evaporates by `alpha` and takes a (1 - alpha) deposit from every mutated
ant, and the best N_ants of old + mutated ants survive.

Objective (higher is better): sum over blocks of 1 / (inertia + epsilon_g).
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator

from dataset import BlockPartition
from errors import FusionError
from kmeans import ClusteringSolution, inertia

logger = logging.getLogger("FAC2T")

Seed = Union[int, np.random.Generator, None]
Objective = Callable[[ClusteringSolution], float]

ZERO_ROW_SUM = 1e-300

# ============================================================================
# DATA MODELS
# ============================================================================

class Fac2tParams(BaseModel):
    """Colony hyperparameters."""

    alpha: float = Field(default=0.8, gt=0.0, description="pheromone retention fraction")
    beta: int = Field(default=20, ge=0, description="sensors moved per ant per iteration")
    gamma: int = Field(default=20, ge=1, description="iterations between beta decrements")
    tau: Optional[int] = Field(default=10, ge=1, description="period of uniform pairing; None = never")
    theta: float = Field(default=1.007, gt=0.0, description="per-iteration alpha growth factor")
    n_ants: int = Field(default=20, ge=1)
    iterations: int = Field(default=200, ge=0)
    alpha_max: float = Field(default=0.995, lt=1.0)
    epsilon_g: float = Field(default=1e-12, gt=0.0, description="objective guard against zero inertia")
    delta: Optional[float] = Field(default=15, description="accepted for compatibility, unused")
    patience: Optional[int] = Field(default=None, ge=1, description="stop after this many flat iterations")
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _alpha_range(self):
        if not 0.0 < self.alpha <= self.alpha_max < 1.0:
            raise ValueError(f"need 0 < alpha <= alpha_max < 1, got alpha={self.alpha}, alpha_max={self.alpha_max}")
        return self


@dataclass(frozen=True)
class PheromoneTable:
    """Symmetric nonnegative sensor-pair scores."""

    matrix: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "PheromoneTable":
        return cls(np.zeros((n, n)))

    @property
    def n_sensors(self) -> int:
        return self.matrix.shape[0]


@dataclass
class Colony:
    ants: List[ClusteringSolution]
    metrics: List[float]

    def __post_init__(self):
        if len(self.ants) != len(self.metrics):
            raise FusionError(f"{len(self.ants)} ants but {len(self.metrics)} metrics")

    def __len__(self) -> int:
        return len(self.ants)

    def best(self) -> Tuple[ClusteringSolution, float]:
        """Highest metric; lowest index on ties."""
        i = int(np.argmax(self.metrics))
        return self.ants[i], self.metrics[i]

    def mean_metric(self) -> float:
        return float(np.mean(self.metrics))


class HistoryRow(BaseModel):
    iteration: int
    best_metric: float
    mean_metric: float
    alpha: float
    beta: int


class RunHistory(BaseModel):
    """Per-iteration colony statistics; row 0 is the initial colony."""

    rows: List[HistoryRow] = Field(default_factory=list)

    def best_metrics(self) -> List[float]:
        return [r.best_metric for r in self.rows]

    def to_frame(self) -> pd.DataFrame:
        columns = ["iteration", "best_metric", "mean_metric", "alpha", "beta"]
        return pd.DataFrame([r.model_dump() for r in self.rows], columns=columns)

# ============================================================================
# OBJECTIVE
# ============================================================================

def objective(sol: ClusteringSolution, blocks: BlockPartition, epsilon_g: float = 1e-12) -> float:
    """Sum over blocks of 1 / (inertia of the block's sensor vectors + epsilon_g)."""
    if blocks.n_blocks == 0:
        raise FusionError("objective needs at least one block")
    return float(sum(1.0 / (inertia(blocks.sensor_vectors(b), sol) + epsilon_g) for b in range(blocks.n_blocks)))


class BlockObjective:
    """Block-wise objective evaluated on all blocks at once."""

    def __init__(self, blocks: BlockPartition, epsilon_g: float = 1e-12):
        if blocks.n_blocks == 0:
            raise FusionError("objective needs at least one block")
        self.epsilon_g = epsilon_g
        self._stacked = blocks.stacked()  # (L, N, B)

    def block_inertias(self, sol: ClusteringSolution) -> np.ndarray:
        labels = sol.labels() - 1
        onehot = np.zeros((labels.size, sol.m))
        onehot[np.arange(labels.size), labels] = 1.0
        means = (onehot.T @ self._stacked) / onehot.sum(axis=0)[:, None]
        residual = self._stacked - means[:, labels, :]
        return np.einsum("lnb,lnb->l", residual, residual)

    def __call__(self, sol: ClusteringSolution) -> float:
        return float(np.sum(1.0 / (self.block_inertias(sol) + self.epsilon_g)))

# ============================================================================
# PHEROMONE
# ============================================================================

def adjacency(sol: ClusteringSolution) -> np.ndarray:
    """F_ij = 1 iff sensors i and j share a cluster (diagonal included)."""
    labels = sol.labels()
    return (labels[:, None] == labels[None, :]).astype(float)


def _deposit(colony: Colony) -> np.ndarray:
    n = colony.ants[0].n_sensors
    total = np.zeros((n, n))
    for ant, metric in zip(colony.ants, colony.metrics):
        total += metric * adjacency(ant)
    return total


def pheromone_update(p: PheromoneTable, colony: Colony, alpha: float) -> PheromoneTable:
    """P' = alpha * P + (1 - alpha) * sum_k g(a_k) F(a_k)."""
    return PheromoneTable(alpha * p.matrix + (1.0 - alpha) * _deposit(colony))

# ============================================================================
# COLONY OPERATIONS
# ============================================================================

def _check_solutions(solutions: Sequence[ClusteringSolution]) -> None:
    if not solutions:
        raise FusionError("no initial clustering solutions")
    m, n = solutions[0].m, solutions[0].n_sensors
    for s in solutions:
        if s.m != m or s.n_sensors != n:
            raise FusionError("initial solutions disagree on sensor count or cluster count")


def init_colony(
    solutions: Sequence[ClusteringSolution],
    p: Fac2tParams,
    blocks: BlockPartition,
    seed: Seed = None,
    objective_fn: Optional[Objective] = None,
) -> Tuple[Colony, PheromoneTable]:
    """
    Seed ants from block solutions: floor(n_ants / L) copies of each plus
    random extras when n_ants > L, otherwise the n_ants best by objective.
    """
    _check_solutions(solutions)
    objective_fn = objective_fn or BlockObjective(blocks, p.epsilon_g)
    rng = np.random.default_rng(seed)
    n_blocks = len(solutions)

    if p.n_ants > n_blocks:
        per_block = p.n_ants // n_blocks
        ants = [s for s in solutions for _ in range(per_block)]
        extra = rng.integers(0, n_blocks, size=p.n_ants - len(ants))
        ants.extend(solutions[int(i)] for i in extra)
        metrics = [objective_fn(a) for a in ants]
    else:
        scored = [objective_fn(s) for s in solutions]
        order = sorted(range(n_blocks), key=lambda i: -scored[i])[: p.n_ants]
        ants = [solutions[i] for i in order]
        metrics = [scored[i] for i in order]

    colony = Colony(ants=list(ants), metrics=metrics)
    pheromone = PheromoneTable(_deposit(colony))
    return colony, pheromone


def _sample_pairing(s: int, p: np.ndarray, uniform: bool, rng: np.random.Generator) -> int:
    n = p.shape[0]
    if not uniform:
        weights = p[s].copy()
        weights[s] = 0.0
        total = weights.sum()
        if total >= ZERO_ROW_SUM:
            return int(rng.choice(n, p=weights / total))
    j = int(rng.integers(n - 1))
    return j + 1 if j >= s else j


def mutate_ant(
    ant: ClusteringSolution,
    p: PheromoneTable,
    beta: int,
    iter_index: int,
    tau: Optional[int],
    seed: Seed = None,
) -> ClusteringSolution:
    """
    Move `beta` distinct random sensors into the cluster of a sampled pairing
    sensor. A sensor leaving a singleton cluster first pulls in the member of
    the target cluster with the lowest pheromone affinity to that cluster, so
    the ant keeps exactly M clusters.
    """
    n = ant.n_sensors
    k = min(beta, n)
    if k <= 0 or n < 2:
        return ant

    rng = np.random.default_rng(seed)
    table = p.matrix
    labels = ant.labels().copy()
    sizes = np.bincount(labels, minlength=ant.m + 1)
    uniform = tau is not None and iter_index % tau == 0

    for s in rng.choice(n, size=k, replace=False):
        j = _sample_pairing(int(s), table, uniform, rng)
        x, y = labels[s], labels[j]
        if x == y:
            continue
        if sizes[x] == 1:
            members = np.flatnonzero(labels == y)
            affinity = table[np.ix_(members, members)].sum(axis=1)
            z = members[int(np.argmin(affinity))]
            labels[z] = x
            sizes[y] -= 1
            sizes[x] += 1
        labels[s] = y
        sizes[x] -= 1
        sizes[y] += 1

    return ClusteringSolution.from_labels(labels, ant.m)


def select_survivors(previous: Colony, mutated: Colony) -> Colony:
    """Best len(previous) ants of both colonies; previous ants win ties, then lower index."""
    ants = previous.ants + mutated.ants
    metrics = previous.metrics + mutated.metrics
    order = sorted(range(len(ants)), key=lambda i: -metrics[i])[: len(previous)]
    return Colony(ants=[ants[i] for i in order], metrics=[metrics[i] for i in order])

# ============================================================================
# MAIN LOOP
# ============================================================================

@dataclass
class Fac2tState:
    """Snapshot handed to per-iteration callbacks."""

    iteration: int
    colony: Colony
    pheromone: PheromoneTable
    alpha: float
    beta: int


def run_fac2t(
    blocks: BlockPartition,
    init_solutions: Sequence[ClusteringSolution],
    p: Fac2tParams,
    seed: Seed = None,
    objective_fn: Optional[Objective] = None,
    callback: Optional[Callable[[Fac2tState], None]] = None,
) -> Tuple[ClusteringSolution, RunHistory]:
    """
    Run the colony for p.iterations (or until p.patience flat iterations)
    and return the best ant ever seen with the per-iteration history.
    """
    objective_fn = objective_fn or BlockObjective(blocks, p.epsilon_g)
    rng = np.random.default_rng(seed)
    colony, pheromone = init_colony(init_solutions, p, blocks, rng, objective_fn)

    alpha, beta = p.alpha, p.beta
    best_ant, best_metric = colony.best()
    history = RunHistory(rows=[HistoryRow(
        iteration=0, best_metric=best_metric, mean_metric=colony.mean_metric(), alpha=alpha, beta=beta,
    )])
    if callback:
        callback(Fac2tState(0, colony, pheromone, alpha, beta))

    logger.info(
        f"🐜 FAC2T start: {len(colony)} ants, {best_ant.n_sensors} sensors, M={best_ant.m}, "
        f"{blocks.n_blocks} blocks, initial best {best_metric:.6g}"
    )
    pool = ThreadPoolExecutor(max_workers=p.workers) if p.workers > 1 else None
    flat = 0
    try:
        for n in range(1, p.iterations + 1):
            child_seeds = rng.integers(0, 2**62, size=len(colony))
            snapshot = pheromone

            def step(k: int) -> Tuple[ClusteringSolution, float]:
                ant = mutate_ant(colony.ants[k], snapshot, beta, n, p.tau, child_seeds[k])
                return ant, objective_fn(ant)

            results = list(pool.map(step, range(len(colony)))) if pool else [step(k) for k in range(len(colony))]
            mutated = Colony(ants=[a for a, _ in results], metrics=[g for _, g in results])

            pheromone = pheromone_update(pheromone, mutated, alpha)
            colony = select_survivors(colony, mutated)

            leader, leader_metric = colony.best()
            if leader_metric > best_metric:
                best_ant, best_metric = leader, leader_metric
                flat = 0
            else:
                flat += 1

            history.rows.append(HistoryRow(
                iteration=n, best_metric=best_metric, mean_metric=colony.mean_metric(), alpha=alpha, beta=beta,
            ))
            if callback:
                callback(Fac2tState(n, colony, pheromone, alpha, beta))
            logger.debug(f"iter {n}: best={best_metric:.6g} mean={colony.mean_metric():.6g} alpha={alpha:.4f} beta={beta}")

            if n % p.gamma == 0 and beta > 1:
                beta -= 1
            alpha = min(alpha * p.theta, p.alpha_max)

            if p.patience is not None and flat >= p.patience:
                logger.info(f"⏹️  Metric saturated for {flat} iterations; stopping at iteration {n}")
                break
    finally:
        if pool:
            pool.shutdown()

    logger.info(f"✅ FAC2T done: best metric {best_metric:.6g} after {len(history.rows) - 1} iterations")
    return best_ant, history
