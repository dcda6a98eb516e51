"""
Virtual Sensor Pipeline
=======================
The end-to-end loop and the two synthetic fusion experiments.

run_pipeline:
    load -> clean -> split -> normalize on train -> M0 from PCA -> for M = M0, M0+1, ...:
    block K-Means -> FAC2T -> representatives -> regressors -> test MSE,
    stopping at the first M whose mean test MSE meets the threshold
    (or at max_clusters). With `cluster_counts` set, every listed M is
    evaluated instead (sweep mode).

run_experiment_a:
    FAC2T best ant vs whole-data K-Means vs the planted clustering on
    generated datasets.

run_experiment_b:
    FAC2T started from deliberately corrupted block solutions.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError, model_validator
from sklearn.metrics import adjusted_rand_score

import artifact_store as files
from artifact_store import ArtifactStore
from dataset import (
    BlockPartition,
    SensorDataset,
    apply_norm,
    clean_missing,
    fit_norm,
    load_csv,
    partition_blocks,
    split_train_test,
)
from errors import ConfigError, PipelineError
from fac2t import Fac2tParams, Fac2tState, RunHistory, objective, run_fac2t
from kmeans import ClusteringSolution, cluster_all_blocks, kmeans
from pca import estimate_min_sensors
from regress import MODEL_KINDS, ModelKind, RegressorSettings, VirtualSensorModel, mse, train_virtual_sensors
from repsel import Representative, representatives_to_json, select_representative_details
from synthgen import ground_truth_json, generate_synthetic

logger = logging.getLogger("Pipeline")

REPORT_COLUMNS = [
    "dataset_id", "m", "seed",
    "fac2t_objective", "kmeans_objective", "ideal_objective", "ari",
    "initial_objective", "initial_ari",
]

# ============================================================================
# CONFIGURATION
# ============================================================================

class SyntheticSettings(BaseModel):
    """Generation settings for the fusion experiments."""

    n_datasets: int = Field(default=10, ge=1)
    n_sensors: int = Field(default=60, ge=2)
    n_blocks: int = Field(default=10, ge=1)
    block_size: int = Field(default=500, ge=2)
    cluster_counts: List[int] = Field(default_factory=lambda: [5, 10])
    peak: float = 0.75
    low: float = 0.5
    high: float = 1.0
    corruption_fraction: float = Field(default=0.3, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _counts_fit(self):
        bad = [m for m in self.cluster_counts if not 1 <= m <= self.n_sensors]
        if not self.cluster_counts or bad:
            raise ValueError(f"cluster_counts must be non-empty and within [1, {self.n_sensors}], got {self.cluster_counts}")
        return self


class PipelineConfig(BaseModel):
    """Every knob of a pipeline or experiment run; JSON keys mirror field names."""

    input_path: Optional[str] = None
    header: bool = True
    block_size: int = Field(default=100, ge=2)
    variance_fraction: float = Field(default=0.95, gt=0.0, le=1.0)
    fac2t: Fac2tParams = Field(default_factory=Fac2tParams)
    regressors: List[ModelKind] = Field(default_factory=lambda: list(MODEL_KINDS))
    mse_threshold: float = Field(default=0.01, gt=0.0)
    max_clusters: Optional[int] = Field(default=None, ge=1)
    cluster_counts: Optional[List[int]] = None
    seed: int = Field(default=0, ge=0)
    train_fraction: float = Field(default=0.8, gt=0.0, lt=1.0)
    kmeans_max_iter: int = Field(default=300, ge=1)
    kmeans_tol: float = Field(default=1e-6, ge=0.0)
    kmeans_n_init: int = Field(default=1, ge=1)
    regressor: RegressorSettings = Field(default_factory=RegressorSettings)
    synthetic: SyntheticSettings = Field(default_factory=SyntheticSettings)
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _regressors_present(self):
        if not self.regressors:
            raise ValueError("at least one regressor kind is required")
        return self

    @classmethod
    def from_json_file(cls, path: Union[str, Path]) -> "PipelineConfig":
        path = Path(path)
        try:
            return cls.model_validate_json(path.read_text(encoding="utf-8"))
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        except ValidationError as e:
            raise ConfigError(f"invalid config {path}: {e.errors()[0]['loc']} {e.errors()[0]['msg']}") from None

# ============================================================================
# REPORT
# ============================================================================

class ReportRow(BaseModel):
    dataset_id: int = 0
    m: int
    seed: int
    fac2t_objective: Optional[float] = None
    kmeans_objective: Optional[float] = None
    ideal_objective: Optional[float] = None
    ari: Optional[float] = None
    initial_objective: Optional[float] = None
    initial_ari: Optional[float] = None
    mse: Dict[str, float] = Field(default_factory=dict)
    virtual_fraction: Optional[float] = None

    @model_validator(mode="after")
    def _finite(self):
        values = [v for v in self.model_dump(exclude={"mse"}).values() if isinstance(v, float)]
        values += list(self.mse.values())
        if not all(math.isfinite(v) for v in values):
            raise ValueError("report metrics must be finite")
        return self

    @property
    def mean_mse(self) -> Optional[float]:
        return float(np.mean(list(self.mse.values()))) if self.mse else None


class ExperimentReport(BaseModel):
    """Rows keyed by (dataset_id, m, seed)."""

    rows: List[ReportRow] = Field(default_factory=list)

    def add(self, row: ReportRow) -> None:
        key = (row.dataset_id, row.m, row.seed)
        if any((r.dataset_id, r.m, r.seed) == key for r in self.rows):
            raise PipelineError(f"duplicate report row {key}")
        self.rows.append(row)

    def to_frame(self) -> pd.DataFrame:
        kinds = [k for k in MODEL_KINDS if any(k in r.mse for r in self.rows)]
        records = []
        for r in self.rows:
            record = {c: getattr(r, c) for c in REPORT_COLUMNS}
            for k in kinds:
                record[f"mse_{k}"] = r.mse.get(k)
            record["mean_mse"] = r.mean_mse
            record["virtual_fraction"] = r.virtual_fraction
            records.append(record)
        columns = REPORT_COLUMNS + [f"mse_{k}" for k in kinds] + ["mean_mse", "virtual_fraction"]
        return pd.DataFrame.from_records(records, columns=columns)

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format=files.FLOAT_FORMAT)

    def mse_table(self) -> pd.DataFrame:
        """Test MSE with one row per regressor and one column per cluster count."""
        frame = self.to_frame()
        kinds = [c for c in frame.columns if c.startswith("mse_")]
        table = frame.groupby("m")[kinds].mean().T
        table.index = [k[len("mse_"):] for k in kinds]
        return table

# ============================================================================
# METRICS
# ============================================================================

def adjusted_rand_index(a: ClusteringSolution, b: ClusteringSolution) -> float:
    if a.n_sensors != b.n_sensors:
        raise PipelineError(f"cannot compare partitions of {a.n_sensors} and {b.n_sensors} sensors")
    return float(adjusted_rand_score(a.labels(), b.labels()))


def _stage_seeds(seed: int, dataset_id: int, m: int) -> Dict[str, int]:
    """Independent seeds for every random stage of one (dataset, M) row."""
    state = np.random.SeedSequence([seed, dataset_id, m]).generate_state(6)
    return dict(zip(["data", "blocks", "fac2t", "whole", "corrupt", "regress"], (int(s) for s in state)))

# ============================================================================
# END-TO-END LOOP
# ============================================================================

@dataclass
class StageResult:
    """Everything produced while evaluating one cluster count."""

    m: int
    solution: ClusteringSolution
    history: RunHistory
    representatives: List[Representative]
    models: Dict[str, VirtualSensorModel] = field(default_factory=dict)
    predictions: Dict[str, np.ndarray] = field(default_factory=dict)
    actual: Optional[np.ndarray] = None
    row: Optional[ReportRow] = None


def _fuse(
    blocks: BlockPartition,
    m: int,
    cfg: PipelineConfig,
    seeds: Dict[str, int],
) -> Tuple[ClusteringSolution, RunHistory]:
    solutions = cluster_all_blocks(
        blocks, m, seed=seeds["blocks"], max_iter=cfg.kmeans_max_iter, tol=cfg.kmeans_tol,
        n_init=cfg.kmeans_n_init, workers=cfg.workers,
    )
    return run_fac2t(blocks, solutions, cfg.fac2t, seed=seeds["fac2t"])


def _whole_kmeans(d: SensorDataset, m: int, cfg: PipelineConfig, seed: int) -> ClusteringSolution:
    return kmeans(d.values.T, m, seed=seed, max_iter=cfg.kmeans_max_iter, tol=cfg.kmeans_tol, n_init=cfg.kmeans_n_init)


def _evaluate_m(m: int, train: SensorDataset, test: SensorDataset, cfg: PipelineConfig, norm) -> StageResult:
    logger.info(f"🔁 Evaluating M = {m}")
    seeds = _stage_seeds(cfg.seed, 0, m)
    blocks = partition_blocks(train, min(cfg.block_size, train.n_samples))
    best, history = _fuse(blocks, m, cfg, seeds)
    whole = _whole_kmeans(train, m, cfg, seeds["whole"])
    reps = select_representative_details(best, train)
    stage = StageResult(m=m, solution=best, history=history, representatives=reps)

    rep_names = [r.name for r in reps]
    virtual = [n for n in train.names if n not in set(rep_names)]
    mse_by_kind: Dict[str, float] = {}
    if virtual:
        stage.actual = test.select(virtual).values
        for kind in cfg.regressors:
            model = train_virtual_sensors(kind, train, rep_names, cfg.regressor, seed=seeds["regress"], norm_params=norm)
            stage.models[kind] = model
            stage.predictions[kind] = model.predict_dataset(test)
            mse_by_kind[kind] = mse(stage.predictions[kind], stage.actual)
    else:
        mse_by_kind = {kind: 0.0 for kind in cfg.regressors}

    stage.row = ReportRow(
        dataset_id=0,
        m=m,
        seed=cfg.seed,
        fac2t_objective=objective(best, blocks, cfg.fac2t.epsilon_g),
        kmeans_objective=objective(whole, blocks, cfg.fac2t.epsilon_g),
        mse=mse_by_kind,
        virtual_fraction=len(virtual) / train.n_sensors,
    )
    logger.info(f"📊 M = {m}: mean test MSE {stage.row.mean_mse:.6g} ({len(virtual)} virtual sensors)")
    return stage


def _predictions_frame(stage: StageResult) -> pd.DataFrame:
    virtual = list(stage.models[next(iter(stage.models))].outputs) if stage.models else []
    frame = pd.DataFrame({"sample": np.arange(0 if stage.actual is None else stage.actual.shape[0])})
    for j, name in enumerate(virtual):
        frame[name] = stage.actual[:, j]
        for kind, pred in stage.predictions.items():
            frame[f"{name}_{kind}"] = pred[:, j]
    return frame


def _write_stage(store: ArtifactStore, stage: StageResult, names: Sequence[str]) -> None:
    store.save_json(files.CLUSTERING_JSON, stage.solution.to_json_dict(names))
    store.save_json(files.REPRESENTATIVES_JSON, representatives_to_json(stage.representatives))
    if stage.models:
        best_kind = min(stage.row.mse, key=lambda k: (stage.row.mse[k], MODEL_KINDS.index(k)))
        store.save_json(files.MODEL_JSON, stage.models[best_kind].to_json())
        for kind, model in stage.models.items():
            store.save_json(f"model_{kind}.json", model.to_json())
    store.save_frame(files.PREDICTIONS_CSV, _predictions_frame(stage))


def _metrics_frame(stages: Sequence[StageResult]) -> pd.DataFrame:
    records = []
    for s in stages:
        for kind, value in s.row.mse.items():
            model = s.models.get(kind)
            records.append({"m": s.m, "kind": kind, "test_mse": value, "fit_seconds": model.fit_seconds if model else 0.0})
    return pd.DataFrame.from_records(records, columns=["m", "kind", "test_mse", "fit_seconds"])


def _history_frame(stages: Sequence[StageResult]) -> pd.DataFrame:
    frames = []
    for s in stages:
        frame = s.history.to_frame()
        frame.insert(0, "m", s.m)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def prepare_dataset(cfg: PipelineConfig, dataset: Optional[SensorDataset] = None):
    """
    Load (unless given), clean, split, then min-max scale both splits with
    bounds fitted on the training rows. Test values may fall outside [0, 1].
    Returns (train, test, norm_params).
    """
    if dataset is None:
        if not cfg.input_path:
            raise ConfigError("input_path is required for the pipeline")
        dataset = load_csv(cfg.input_path, header=cfg.header)
    cleaned = clean_missing(dataset)
    raw_train, raw_test = split_train_test(cleaned, cfg.train_fraction, cfg.seed)
    norm = fit_norm(raw_train)
    constant = [n for n, b in norm.bounds.items() if b.max == b.min]
    if constant:
        raise PipelineError(f"constant sensors carry no information, remove them first: {constant}")
    train, test = apply_norm(raw_train, norm), apply_norm(raw_test, norm)
    logger.info(f"✂️  Split {cleaned.n_samples} rows into {train.n_samples} train / {test.n_samples} test")
    return train, test, norm


def run_pipeline(
    cfg: PipelineConfig,
    store: Optional[ArtifactStore] = None,
    dataset: Optional[SensorDataset] = None,
) -> ExperimentReport:
    """
    Grow M from the PCA estimate until the mean test MSE over all
    regressors is at most cfg.mse_threshold, or sweep cfg.cluster_counts.
    Artifacts of the accepted (or last swept) M go to `store` when given.
    """
    train, test, norm = prepare_dataset(cfg, dataset)
    n = train.n_sensors
    max_clusters = cfg.max_clusters if cfg.max_clusters is not None else n
    if max_clusters > n:
        raise ConfigError(f"max_clusters {max_clusters} exceeds the {n} available sensors")

    report = ExperimentReport()
    stages: List[StageResult] = []
    if cfg.cluster_counts:
        bad = [m for m in cfg.cluster_counts if not 1 <= m <= n]
        if bad:
            raise ConfigError(f"cluster_counts {bad} outside [1, {n}]")
        for m in cfg.cluster_counts:
            stages.append(_evaluate_m(m, train, test, cfg, norm))
            report.add(stages[-1].row)
    else:
        m = min(estimate_min_sensors(train, cfg.variance_fraction), max_clusters)
        while True:
            stage = _evaluate_m(m, train, test, cfg, norm)
            stages.append(stage)
            report.add(stage.row)
            if stage.row.mean_mse <= cfg.mse_threshold:
                logger.info(f"✅ Accepted M = {m} (mean MSE {stage.row.mean_mse:.6g} <= {cfg.mse_threshold})")
                break
            if m >= max_clusters:
                logger.warning(f"⚠️  Reached max_clusters = {max_clusters} without meeting the MSE threshold")
                break
            m += 1

    if store is not None:
        _write_stage(store, stages[-1], train.names)
        store.save_json(files.NORM_PARAMS_JSON, norm.to_json())
        store.save_frame(files.METRICS_CSV, _metrics_frame(stages))
        store.save_frame(files.HISTORY_CSV, _history_frame(stages))
        store.save_frame(files.REPORT_CSV, report.to_frame())
    return report

# ============================================================================
# EXPERIMENT A
# ============================================================================

def _experiment_a_row(cfg: PipelineConfig, dataset_id: int, m: int) -> Tuple[ReportRow, RunHistory]:
    s = cfg.synthetic
    seeds = _stage_seeds(cfg.seed, dataset_id, m)
    synth = generate_synthetic(
        s.n_sensors, m, s.n_blocks * s.block_size, seed=seeds["data"], peak=s.peak, low=s.low, high=s.high,
    )
    blocks = partition_blocks(synth.dataset, s.block_size)
    best, history = _fuse(blocks, m, cfg, seeds)
    whole = _whole_kmeans(synth.dataset, m, cfg, seeds["whole"])
    ideal = ClusteringSolution.from_labels(synth.ground_truth.assignment, m)
    eps = cfg.fac2t.epsilon_g
    row = ReportRow(
        dataset_id=dataset_id,
        m=m,
        seed=cfg.seed,
        fac2t_objective=objective(best, blocks, eps),
        kmeans_objective=objective(whole, blocks, eps),
        ideal_objective=objective(ideal, blocks, eps),
        ari=adjusted_rand_index(best, ideal),
    )
    return row, history


def run_experiment_a(cfg: PipelineConfig) -> ExperimentReport:
    """One row per (generated dataset, M): FAC2T, whole-data K-Means and planted objectives."""
    jobs = [(d, m) for d in range(cfg.synthetic.n_datasets) for m in cfg.synthetic.cluster_counts]
    logger.info(f"🧪 Experiment A: {len(jobs)} runs")
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda job: _experiment_a_row(cfg, *job), jobs))
    else:
        results = [_experiment_a_row(cfg, d, m) for d, m in jobs]

    report = ExperimentReport()
    for row, _ in results:
        report.add(row)
    wins = sum(r.fac2t_objective >= r.kmeans_objective for r in report.rows)
    logger.info(f"✅ Experiment A done: FAC2T >= K-Means in {wins}/{len(report.rows)} runs")
    return report

# ============================================================================
# EXPERIMENT B
# ============================================================================

def corrupt_solution(sol: ClusteringSolution, fraction: float, seed=None) -> ClusteringSolution:
    """
    Move round(fraction * N) random sensors to uniformly random clusters. A
    sensor leaving a singleton cluster swaps with a random member of its
    target cluster so all M clusters stay in use.
    """
    if not 0.0 <= fraction <= 1.0:
        raise PipelineError(f"corruption fraction must be in [0, 1], got {fraction}")
    rng = np.random.default_rng(seed)
    labels = sol.labels().copy()
    n = labels.size
    k = int(round(fraction * n))
    if k == 0 or sol.m < 2:
        return sol
    for s in rng.choice(n, size=k, replace=False):
        own = labels[s]
        target = int(rng.integers(1, sol.m + 1))
        if target == own:
            continue
        if np.count_nonzero(labels == own) == 1:
            z = rng.choice(np.flatnonzero(labels == target))
            labels[z] = own
        labels[s] = target
    return ClusteringSolution.from_labels(labels, sol.m)


def run_experiment_b(cfg: PipelineConfig, store: Optional[ArtifactStore] = None) -> Tuple[ExperimentReport, RunHistory]:
    """FAC2T from corrupted block solutions on one generated dataset; reports initial and final quality."""
    s = cfg.synthetic
    m = s.cluster_counts[0]
    seeds = _stage_seeds(cfg.seed, 0, m)
    synth = generate_synthetic(
        s.n_sensors, m, s.n_blocks * s.block_size, seed=seeds["data"], peak=s.peak, low=s.low, high=s.high,
    )
    blocks = partition_blocks(synth.dataset, s.block_size)
    ideal = ClusteringSolution.from_labels(synth.ground_truth.assignment, m)
    solutions = cluster_all_blocks(
        blocks, m, seed=seeds["blocks"], max_iter=cfg.kmeans_max_iter, tol=cfg.kmeans_tol,
        n_init=cfg.kmeans_n_init, workers=cfg.workers,
    )
    corrupt_rng = np.random.default_rng(seeds["corrupt"])
    corrupted = [corrupt_solution(sol, s.corruption_fraction, corrupt_rng) for sol in solutions]
    logger.info(f"🔀 Experiment B: corrupted {s.corruption_fraction:.0%} of sensors in {len(corrupted)} block solutions")

    initial: Dict[str, ClusteringSolution] = {}

    def capture(state: Fac2tState) -> None:
        if state.iteration == 0:
            initial["ant"] = state.colony.best()[0]

    best, history = run_fac2t(blocks, corrupted, cfg.fac2t, seed=seeds["fac2t"], callback=capture)
    whole = _whole_kmeans(synth.dataset, m, cfg, seeds["whole"])
    eps = cfg.fac2t.epsilon_g
    report = ExperimentReport()
    report.add(ReportRow(
        dataset_id=0,
        m=m,
        seed=cfg.seed,
        fac2t_objective=objective(best, blocks, eps),
        kmeans_objective=objective(whole, blocks, eps),
        ideal_objective=objective(ideal, blocks, eps),
        ari=adjusted_rand_index(best, ideal),
        initial_objective=objective(initial["ant"], blocks, eps),
        initial_ari=adjusted_rand_index(initial["ant"], ideal),
    ))

    if store is not None:
        names = synth.dataset.names
        store.save_json(files.GROUND_TRUTH_JSON, ground_truth_json(synth.ground_truth, names))
        store.save_json(files.CLUSTERING_JSON, best.to_json_dict(names))
        store.save_frame(files.HISTORY_CSV, history.to_frame())
        store.save_frame(files.REPORT_CSV, report.to_frame())
    return report, history
