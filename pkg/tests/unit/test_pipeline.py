"""
Unit tests for the pipeline loop, the fusion experiments and the report.
"""

import pytest
import os
import sys

import numpy as np
from pydantic import ValidationError

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from dataset import SensorDataset
from errors import ConfigError, PipelineError
from fac2t import Fac2tParams
from kmeans import ClusteringSolution
from pipeline import (
    ExperimentReport,
    PipelineConfig,
    ReportRow,
    SyntheticSettings,
    adjusted_rand_index,
    corrupt_solution,
    prepare_dataset,
    run_experiment_a,
    run_experiment_b,
    run_pipeline,
)
from regress import AdamParams, RegressorSettings, SvrParams


FAST_FAC2T = Fac2tParams(beta=2, gamma=5, n_ants=4, iterations=5, tau=3)


def quick_config(**overrides) -> PipelineConfig:
    base = dict(
        block_size=200,
        fac2t=FAST_FAC2T,
        regressors=["lbfr"],
        regressor=RegressorSettings(
            adam=AdamParams(batch_size=32, epochs=2),
            hidden_layers=1,
            hidden_width=4,
            svr=SvrParams(steps=100),
        ),
        synthetic=SyntheticSettings(n_datasets=2, n_sensors=12, n_blocks=3, block_size=100, cluster_counts=[3]),
        seed=5,
    )
    base.update(overrides)
    return PipelineConfig(**base)


def sol(*labels):
    return ClusteringSolution.from_labels(list(labels), max(labels))


class TestAdjustedRandIndex:
    """Tests for partition agreement."""

    def test_hand_value(self):
        """[1,1,2,2] vs [1,2,1,2] scores -0.5."""
        assert adjusted_rand_index(sol(1, 1, 2, 2), sol(1, 2, 1, 2)) == pytest.approx(-0.5)

    def test_label_names_do_not_matter(self):
        """Identical partitions under renamed labels score 1."""
        assert adjusted_rand_index(sol(1, 1, 2, 3), sol(3, 3, 1, 2)) == pytest.approx(1.0)

    def test_symmetric(self):
        """ARI(a, b) = ARI(b, a)."""
        a, b = sol(1, 2, 2, 3, 3, 1), sol(1, 1, 2, 2, 3, 3)
        assert adjusted_rand_index(a, b) == pytest.approx(adjusted_rand_index(b, a))

    def test_size_mismatch(self):
        """Partitions of different sensor sets cannot be compared."""
        with pytest.raises(PipelineError):
            adjusted_rand_index(sol(1, 2), sol(1, 2, 1))


class TestCorruptSolution:
    """Tests for the experiment B perturbation."""

    def test_zero_fraction_is_identity(self):
        """Nothing moves at fraction 0."""
        s = sol(1, 2, 3, 1, 2, 3)
        assert corrupt_solution(s, 0.0, seed=1) == s

    def test_every_cluster_survives(self):
        """Even moving every sensor keeps all M labels in use."""
        s = sol(1, 2, 2, 2, 3, 3)
        for seed in range(20):
            out = corrupt_solution(s, 1.0, seed=seed)
            assert out.m == 3 and out.sizes().min() >= 1

    def test_seeded(self):
        """Same seed, same corruption."""
        s = sol(1, 1, 2, 2, 3, 3, 1, 2, 3)
        assert corrupt_solution(s, 0.5, seed=4) == corrupt_solution(s, 0.5, seed=4)

    def test_fraction_range(self):
        """Fractions outside [0, 1] are refused."""
        with pytest.raises(PipelineError):
            corrupt_solution(sol(1, 2), 1.5)


class TestReport:
    """Tests for the experiment report."""

    def test_duplicate_rows_rejected(self):
        """(dataset_id, m, seed) identifies a row."""
        report = ExperimentReport()
        report.add(ReportRow(m=3, seed=0))
        with pytest.raises(PipelineError):
            report.add(ReportRow(m=3, seed=0))

    def test_non_finite_metric_rejected(self):
        """NaN metrics never reach the report."""
        with pytest.raises(ValidationError):
            ReportRow(m=3, seed=0, ari=float("nan"))

    def test_frame_columns(self):
        """Per-kind MSE columns follow the fixed report columns."""
        report = ExperimentReport()
        report.add(ReportRow(m=3, seed=0, mse={"mlp": 0.2, "lbfr": 0.1}, virtual_fraction=0.5))
        frame = report.to_frame()
        assert list(frame.columns[-4:]) == ["mse_lbfr", "mse_mlp", "mean_mse", "virtual_fraction"]
        assert frame.loc[0, "mean_mse"] == pytest.approx(0.15)

    def test_mse_table(self):
        """One row per regressor, one column per cluster count."""
        report = ExperimentReport()
        report.add(ReportRow(m=3, seed=0, mse={"lbfr": 0.3, "svr": 0.5}))
        report.add(ReportRow(m=5, seed=0, mse={"lbfr": 0.1, "svr": 0.2}))
        table = report.mse_table()
        assert list(table.index) == ["lbfr", "svr"]
        assert list(table.columns) == [3, 5]
        assert table.loc["svr", 5] == pytest.approx(0.2)


class TestConfig:
    """Tests for PipelineConfig loading."""

    def test_defaults(self):
        """Defaults run every regressor against a 0.01 threshold."""
        cfg = PipelineConfig()
        assert cfg.regressors == ["lbfr", "mlp", "svr"]
        assert cfg.mse_threshold == 0.01
        assert cfg.synthetic.corruption_fraction == 0.3

    def test_from_json_file(self, tmp_path):
        """Nested sections load from JSON."""
        path = tmp_path / "cfg.json"
        path.write_text('{"seed": 9, "fac2t": {"n_ants": 7}, "regressors": ["svr"]}', encoding="utf-8")
        cfg = PipelineConfig.from_json_file(path)
        assert cfg.seed == 9 and cfg.fac2t.n_ants == 7 and cfg.regressors == ["svr"]

    def test_invalid_values(self, tmp_path):
        """Out-of-range values are a ConfigError."""
        path = tmp_path / "cfg.json"
        path.write_text('{"train_fraction": 1.5}', encoding="utf-8")
        with pytest.raises(ConfigError):
            PipelineConfig.from_json_file(path)

    def test_unknown_regressor(self, tmp_path):
        """Only known regressor kinds are accepted."""
        path = tmp_path / "cfg.json"
        path.write_text('{"regressors": ["forest"]}', encoding="utf-8")
        with pytest.raises(ConfigError):
            PipelineConfig.from_json_file(path)

    def test_missing_file(self, tmp_path):
        """A missing file is a ConfigError."""
        with pytest.raises(ConfigError):
            PipelineConfig.from_json_file(tmp_path / "absent.json")

    def test_cluster_counts_within_sensors(self):
        """Synthetic cluster counts cannot exceed the sensor count."""
        with pytest.raises(ValidationError):
            SyntheticSettings(n_sensors=4, cluster_counts=[5])


class TestPrepareDataset:
    """Tests for load/clean/normalize/split."""

    def test_needs_input(self):
        """Without a dataset or path there is nothing to run."""
        with pytest.raises(ConfigError):
            prepare_dataset(PipelineConfig())

    def test_constant_sensor_rejected(self):
        """A constant column is refused before clustering."""
        values = np.column_stack([np.arange(10.0), np.ones(10), np.arange(10.0) ** 2])
        with pytest.raises(PipelineError):
            prepare_dataset(PipelineConfig(), SensorDataset(("a", "b", "c"), values))

    def test_split_sizes_and_scale(self, latent_synthetic):
        """Rows split 80/20 and the training rows stay inside [0, 1]."""
        train, test, norm = prepare_dataset(PipelineConfig(), latent_synthetic.dataset)
        assert train.n_samples == 960 and test.n_samples == 240
        assert train.values.min() >= 0.0 and train.values.max() <= 1.0
        assert set(norm.bounds) == set(latent_synthetic.dataset.names)

    def test_bounds_come_from_training_rows(self):
        """An outlier row held out for testing leaves the train columns spanning exactly [0, 1]."""
        rng = np.random.default_rng(0)
        values = rng.random((50, 3))
        held_out = np.random.default_rng(0).permutation(50)[45]
        values[held_out] = [100.0, -100.0, 50.0]
        cfg = PipelineConfig(seed=0)
        train, test, norm = prepare_dataset(cfg, SensorDataset(("a", "b", "c"), values))
        np.testing.assert_allclose(train.values.min(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(train.values.max(axis=0), 1.0, atol=1e-12)
        assert train.n_samples == 40
        assert norm.bounds["a"].max < 1.0 and norm.bounds["b"].min > 0.0
        assert test.values.max() > 1.0 and test.values.min() < 0.0


class TestRunPipeline:
    """Tests for the end-to-end loop on small data."""

    def test_sweep_mode(self, latent_synthetic):
        """Every listed M yields one row with finite MSE."""
        cfg = quick_config(cluster_counts=[3, 4])
        report = run_pipeline(cfg, dataset=latent_synthetic.dataset)
        assert [r.m for r in report.rows] == [3, 4]
        assert all(np.isfinite(r.mse["lbfr"]) for r in report.rows)

    def test_loose_threshold_stops_at_first_m(self, latent_synthetic):
        """A threshold every M meets accepts the first M evaluated."""
        report = run_pipeline(quick_config(mse_threshold=10.0), dataset=latent_synthetic.dataset)
        assert len(report.rows) == 1

    def test_tight_threshold_runs_to_max_clusters(self, latent_synthetic):
        """An unreachable threshold climbs one M at a time to max_clusters."""
        report = run_pipeline(
            quick_config(mse_threshold=1e-300, max_clusters=6), dataset=latent_synthetic.dataset,
        )
        ms = [r.m for r in report.rows]
        assert ms[-1] == 6
        assert ms == list(range(ms[0], 7))

    def test_every_sensor_representative(self, latent_synthetic):
        """With M = N there are no virtual sensors and nothing to predict."""
        cfg = quick_config(cluster_counts=[16], block_size=300)
        row = run_pipeline(cfg, dataset=latent_synthetic.dataset).rows[0]
        assert row.virtual_fraction == 0.0
        assert row.mse == {"lbfr": 0.0}

    def test_max_clusters_above_sensor_count(self, latent_synthetic):
        """max_clusters larger than N is a ConfigError."""
        with pytest.raises(ConfigError):
            run_pipeline(quick_config(max_clusters=17), dataset=latent_synthetic.dataset)

    def test_cluster_counts_out_of_range(self, latent_synthetic):
        """Sweep values outside [1, N] are refused."""
        with pytest.raises(ConfigError):
            run_pipeline(quick_config(cluster_counts=[0]), dataset=latent_synthetic.dataset)


class TestExperiments:
    """Tests for experiments A and B at toy scale."""

    def test_experiment_a_rows(self):
        """One row per (dataset, M) with objectives and ARI filled in."""
        report = run_experiment_a(quick_config())
        assert [(r.dataset_id, r.m) for r in report.rows] == [(0, 3), (1, 3)]
        for r in report.rows:
            assert r.fac2t_objective > 0 and r.kmeans_objective > 0 and r.ideal_objective > 0
            assert -1.0 <= r.ari <= 1.0

    def test_experiment_a_threads_match_serial(self):
        """Worker threads do not change the rows."""
        serial = run_experiment_a(quick_config())
        threaded = run_experiment_a(quick_config(workers=2))
        assert serial.to_frame().equals(threaded.to_frame())

    def test_experiment_b_reports_initial_quality(self):
        """The best ant never scores below the initial best ant."""
        report, history = run_experiment_b(quick_config())
        row = report.rows[0]
        assert row.initial_objective is not None and row.initial_ari is not None
        assert row.fac2t_objective >= row.initial_objective
        assert history.best_metrics()[0] == pytest.approx(row.initial_objective)

    def test_uncorrupted_b_matches_a(self):
        """With zero corruption experiment B repeats experiment A's first row."""
        synthetic = SyntheticSettings(n_datasets=1, n_sensors=12, n_blocks=3, block_size=100,
                                      cluster_counts=[3], corruption_fraction=0.0)
        cfg = quick_config(synthetic=synthetic)
        a = run_experiment_a(cfg).rows[0]
        b, _ = run_experiment_b(cfg)
        assert b.rows[0].fac2t_objective == pytest.approx(a.fac2t_objective)
        assert b.rows[0].ari == pytest.approx(a.ari)
