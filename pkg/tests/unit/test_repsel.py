"""
Unit tests for representative sensor selection.
"""

import pytest
import json
import os
import sys

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

import repsel
from dataset import SensorDataset
from errors import ConstantSensorError, SelectionError
from kmeans import ClusteringSolution
from repsel import (
    pearson,
    quality,
    representatives_from_dict,
    representatives_to_json,
    select_representative_details,
    select_representatives,
)


def _dataset(columns):
    values = np.column_stack(columns)
    return SensorDataset(tuple(f"s{j}" for j in range(values.shape[1])), values)


class TestPearson:
    """Tests for the correlation coefficient."""

    def test_self_correlation(self):
        """r(a, a) = 1."""
        a = np.array([0.3, 1.2, -0.7, 2.0])
        assert pearson(a, a) == pytest.approx(1.0)

    def test_anti_correlation(self):
        """r(a, -a) = -1."""
        a = np.array([0.3, 1.2, -0.7, 2.0])
        assert pearson(a, -a) == pytest.approx(-1.0)

    def test_hand_value(self):
        """r([1,2,3], [1,2,4]) is about 0.9820."""
        assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(0.98198, abs=1e-4)

    def test_constant_vector(self):
        """A constant input has no correlation."""
        with pytest.raises(ConstantSensorError):
            pearson([1, 1, 1], [1, 2, 3])


class TestQuality:
    """Tests for the quality score."""

    def test_hand_example(self, monkeypatch):
        """Correlations (1, 0.8, 0.6) give Q = (1 - 0.02667) / 0.2."""
        lookup = {1.0: 0.8, 2.0: 0.6}
        monkeypatch.setattr(repsel, "pearson", lambda a, b: lookup[float(b[0])])
        d = _dataset([np.zeros(3), np.ones(3), np.full(3, 2.0)])
        score = quality(0, [0, 1, 2], d)
        assert score.q == pytest.approx(4.8667, abs=1e-4)

    def test_identical_sensors_hit_guard(self):
        """Mean correlation 1 uses the epsilon guard: Q = 1e9."""
        x = np.array([1.0, 4.0, 2.0, 8.0])
        d = _dataset([x, x, x])
        assert quality(1, [0, 1, 2], d).q == pytest.approx(1e9)

    def test_singleton_cluster(self):
        """A lone sensor scores through the guard."""
        d = _dataset([np.array([1.0, 2.0, 0.0])])
        assert quality(0, [0], d).q == pytest.approx(1e9)

    def test_sensor_outside_cluster(self, small_dataset):
        """Scoring a sensor against a cluster it is not in is an error."""
        with pytest.raises(repsel.SelectionError):
            quality(0, [1, 2], small_dataset)


class TestSelectRepresentatives:
    """Tests for per-cluster selection."""

    def test_central_sensor_selected(self):
        """The sensor every other member is a noisy copy of wins."""
        rng = np.random.default_rng(0)
        x = rng.normal(size=500)
        cols = [x + 0.5 * rng.normal(size=500), x + 0.5 * rng.normal(size=500), x, x + 0.5 * rng.normal(size=500)]
        d = _dataset(cols)
        sol = ClusteringSolution.from_labels([1, 1, 1, 1], 1)
        assert select_representatives(sol, d) == [2]

    def test_singletons_represent_themselves(self):
        """With M singleton clusters every sensor is kept."""
        rng = np.random.default_rng(1)
        d = _dataset([rng.normal(size=20) for _ in range(4)])
        sol = ClusteringSolution.from_labels([3, 1, 4, 2], 4)
        assert select_representatives(sol, d) == [1, 3, 0, 2]

    def test_matches_exhaustive_quality(self):
        """Per cluster, the pick has the maximum quality of all members."""
        rng = np.random.default_rng(2)
        base = rng.normal(size=(100, 2))
        cols = [base[:, 0] + s * rng.normal(size=100) for s in (0.2, 0.5, 0.9)]
        cols += [base[:, 1] + s * rng.normal(size=100) for s in (0.9, 0.1, 0.4)]
        d = _dataset(cols)
        sol = ClusteringSolution.from_labels([1, 1, 1, 2, 2, 2], 2)
        picks = select_representatives(sol, d)
        for members, pick in zip(sol.clusters(), picks):
            scores = {int(i): quality(int(i), members.tolist(), d).q for i in members}
            assert scores[pick] == pytest.approx(max(scores.values()))

    def test_ties_pick_lowest_index(self):
        """Identical members tie and the lowest index wins."""
        x = np.array([1.0, 3.0, 2.0, 5.0])
        d = _dataset([x, x, x])
        sol = ClusteringSolution.from_labels([1, 1, 1], 1)
        assert select_representatives(sol, d) == [0]

    def test_affine_rescaling_invariance(self):
        """Scaling and shifting every column leaves the picks unchanged."""
        rng = np.random.default_rng(3)
        x = rng.normal(size=(80, 6)) + rng.normal(size=(80, 1))
        sol = ClusteringSolution.from_labels([1, 2, 1, 2, 1, 2], 2)
        a = select_representatives(sol, _dataset(list(x.T)))
        b = select_representatives(sol, _dataset(list((3.0 * x + 7.0).T)))
        assert a == b

    def test_reordering_sensors(self):
        """Shuffling sensor order picks the same physical sensor."""
        rng = np.random.default_rng(4)
        x = rng.normal(size=(60, 5)) + rng.normal(size=(60, 1))
        names = ("a", "b", "c", "d", "e")
        d = SensorDataset(names, x)
        sol = ClusteringSolution.from_labels([1, 1, 1, 1, 1], 1)
        order = [3, 0, 4, 1, 2]
        shuffled = d.select(order)
        pick = select_representative_details(sol, d)[0].name
        assert select_representative_details(sol, shuffled)[0].name == pick

    def test_constant_sensor_rejected(self):
        """A constant member makes correlations undefined."""
        d = _dataset([np.ones(5), np.arange(5.0)])
        sol = ClusteringSolution.from_labels([1, 1], 1)
        with pytest.raises(ConstantSensorError):
            select_representatives(sol, d)

    def test_json_round_trip(self):
        """Representatives serialize by name and load back."""
        rng = np.random.default_rng(5)
        d = _dataset([rng.normal(size=30) for _ in range(4)])
        sol = ClusteringSolution.from_labels([1, 2, 1, 2], 2)
        reps = select_representative_details(sol, d)
        payload = json.loads(representatives_to_json(reps))
        assert set(payload) == {"1", "2"}
        assert representatives_from_dict(payload, d) == reps

    @pytest.mark.parametrize("payload", [{"1": {"quality": 2.0}}, {"x": {"sensor": "s0"}}, {"1": "s0"}])
    def test_malformed_representatives(self, payload):
        """Entries without a sensor name or with a bad label are a SelectionError."""
        d = _dataset([np.arange(5.0), np.arange(5.0) ** 2])
        with pytest.raises(SelectionError):
            representatives_from_dict(payload, d)
