"""
Integration tests for run-directory artifacts on disk.
"""

import pytest
import os
import sys

import numpy as np
import pandas as pd

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

import artifact_store as files
from artifact_store import ArtifactStore
from dataset import SensorDataset
from errors import ArtifactError


@pytest.fixture
def store(tmp_path):
    return ArtifactStore(tmp_path / "run")


class TestArtifactStore:
    """Tests for JSON and CSV artifacts."""

    def test_creates_run_directory(self, tmp_path):
        """Nested run directories are created on construction."""
        ArtifactStore(tmp_path / "a" / "b")
        assert (tmp_path / "a" / "b").is_dir()

    def test_run_directory_over_a_file(self, tmp_path):
        """A file in the way is an ArtifactError."""
        blocker = tmp_path / "blocker"
        blocker.write_text("x", encoding="utf-8")
        with pytest.raises(ArtifactError):
            ArtifactStore(blocker / "run")

    def test_json_dict_and_text(self, store):
        """Dicts are encoded, strings are written as given."""
        store.save_json("a.json", {"1": ["s0", "s2"]})
        store.save_json("b.json", '{"x": 1}')
        assert ArtifactStore.load_json(store.path("a.json")) == {"1": ["s0", "s2"]}
        assert ArtifactStore.load_json(store.path("b.json")) == {"x": 1}

    def test_invalid_json(self, store):
        """Corrupt JSON is reported, not raised raw."""
        store.path("bad.json").write_text("{oops", encoding="utf-8")
        with pytest.raises(ArtifactError):
            ArtifactStore.load_json(store.path("bad.json"))

    def test_missing_json(self, store):
        """A missing file is an ArtifactError."""
        with pytest.raises(ArtifactError):
            ArtifactStore.load_json(store.path("absent.json"))

    def test_frame_floats_survive(self, store):
        """Floats written with 17 significant digits read back to full precision."""
        rng = np.random.default_rng(0)
        frame = pd.DataFrame({"m": [3, 4, 5], "test_mse": rng.random(3) / 7.0})
        store.save_frame(files.METRICS_CSV, frame)
        again = ArtifactStore.load_frame(store.path(files.METRICS_CSV))
        np.testing.assert_allclose(again["test_mse"], frame["test_mse"], rtol=1e-14)
        assert again["m"].tolist() == [3, 4, 5]

    def test_dataset_round_trip(self, store):
        """Saved datasets load back with the same names and values."""
        rng = np.random.default_rng(1)
        d = SensorDataset(("t1", "t2", "rh"), rng.random((20, 3)))
        store.save_dataset(files.DATASET_CSV, d)
        again = store.load_dataset(files.DATASET_CSV)
        assert again.names == d.names
        np.testing.assert_allclose(again.values, d.values, rtol=1e-14)
