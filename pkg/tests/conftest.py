"""
Pytest configuration and shared fixtures for all tests.
"""

import pytest
import os
import sys

import numpy as np

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dataset import SensorDataset, partition_blocks
from synthgen import generate_latent_clusters, generate_synthetic


@pytest.fixture
def small_dataset():
    """Five readings of three sensors, no missing values."""
    values = np.array([
        [1.0, 10.0, 5.0],
        [2.0, 20.0, 4.0],
        [3.0, 30.0, 6.0],
        [4.0, 40.0, 3.0],
        [5.0, 50.0, 7.0],
    ])
    return SensorDataset(("a", "b", "c"), values)


@pytest.fixture
def sensor_csv(tmp_path):
    """CSV with a header, one empty cell and one literal NaN."""
    path = tmp_path / "sensors.csv"
    path.write_text(
        "a,b,c\n"
        "1,2,3\n"
        "4,,6\n"
        "7,8,NaN\n"
        "10,11,12\n"
        "13,14,15\n",
        encoding="utf-8",
    )
    return path


@pytest.fixture
def separated_synthetic():
    """Well-separated planted clusters: 24 sensors, 4 clusters, 4 blocks of 200."""
    return generate_synthetic(24, 4, 800, seed=11)


@pytest.fixture
def separated_blocks(separated_synthetic):
    """Block partition of the well-separated synthetic dataset."""
    return partition_blocks(separated_synthetic.dataset, 200)


@pytest.fixture
def latent_synthetic():
    """Sensors that are noisy affine copies of 4 latent signals."""
    return generate_latent_clusters(16, 4, 1200, noise=0.05, seed=3)


@pytest.fixture
def latent_csv(tmp_path, latent_synthetic):
    """The latent-cluster dataset written to disk with a header."""
    path = tmp_path / "latent.csv"
    latent_synthetic.dataset.to_frame().to_csv(path, index=False, float_format="%.17g")
    return path
