"""
Sensor Dataset Handling
=======================
Ingest, clean, normalize, block-partition and split column-per-sensor
time-series readings.

Every operation is pure: a SensorDataset is never modified in place, its
value matrix is flagged read-only on construction.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator

from errors import DatasetError

logger = logging.getLogger("Dataset")

MISSING_TOKENS = {"", "nan"}

# ============================================================================
# DATA MODELS
# ============================================================================

@dataclass(frozen=True)
class SensorDataset:
    """Time-aligned readings, rows = samples, columns = sensors."""

    names: Tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2:
            raise DatasetError(f"values must be 2-D (samples x sensors), got shape {values.shape}")
        if values.shape[1] != len(self.names):
            raise DatasetError(
                f"{len(self.names)} sensor names for {values.shape[1]} columns"
            )
        values.setflags(write=False)
        object.__setattr__(self, "names", tuple(str(n) for n in self.names))
        object.__setattr__(self, "values", values)

    @property
    def n_sensors(self) -> int:
        return self.values.shape[1]

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DatasetError(f"unknown sensor: {name}") from None

    def select(self, columns: Sequence[Union[int, str]]) -> "SensorDataset":
        """Sub-dataset restricted to the given sensors, in the given order."""
        idx = [c if isinstance(c, (int, np.integer)) else self.index_of(c) for c in columns]
        return SensorDataset(tuple(self.names[i] for i in idx), self.values[:, idx])

    def take_rows(self, rows: Union[slice, np.ndarray, Sequence[int]]) -> "SensorDataset":
        return SensorDataset(self.names, self.values[rows])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, columns=list(self.names))


class SensorBounds(BaseModel):
    """Training-split extent of one sensor."""

    min: float
    max: float

    @model_validator(mode="after")
    def _ordered(self):
        if self.max < self.min:
            raise ValueError(f"max {self.max} < min {self.min}")
        return self


class NormParams(BaseModel):
    """Per-sensor min-max parameters, keyed by sensor name."""

    bounds: Dict[str, SensorBounds] = Field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({name: b.model_dump() for name, b in self.bounds.items()}, indent=2)

    def to_dict(self) -> Dict[str, Dict[str, float]]:
        return {name: b.model_dump() for name, b in self.bounds.items()}

    @classmethod
    def from_dict(cls, payload: Dict[str, Dict[str, float]]) -> "NormParams":
        return cls(bounds={name: SensorBounds(**b) for name, b in payload.items()})

    @classmethod
    def from_json(cls, text: str) -> "NormParams":
        return cls.from_dict(json.loads(text))

    def arrays(self, names: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
        missing = [n for n in names if n not in self.bounds]
        if missing:
            raise DatasetError(f"no normalization parameters for sensors: {missing}")
        lo = np.array([self.bounds[n].min for n in names])
        hi = np.array([self.bounds[n].max for n in names])
        return lo, hi


@dataclass(frozen=True)
class BlockPartition:
    """Contiguous, disjoint row ranges covering a prefix of a dataset."""

    dataset: SensorDataset
    block_size: int
    ranges: Tuple[Tuple[int, int], ...]

    @property
    def n_blocks(self) -> int:
        return len(self.ranges)

    def block(self, i: int) -> np.ndarray:
        """Readings of block i, rows = samples."""
        start, stop = self.ranges[i]
        return self.dataset.values[start:stop]

    def sensor_vectors(self, i: int) -> np.ndarray:
        """Block i with sensors as points (n_sensors x block_size)."""
        return self.block(i).T

    def stacked(self) -> np.ndarray:
        """All blocks as one (n_blocks, n_sensors, block_size) array."""
        covered = self.n_blocks * self.block_size
        data = self.dataset.values[:covered]
        return data.reshape(self.n_blocks, self.block_size, self.dataset.n_sensors).transpose(0, 2, 1)

# ============================================================================
# INGESTION
# ============================================================================

def load_csv(path: Union[str, Path], header: bool = True) -> SensorDataset:
    """
    Read a UTF-8 comma-separated file into a SensorDataset.

    Empty cells and the literal "NaN" (any case) become missing markers.
    Without a header row, column j is named "s<j>".
    """
    path = Path(path)
    try:
        raw = pd.read_csv(
            path,
            header=None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
            encoding="utf-8",
        )
    except FileNotFoundError:
        raise DatasetError(f"cannot read {path}: file not found") from None
    except pd.errors.EmptyDataError:
        raise DatasetError(f"{path} has zero columns") from None
    except pd.errors.ParserError as e:
        raise DatasetError(f"ragged rows in {path}: {e}") from None
    except (OSError, UnicodeDecodeError) as e:
        raise DatasetError(f"cannot read {path}: {e}") from None

    if raw.shape[1] == 0:
        raise DatasetError(f"{path} has zero columns")
    # Short rows are padded by the parser; padded cells are the only true NaNs here.
    if raw.isna().to_numpy().any():
        bad = int(np.flatnonzero(raw.isna().to_numpy().any(axis=1))[0]) + 1
        raise DatasetError(f"ragged rows in {path}: line {bad} has too few fields")

    if header:
        names = [str(n).strip() for n in raw.iloc[0].tolist()]
        body = raw.iloc[1:]
    else:
        names = [f"s{j}" for j in range(raw.shape[1])]
        body = raw

    cells = body.apply(lambda col: col.str.strip())
    missing = cells.apply(lambda col: col.str.lower().isin(MISSING_TOKENS))
    try:
        values = cells.mask(missing).apply(pd.to_numeric).to_numpy(dtype=float)
    except (ValueError, TypeError) as e:
        raise DatasetError(f"non-numeric reading in {path}: {e}") from None

    dataset = SensorDataset(tuple(names), values.reshape(len(body), len(names)))
    logger.info(
        f"📥 Loaded {path.name}: {dataset.n_samples} samples x {dataset.n_sensors} sensors, "
        f"{int(missing.to_numpy().sum())} missing cells"
    )
    return dataset

# ============================================================================
# CLEANING & NORMALIZATION
# ============================================================================

def clean_missing(d: SensorDataset) -> SensorDataset:
    """Drop every row holding a missing or non-finite reading."""
    keep = np.isfinite(d.values).all(axis=1)
    if not keep.any():
        raise DatasetError("every row contains a missing value; nothing left after cleaning")
    dropped = int((~keep).sum())
    if dropped:
        logger.info(f"🧹 Dropped {dropped} of {d.n_samples} rows with missing values")
        return d.take_rows(keep)
    return d


def fit_norm(d: SensorDataset) -> NormParams:
    lo = d.values.min(axis=0)
    hi = d.values.max(axis=0)
    return NormParams(
        bounds={name: SensorBounds(min=float(a), max=float(b)) for name, a, b in zip(d.names, lo, hi)}
    )


def apply_norm(d: SensorDataset, params: NormParams) -> SensorDataset:
    """Map each column by (x - min)/(max - min); constant columns map to 0.5."""
    lo, hi = params.arrays(d.names)
    span = hi - lo
    constant = span == 0
    scaled = np.empty_like(d.values)
    scaled[:, ~constant] = (d.values[:, ~constant] - lo[~constant]) / span[~constant]
    scaled[:, constant] = 0.5
    return SensorDataset(d.names, scaled)


def inverse_norm(d: SensorDataset, params: NormParams) -> SensorDataset:
    lo, hi = params.arrays(d.names)
    return SensorDataset(d.names, d.values * (hi - lo) + lo)


def normalize(d: SensorDataset) -> Tuple[SensorDataset, NormParams]:
    """Fit min-max parameters on d and apply them."""
    params = fit_norm(d)
    constant = [n for n, b in params.bounds.items() if b.max == b.min]
    if constant:
        logger.warning(f"⚠️  Constant sensors mapped to 0.5: {constant}")
    return apply_norm(d, params), params

# ============================================================================
# PARTITIONING & SPLITTING
# ============================================================================

def partition_blocks(d: SensorDataset, block_size: int) -> BlockPartition:
    """Cut the dataset into floor(n_samples / block_size) contiguous blocks."""
    if block_size < 2 or block_size > d.n_samples:
        raise DatasetError(
            f"block_size must be in [2, {d.n_samples}], got {block_size}"
        )
    n_blocks = d.n_samples // block_size
    remainder = d.n_samples - n_blocks * block_size
    if remainder:
        logger.debug(f"Dropping {remainder} trailing rows shorter than one block")
    ranges = tuple((b * block_size, (b + 1) * block_size) for b in range(n_blocks))
    return BlockPartition(dataset=d, block_size=block_size, ranges=ranges)


def split_train_test(
    d: SensorDataset,
    train_fraction: float,
    seed: int,
) -> Tuple[SensorDataset, SensorDataset]:
    """Row-shuffled split; round(train_fraction * n) rows go to training."""
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n_train = int(round(train_fraction * d.n_samples))
    if n_train == 0 or n_train == d.n_samples:
        raise DatasetError(
            f"split of {d.n_samples} rows at {train_fraction} leaves an empty side"
        )
    order = np.random.default_rng(seed).permutation(d.n_samples)
    return d.take_rows(order[:n_train]), d.take_rows(order[n_train:])


def save_csv(d: SensorDataset, path: Union[str, Path]) -> None:
    d.to_frame().to_csv(path, index=False, float_format="%.17g")
