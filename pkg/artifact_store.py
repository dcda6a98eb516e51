"""
Artifact Store for Virtual Sensor Runs
======================================
One run directory per invocation:
1. clustering.json / representatives.json / model.json - fitted structure
2. predictions.csv / metrics.csv / history.csv / report.csv - numbers
3. norm_params.json / blocks.json / dataset.csv / ground_truth.json - inputs

Floats go to CSV with 17 significant digits so values read back are the
values that were written.
"""

import json
import logging
import threading
from pathlib import Path
from typing import Any, Dict, Union

import pandas as pd

from dataset import SensorDataset, load_csv
from errors import ArtifactError

logger = logging.getLogger("ArtifactStore")

# ============================================================================
# ARTIFACT NAMES
# ============================================================================

CLUSTERING_JSON = "clustering.json"
REPRESENTATIVES_JSON = "representatives.json"
MODEL_JSON = "model.json"
PREDICTIONS_CSV = "predictions.csv"
METRICS_CSV = "metrics.csv"
HISTORY_CSV = "history.csv"
REPORT_CSV = "report.csv"
NORM_PARAMS_JSON = "norm_params.json"
BLOCKS_JSON = "blocks.json"
DATASET_CSV = "dataset.csv"
GROUND_TRUTH_JSON = "ground_truth.json"

FLOAT_FORMAT = "%.17g"

# ============================================================================
# ARTIFACT STORE CLASS
# ============================================================================

class ArtifactStore:
    """Writes and reads the files of one run directory."""

    def __init__(self, run_dir: Union[str, Path]):
        self.lock = threading.Lock()
        self.run_dir = Path(run_dir)
        try:
            self.run_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ArtifactError(f"cannot create run directory {self.run_dir}: {e}") from None
        logger.info(f"✅ Run directory ready: {self.run_dir}")

    def path(self, name: str) -> Path:
        return self.run_dir / name

    # ------------------------------------------------------------------------
    # JSON
    # ------------------------------------------------------------------------

    def save_json(self, name: str, payload: Union[str, Dict[str, Any], list]) -> Path:
        """Write a JSON artifact; strings are taken as already-encoded JSON."""
        text = payload if isinstance(payload, str) else json.dumps(payload, indent=2)
        target = self.path(name)
        with self.lock:
            try:
                target.write_text(text, encoding="utf-8")
            except OSError as e:
                raise ArtifactError(f"cannot write {target}: {e}") from None
        logger.info(f"💾 Saved {name}")
        return target

    @staticmethod
    def load_json(path: Union[str, Path]) -> Any:
        path = Path(path)
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except OSError as e:
            raise ArtifactError(f"cannot read {path}: {e}") from None
        except json.JSONDecodeError as e:
            raise ArtifactError(f"{path} is not valid JSON: {e}") from None

    # ------------------------------------------------------------------------
    # CSV
    # ------------------------------------------------------------------------

    def save_frame(self, name: str, frame: pd.DataFrame) -> Path:
        target = self.path(name)
        with self.lock:
            try:
                frame.to_csv(target, index=False, float_format=FLOAT_FORMAT, encoding="utf-8")
            except OSError as e:
                raise ArtifactError(f"cannot write {target}: {e}") from None
        logger.info(f"💾 Saved {name} ({len(frame)} rows)")
        return target

    @staticmethod
    def load_frame(path: Union[str, Path]) -> pd.DataFrame:
        path = Path(path)
        try:
            return pd.read_csv(path)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise ArtifactError(f"cannot read {path}: {e}") from None

    def save_dataset(self, name: str, d: SensorDataset) -> Path:
        return self.save_frame(name, d.to_frame())

    def load_dataset(self, name: str) -> SensorDataset:
        return load_csv(self.path(name), header=True)
