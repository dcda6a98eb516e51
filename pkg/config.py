"""
Settings & Logging
==================
Settings come from VIRTSENSE_* environment variables, optionally seeded
from a .env file in the working directory.
"""

import logging
import sys
from functools import lru_cache
from typing import Optional

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict
from pythonjsonlogger import jsonlogger

# Load environment variables
load_dotenv()

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# ============================================================================
# SETTINGS
# ============================================================================

class Settings(BaseSettings):
    """Process-wide knobs, read once from the environment."""

    model_config = SettingsConfigDict(env_prefix="VIRTSENSE_", env_file=".env", extra="ignore")

    log_level: str = Field(default="INFO", description="Root log level")
    log_json: bool = Field(default=False, description="Emit JSON log lines")
    default_seed: int = Field(default=0, description="Seed used when --seed is not given")
    output_dir: str = Field(default="runs", description="Run directory when --out is not given")
    workers: int = Field(default=1, ge=1, description="Thread pool width for block/ant work")


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()

# ============================================================================
# LOGGING SETUP
# ============================================================================

def configure_logging(settings: Optional[Settings] = None, level: Optional[str] = None) -> None:
    """Install a single stderr handler on the root logger."""
    settings = settings or get_settings()
    handler = logging.StreamHandler(sys.stderr)
    if settings.log_json:
        handler.setFormatter(jsonlogger.JsonFormatter(LOG_FORMAT))
    else:
        handler.setFormatter(logging.Formatter(LOG_FORMAT))

    root = logging.getLogger()
    for existing in list(root.handlers):
        root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel((level or settings.log_level).upper())
