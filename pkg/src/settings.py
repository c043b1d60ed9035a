"""Static configuration for backseat.

Application settings (logging, output directory, sweep parallelism) live in
a single JSON file; scenario parameters live in their own scenario files.
"""

import json
import os

from dotenv import load_dotenv

PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))

CONFIG_PATH = os.path.join(PROJECT_ROOT, "config.json")

load_dotenv(os.path.join(PROJECT_ROOT, ".env"))


def _load_json_config() -> dict:
    """Load config.json with a flat, user-friendly schema."""

    if not os.path.exists(CONFIG_PATH):
        raise FileNotFoundError(f"Config file not found: {CONFIG_PATH}")

    with open(CONFIG_PATH, "r", encoding="utf-8") as handle:
        return json.load(handle)


def _resolve(path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(PROJECT_ROOT, path)


_CONFIG = _load_json_config()

# Expose the raw config for modules that need structured access.
CONFIG = _CONFIG

# Results go here unless --out is given; BACKSEAT_OUT_DIR beats config.json.
_output = _CONFIG.get("output", {})
OUTPUT_DIR = _resolve(os.getenv("BACKSEAT_OUT_DIR") or _output.get("default_dir", "results"))

# Grid points of a sweep run in this many worker processes.
_sweep = _CONFIG.get("sweep", {})
SWEEP_WORKERS = max(1, int(_sweep.get("workers", 1)))

# Relative CDF paths in scenario files are looked up here, in order.
DATA_DIR = os.path.join(PROJECT_ROOT, "data")
CDF_SEARCH_DIRS = [PROJECT_ROOT, DATA_DIR]

# Logging configuration (optional).
LOGGING = _CONFIG.get("logging", {})
