"""Toolkit configuration from environment."""
import os
from pathlib import Path

# Project root (holds semocc/, synthetic/, artifacts/)
ROOT_DIR = Path(__file__).resolve().parent.parent

# Load .env from project root
try:
    from dotenv import load_dotenv
    load_dotenv(str(ROOT_DIR / ".env"))
except ImportError:
    pass


def _env_int(name: str, default: int, minimum: int = 0) -> int:
    raw = os.environ.get(name, "")
    if not raw.strip():
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


# Worker count for label transfer, aggregation and voxelization (--workers overrides)
DEFAULT_WORKERS = _env_int("SEMOCC_WORKERS", 1, minimum=1)

# Master seed for stochastic subcommands (--seed overrides)
DEFAULT_SEED = _env_int("SEMOCC_SEED", 0)

# Smallest chunk handed to one worker; below this a single chunk is used
CHUNK_SIZE = _env_int("SEMOCC_CHUNK_SIZE", 65536, minimum=1)

LOG_LEVEL = os.environ.get("SEMOCC_LOG_LEVEL", "WARNING").upper()

DEMO_DIR = ROOT_DIR / "data" / "demo"
