"""
Runtime knobs from environment variables.

Loads .env from project root so knobs work even if nothing else imported dotenv yet.
"""

from pathlib import Path
import logging
import os
from typing import Optional

try:
    from dotenv import load_dotenv

    _PROJECT_ROOT = Path(__file__).resolve().parent.parent.parent
    load_dotenv(_PROJECT_ROOT / ".env")
except ImportError:
    pass


def _parse_bool_env(raw: Optional[str], default: bool) -> bool:
    if raw is None or str(raw).strip() == "":
        return default
    return str(raw).strip().lower() in ("1", "true", "yes", "on")


def _parse_int_env(raw: Optional[str], default: int, minimum: int = 1) -> int:
    if raw is None or str(raw).strip() == "":
        return default
    try:
        value = int(str(raw).strip())
    except ValueError:
        return default
    return max(minimum, value)


def sweep_threads() -> int:
    """
    Upper bound on concurrently running sweep cells.

    Env: MRT_THREADS=<int> (default 1, i.e. cells run in-process one by one)
    """
    return _parse_int_env(os.getenv("MRT_THREADS"), 1)


def progress_enabled() -> bool:
    """
    Show tqdm progress bars during training.

    Env: MRT_PROGRESS=true|false (default true)
    """
    return _parse_bool_env(os.getenv("MRT_PROGRESS"), True)


def slow_tests_enabled() -> bool:
    """
    Run acceptance-scale tests (full 10-class runs, control sweeps).

    Env: MRT_SLOW_TESTS=true|false (default false)
    """
    return _parse_bool_env(os.getenv("MRT_SLOW_TESTS"), False)


def log_level() -> int:
    """
    Root log level for the CLI.

    Env: MRT_LOG_LEVEL=DEBUG|INFO|WARNING|ERROR (default INFO)
    """
    raw = (os.getenv("MRT_LOG_LEVEL") or "INFO").strip().upper()
    return getattr(logging, raw, logging.INFO)
