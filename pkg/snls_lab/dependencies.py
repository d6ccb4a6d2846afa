# dependencies.py
from typing import Optional
import logging
import os


def get_workers(requested: Optional[int] = None) -> int:
    """Worker count: explicit value, then SNLS_WORKERS, then the CPU count."""
    if requested is not None:
        return max(1, int(requested))
    env = os.getenv("SNLS_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def get_log_level(verbose: int = 0) -> int:
    if verbose >= 1:
        return logging.DEBUG
    name = os.getenv("SNLS_LOG_LEVEL", "INFO").upper()
    return getattr(logging, name, logging.INFO)
