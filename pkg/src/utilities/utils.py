from __future__ import unicode_literals

import logging
import os
import sys
import time
from functools import wraps
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Callable, Iterable

import coloredlogs
import numpy as np
import repackage
from humanfriendly import format_timespan
from joblib import Parallel, delayed

repackage.up(2)
from src.config.config import load_config

config = load_config()

THREADS_ENV = "CARNOT_THREADS"


class CustomLogger:
    def __init__(self, name, log_file: str | None = None):
        self.logger = logging.getLogger(name)
        if self.logger.handlers:
            # already configured by an earlier import of the same module
            return

        # Console logger writes to stderr, stdout carries the JSON reports
        console_handler = logging.StreamHandler(sys.stderr)
        console_formatter = coloredlogs.ColoredFormatter(
            fmt="%(asctime)s : %(name)s : %(levelname)-10s : %(message)s",
            field_styles={
                "hostname": {"color": "white"},
                "programname": {"color": "white"},
                "name": {"color": "white"},
                "levelname": {"color": "white"},
                "asctime": {"color": "white"},
            },
            level_styles={
                "debug": {"color": "cyan", "bold": True},
                "info": {"color": "green", "bold": True},
                "warning": {"color": "yellow", "bold": True},
                "error": {"color": "red", "bold": True},
                "critical": {"color": "red", "bold": True},
            },
        )
        console_handler.setFormatter(console_formatter)
        console_handler.setLevel(config["logging"]["console_level"])
        self.logger.addHandler(console_handler)

        # Local file logger for warnings and above
        log_file = log_file or config["logging"]["file"]
        if log_file:
            local_file_handler = RotatingFileHandler(
                log_file, maxBytes=100000, backupCount=1, delay=True
            )
            local_file_handler.setLevel(logging.WARNING)
            local_file_formatter = logging.Formatter(
                fmt="%(asctime)s : %(name)s : %(levelname)s : %(message)s"
            )
            local_file_handler.setFormatter(local_file_formatter)
            self.logger.addHandler(local_file_handler)

        self.logger.setLevel(logging.DEBUG)
        self.logger.propagate = False

    def info(self, message):
        self.logger.info(message)

    def debug(self, message):
        self.logger.debug(message)

    def warning(self, message):
        self.logger.warning(message)

    def error(self, message):
        self.logger.error(message)

    def critical(self, message):
        self.logger.critical(message)


def timer(func):
    """Wrapper for execution time measurement"""

    @wraps(func)
    def wrapper(*args, **kwargs):
        t1 = time.time()
        result = func(*args, **kwargs)
        t2 = time.time() - t1
        CustomLogger(Path(func.__code__.co_filename).name).debug(
            f"`{func.__name__}` ran in {format_timespan(t2)}"
        )
        return result

    return wrapper


def thread_count(threads: int | None = None) -> int:
    """
    Number of worker threads: explicit argument first, then the
    `CARNOT_THREADS` environment variable, then the config default.
    """
    if threads is not None:
        return max(1, int(threads))
    env_value = os.environ.get(THREADS_ENV)
    if env_value:
        try:
            return max(1, int(env_value))
        except ValueError:
            CustomLogger(Path(__file__).name).warning(
                f"Ignoring non-integer {THREADS_ENV}={env_value!r}"
            )
    return max(1, int(config["runtime"]["threads"]))


def derive_seeds(seed: Any, n: int) -> list[np.random.SeedSequence]:
    """
    Spawns `n` independent child seeds. Every parallel task gets its own
    child so results do not depend on the number of workers.

    Args:
        seed (int | np.random.SeedSequence | None): Parent seed.
        n (int): Number of children.

    Returns:
        list[np.random.SeedSequence]: Child seed sequences.
    """
    if isinstance(seed, np.random.SeedSequence):
        parent = seed
    else:
        parent = np.random.SeedSequence(seed)
    return parent.spawn(n)


def as_generator(seed: Any) -> np.random.Generator:
    """Turns an int, SeedSequence or Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def parallel_map(
    func: Callable[[Any], Any], items: Iterable[Any], threads: int | None = None
) -> list[Any]:
    """
    Maps `func` over `items` preserving order. Runs inline for a single
    worker and on joblib's threading backend otherwise.
    """
    items = list(items)
    n_jobs = min(thread_count(threads), max(1, len(items)))
    if n_jobs == 1:
        return [func(item) for item in items]
    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(func)(item) for item in items)
