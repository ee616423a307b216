"""Replica-level worker pool with per-replica random streams."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Any, Callable, List, Optional, TypeVar

import numpy as np

from .config import get_settings
from .logging_setup import get_logger

logger = get_logger(__name__)

T = TypeVar("T")


def replica_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for replica ``index`` derived from the master seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def initial_state_rng(seed: int, index: int) -> np.random.Generator:
    """Stream for an initial-state sample, disjoint from every ``replica_rng`` stream."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index), 1)))


def resolve_threads(flag: Optional[int] = None) -> int:
    if flag is not None:
        if flag < 1:
            raise ValueError(f"threads must be positive, got {flag}")
        return int(flag)
    return get_settings().default_threads


def run_replicas(
    fn: Callable[..., T],
    count: int,
    seed: int,
    threads: Optional[int] = None,
    **kwargs: Any,
) -> List[T]:
    """Run ``fn(index, seed, **kwargs)`` for every replica index, results in index order."""
    workers = min(resolve_threads(threads), max(1, count))
    task = partial(fn, seed=seed, **kwargs)
    logger.info("replica_batch_start", count=count, workers=workers)
    if workers == 1:
        results = [task(index) for index in range(count)]
    else:
        chunk = max(1, count // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(task, range(count), chunksize=chunk))
    logger.info("replica_batch_done", count=count)
    return results


def map_ordered(fn: Callable[[Any], T], items: List[Any], threads: Optional[int] = None) -> List[T]:
    """Order-preserving map over independent deterministic work items."""
    workers = min(resolve_threads(threads), max(1, len(items)))
    if workers == 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
