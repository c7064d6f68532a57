"""
Ordered chunked execution.

Work over N items is split into contiguous chunks; chunk results come back in
chunk order. Callers must only use per-item functions or merges that are exact
(integer counts), so the merged result does not depend on the worker count.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Tuple, TypeVar

from . import config

logger = logging.getLogger(__name__)

T = TypeVar("T")


def chunk_bounds(n_items: int, workers: int, min_chunk: Optional[int] = None) -> List[Tuple[int, int]]:
    """Contiguous [start, stop) ranges; at most `workers` chunks, each >= min_chunk items."""
    min_chunk = config.CHUNK_SIZE if min_chunk is None else min_chunk
    if n_items <= 0:
        return [(0, 0)]
    n_chunks = max(1, min(workers, n_items // max(1, min_chunk)))
    edges = [n_items * i // n_chunks for i in range(n_chunks + 1)]
    return [(edges[i], edges[i + 1]) for i in range(n_chunks)]


def map_chunks(
    fn: Callable[[int, int], T],
    n_items: int,
    workers: Optional[int] = None,
    min_chunk: Optional[int] = None,
) -> List[T]:
    """Run fn(start, stop) over chunks of range(n_items); results in chunk order."""
    workers = config.DEFAULT_WORKERS if workers is None else workers
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    bounds = chunk_bounds(n_items, workers, min_chunk)
    if len(bounds) == 1:
        return [fn(*bounds[0])]
    logger.debug("map_chunks: %d items in %d chunks on %d workers", n_items, len(bounds), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))
