# app/core/parallel.py
"""Worker pool for per-sample evaluations with deterministic result placement."""
from multiprocessing import Pool
from typing import Any, Callable, List, Optional, Sequence

from app.core.logging import logger

def map_samples(
    fn: Callable[[Any], Any],
    items: Sequence[Any],
    n_workers: int = 1,
    chunksize: Optional[int] = None,
) -> List[Any]:
    """
    Apply fn to every item, in parallel when n_workers > 1

    Args:
        fn: Module-level (picklable) callable
        items: Work items, typically sample indices
        n_workers: Number of worker processes; 1 runs inline
        chunksize: Items handed to a worker at a time

    Returns:
        List[Any]: Results in the order of items
    """
    items = list(items)
    if not items:
        return []
    if n_workers <= 1 or len(items) == 1:
        return [fn(item) for item in items]

    if chunksize is None:
        chunksize = max(1, len(items) // (4 * n_workers))
    logger.debug(f"Dispatching {len(items)} samples to {n_workers} workers (chunksize={chunksize})")
    with Pool(processes=n_workers) as pool:
        # Pool.map preserves input order
        return pool.map(fn, items, chunksize=chunksize)
