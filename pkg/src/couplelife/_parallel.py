"""Process-pool helpers whose results never depend on the worker count."""

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

WORKERS_ENV = "COUPLELIFE_WORKERS"


def default_workers():
    """Worker count from ``COUPLELIFE_WORKERS``, else every available core."""
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


def map_indexed(fn, shared, n_items, workers=None):
    """``[fn(shared, i) for i in range(n_items)]``, split into contiguous chunks.

    Chunks are concatenated in index order, so the output is identical for any
    number of workers.
    """
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or n_items <= 1:
        return [fn(shared, i) for i in range(n_items)]
    chunks = [c for c in np.array_split(np.arange(n_items), min(workers, n_items)) if len(c)]
    with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
        parts = pool.map(_run_chunk, [(fn, shared, int(c[0]), int(c[-1]) + 1) for c in chunks])
        return [v for part in parts for v in part]


def _run_chunk(args):
    fn, shared, lo, hi = args
    return [fn(shared, i) for i in range(lo, hi)]
