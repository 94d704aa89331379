"""Worker fan-out for per-point grid sweeps.

Point checks are pure functions, so they can be evaluated by a thread pool;
results are always merged back in grid order.  The IMMERSION_FORGE_THREADS
environment variable caps the worker count (default: single-threaded).
"""

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count():
    raw = os.environ.get("IMMERSION_FORGE_THREADS", "1")
    try:
        count = int(raw)
    except ValueError:
        return 1
    return max(1, count)


def map_ordered(fn, items):
    """Apply ``fn`` over ``items``, preserving order."""
    items = list(items)
    workers = worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
