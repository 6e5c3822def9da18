import os
from concurrent.futures import ThreadPoolExecutor


def thread_count() -> int:
    """Worker cap from TAGRANK_THREADS (default 1, i.e. serial)."""
    try:
        return max(1, int(os.environ.get("TAGRANK_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn, items):
    """Order-preserving map; results come back in input order regardless of threads."""
    n = thread_count()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
