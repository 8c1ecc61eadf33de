"""Order-deterministic parallel map capped by the ``OBSV_THREADS`` environment variable."""
import os
from concurrent.futures import ThreadPoolExecutor


def thread_cap(default=1):
    raw = os.environ.get("OBSV_THREADS")
    if raw is None:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        return default


def ordered_map(fn, items, threads=None):
    """``[fn(x) for x in items]``, possibly on worker threads; results keep input order."""
    items = list(items)
    threads = thread_cap() if threads is None else max(1, int(threads))
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
