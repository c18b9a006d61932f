"""Worker-count policy shared by the modules that fan out independent work."""

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count(default=1) -> int:
    """Workers allowed by GNET_THREADS (unset or invalid means ``default``)."""
    raw = os.environ.get("GNET_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        return default
    return max(1, n)


def ordered_map(fn, items, workers=None) -> list:
    """``[fn(x) for x in items]``, threaded when more than one worker is allowed.

    Results keep input order, so output does not depend on scheduling.
    """
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
