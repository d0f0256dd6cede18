"""Thread-pool plumbing for batch prediction.

The DRF_THREADS environment variable caps the worker count (default: all
cores). Work is always cut into fixed-size chunks whose per-chunk
arithmetic does not depend on the worker count, so results are bitwise
identical whatever DRF_THREADS is set to.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV_VAR = "DRF_THREADS"
CHUNK_SIZE = 256


def worker_count():
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw is None:
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV_VAR} must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ValueError(f"{THREADS_ENV_VAR} must be a positive integer, got {raw!r}")
    return value


def run_chunked(work, n, chunk_size=CHUNK_SIZE):
    """Apply ``work(start, stop)`` over [0, n) in fixed chunks.

    ``work`` writes its results into caller-owned storage; chunk
    boundaries are independent of the thread count.
    """
    spans = [(start, min(start + chunk_size, n)) for start in range(0, n, chunk_size)]
    workers = min(worker_count(), len(spans)) or 1
    if workers == 1:
        for start, stop in spans:
            work(start, stop)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(work, start, stop) for start, stop in spans]
        for future in futures:
            future.result()
