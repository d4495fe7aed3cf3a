"""Order-independent execution of replicated jobs.

Each job is identified by an integer index and derives its own random
stream from it, so running jobs serially or on any number of worker
processes gives identical results. Results are always returned in index
order.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

ENV_WORKERS = "HARMEP_WORKERS"


def resolve_workers(workers: int | None = None) -> int:
    """Worker count from the argument, else ``$HARMEP_WORKERS``, else 1."""
    if workers is None:
        raw = os.environ.get(ENV_WORKERS, "1")
        try:
            workers = int(raw)
        except ValueError as exc:
            raise ValueError(f"{ENV_WORKERS} must be an integer, got {raw!r}") from exc
    workers = int(workers)
    if workers < 1:
        raise ValueError("worker count must be >= 1")
    return workers


def run_indexed(func: Callable[[int], object], indices: Sequence[int], workers: int | None = None) -> list:
    """``[func(i) for i in indices]``, possibly spread over worker processes.

    ``func`` must be picklable (a module-level function or a
    :func:`functools.partial` of one) when ``workers > 1``.
    """
    indices = list(indices)
    workers = min(resolve_workers(workers), max(len(indices), 1))
    if workers == 1:
        return [func(i) for i in indices]
    chunk = max(1, len(indices) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, indices, chunksize=chunk))
