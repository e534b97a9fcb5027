"""Order-preserving worker pool used by the grid and restart loops."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

JOBS_ENV = "PARABOLICA_JOBS"


def resolve_jobs(jobs=None) -> int:
    if jobs is None:
        jobs = os.environ.get(JOBS_ENV, "1")
    jobs = int(jobs)
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    return jobs


def parallel_map(fn, items, jobs=1):
    """``list(map(fn, items))``, fanned out over ``jobs`` processes."""
    items = list(items)
    jobs = resolve_jobs(jobs)
    if jobs == 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))
