"""
Bounded worker pool for sweep cells
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

from src.config.settings import sweep_threads

logger = logging.getLogger(__name__)

Job = TypeVar("Job")
Result = TypeVar("Result")


def run_cells(fn: Callable[[Job], Result], jobs: Sequence[Job], workers: Optional[int] = None) -> List[Result]:
    """
    Run fn over jobs, results in job order.

    Cells share no state, so a process pool and the in-process loop give
    identical results. workers defaults to MRT_THREADS.
    """
    workers = workers or sweep_threads()
    workers = max(1, min(workers, len(jobs)))
    if workers == 1:
        return [fn(job) for job in jobs]
    logger.info("running %d sweep cells on %d workers", len(jobs), workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))
