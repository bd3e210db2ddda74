"""
Seed-level worker pool with deterministic, index-ordered reassembly.
"""

from __future__ import annotations

import concurrent.futures
from typing import Any, Callable, Sequence

from tqdm import tqdm


def _serial_map(fn: Callable, tasks: Sequence, verbose: bool, desc: str) -> list:
    return [fn(task) for task in tqdm(tasks, desc=desc, disable=not verbose)]


def _parallel_map(
    fn: Callable, tasks: Sequence, workers: int, verbose: bool, desc: str
) -> list:
    results: dict[int, Any] = {}
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(fn, task): idx for idx, task in enumerate(tasks)}
        with tqdm(total=len(tasks), desc=desc, disable=not verbose) as pbar:
            for future in concurrent.futures.as_completed(futures):
                results[futures[future]] = future.result()
                pbar.update()
    return [results[idx] for idx in sorted(results)]


def ordered_map(
    fn: Callable,
    tasks: Sequence,
    workers: int = 1,
    verbose: bool = False,
    desc: str = "seeds",
) -> list:
    """
    Apply fn to every task, returning results in task order.

    Tasks finish in any order on the pool; the reassembly by task index keeps
    outputs independent of the worker count. fn and the tasks must pickle.

    Args:
        fn: Module-level function of one task
        tasks: Task payloads
        workers: Pool size; 1 runs in-process
        verbose: Show a tqdm progress bar
        desc: Progress bar label

    Returns:
        List of fn(task) in the order of tasks
    """
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return _serial_map(fn, tasks, verbose, desc)
    return _parallel_map(fn, tasks, min(workers, len(tasks)), verbose, desc)
