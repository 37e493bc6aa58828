"""
Deterministic fan-out of independent replicate tasks.

Every task receives its own child stream derived from ``(seed, index)``, and
results come back in task order, so output never depends on worker count.
"""

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

__all__ = ["child_rng", "resolve_threads", "map_ordered"]

THREADS_ENV = "TVD_THREADS"


def child_rng(seed, *key):
    """Generator for the stream identified by ``seed`` and an index path."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def resolve_threads(threads=None):
    """Worker count: explicit value, else ``$TVD_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get(THREADS_ENV, "").strip()
        threads = int(env) if env else 1
    threads = int(threads)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


def map_ordered(fn, tasks, threads=None):
    """``[fn(t) for t in tasks]``, optionally across a process pool."""
    tasks = list(tasks)
    threads = min(resolve_threads(threads), max(1, len(tasks)))
    if threads == 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, tasks, chunksize=chunk))
