"""
Ordered thread-pool mapping used wherever independent work items
(multistart runs, per-component fits, probe batches) may run concurrently.
"""
import os
from concurrent.futures import ThreadPoolExecutor

__all__ = ['map_ordered', 'resolve_threads']


def resolve_threads(threads=None):
    """
    Number of worker threads to use.

    ``None`` falls back to ``wcreg.conf.threads``; values below one mean
    "all CPUs".
    """
    if threads is None:
        from .. import conf
        threads = conf.threads
    threads = int(threads)
    if threads < 1:
        threads = os.cpu_count() or 1
    return threads


def map_ordered(func, items, threads=None):
    """
    Apply ``func`` to every item and return the results in input order.

    Exceptions are not raised here: each slot of the returned list holds
    either ``(True, result)`` or ``(False, exception)`` so that callers can
    aggregate failures deterministically.
    """
    items = list(items)
    threads = min(resolve_threads(threads), max(len(items), 1))

    def _call(item):
        try:
            return True, func(item)
        except Exception as exc:  # reported to the caller, never swallowed
            return False, exc

    if threads == 1:
        return [_call(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_call, items))
