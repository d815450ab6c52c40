"""Deterministic random substreams and an order-preserving worker map."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Iterable

import numpy as np

_CONTEXT: Any = None


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key...)``.

    Replicate ``b`` of a study seeded with ``s`` always draws from
    ``substream(s, b)`` whichever process runs it.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def _init(context):
    global _CONTEXT
    _CONTEXT = context


def _call(args):
    func, item = args
    return func(_CONTEXT, item)


def worker_map(func: Callable[[Any, Any], Any], items: Iterable, context: Any = None, workers: int = 1) -> list:
    """``[func(context, item) for item in items]``, optionally in processes.

    ``func`` must be a module-level function. ``context`` is shipped once
    per worker process. Results keep the order of ``items``.
    """
    items = list(items)
    workers = int(workers or 1)
    if workers <= 1 or len(items) <= 1:
        return [func(context, it) for it in items]
    workers = min(workers, len(items))
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers, initializer=_init, initargs=(context,)) as ex:
        return list(ex.map(_call, [(func, it) for it in items], chunksize=chunk))
