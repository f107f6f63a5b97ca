"""Worker-count resolution and deterministic chunked maps."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")

ENV_THREADS = "QSTEIN_THREADS"


def worker_count() -> int:
    """Number of workers from ``QSTEIN_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get(ENV_THREADS, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"{ENV_THREADS} must be an integer, got {raw!r}") from exc
    if n < 0:
        raise ValueError(f"{ENV_THREADS} must be >= 0, got {n}")
    return n or (os.cpu_count() or 1)


def ordered_map(fn: Callable[[int], T], n_tasks: int, workers: int | None = None) -> list[T]:
    """Run ``fn(i)`` for i in range(n_tasks); results come back in index order.

    Each task must depend only on its index, so the output does not depend on
    how many workers ran it.
    """
    workers = worker_count() if workers is None else workers
    if workers <= 1 or n_tasks <= 1:
        return [fn(i) for i in range(n_tasks)]
    with ThreadPoolExecutor(max_workers=min(workers, n_tasks)) as pool:
        return list(pool.map(fn, range(n_tasks)))


def chunk_bounds(total: int, chunk: int) -> Sequence[tuple[int, int]]:
    return [(lo, min(lo + chunk, total)) for lo in range(0, total, chunk)]
