"""
Ordered parallel map over record streams.
"""

import os
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from typing import Callable, Deque, Iterable, Iterator, Optional, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def default_workers() -> int:
    return os.cpu_count() or 1


def map_ordered(fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None) -> Iterator[R]:
    """Apply ``fn`` to every item on a thread pool, yielding results in input order.

    At most ``2 * workers`` items are in flight, so large inputs stream.
    """
    workers = workers or default_workers()
    if workers <= 1:
        for item in items:
            yield fn(item)
        return
    window = workers * 2
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending: Deque[Future] = deque()
        for item in items:
            pending.append(pool.submit(fn, item))
            if len(pending) >= window:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()
