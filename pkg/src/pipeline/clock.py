"""
Clocks for the pipeline runners.

Both clocks drive an asyncio event loop. ``MonotonicClock`` is wall time.
``VirtualClock`` runs the loop on simulated time: whenever the loop would wait
for its next timer, the clock jumps straight to it, so ``asyncio.sleep`` costs
nothing real and schedules are exactly reproducible.
"""

import asyncio
import selectors
import time
from typing import Any, Awaitable, Callable, Optional, Protocol, TypeVar

T = TypeVar("T")


class Clock(Protocol):
    name: str

    def now(self) -> float: ...

    async def advance(self, seconds: float) -> None: ...

    def run(self, coro: Awaitable[T]) -> T: ...

    async def run_blocking(self, fn: Callable[..., T], *args: Any) -> T: ...


class _JumpingSelector(selectors.DefaultSelector):
    """Selector that treats a finite wait as elapsed virtual time."""

    def __init__(self, clock: "VirtualClock"):
        super().__init__()
        self._clock = clock

    def select(self, timeout: Optional[float] = None):
        if timeout is None:
            return super().select(None)
        if timeout > 0:
            self._clock._jump(timeout)
        return super().select(0)


class _VirtualEventLoop(asyncio.SelectorEventLoop):
    def __init__(self, clock: "VirtualClock"):
        super().__init__(selector=_JumpingSelector(clock))
        self._virtual_clock = clock

    def time(self) -> float:
        return self._virtual_clock.now()


class VirtualClock:
    """Discrete-event clock. Single-threaded: blocking work runs inline at zero cost."""

    name = "virtual"

    def __init__(self, start: float = 0.0):
        self._now = float(start)

    def now(self) -> float:
        return self._now

    def _jump(self, seconds: float) -> None:
        self._now = max(self._now, self._now + seconds)

    async def advance(self, seconds: float) -> None:
        await asyncio.sleep(max(0.0, seconds))

    def run(self, coro: Awaitable[T]) -> T:
        loop = _VirtualEventLoop(self)
        try:
            return loop.run_until_complete(coro)
        finally:
            loop.run_until_complete(loop.shutdown_asyncgens())
            loop.close()

    async def run_blocking(self, fn: Callable[..., T], *args: Any) -> T:
        return fn(*args)


class MonotonicClock:
    """Wall-clock time from ``time.monotonic``; blocking work goes to a thread."""

    name = "real"

    def __init__(self):
        self._origin = time.monotonic()

    def now(self) -> float:
        return time.monotonic() - self._origin

    async def advance(self, seconds: float) -> None:
        await asyncio.sleep(max(0.0, seconds))

    def run(self, coro: Awaitable[T]) -> T:
        return asyncio.run(coro)

    async def run_blocking(self, fn: Callable[..., T], *args: Any) -> T:
        return await asyncio.to_thread(fn, *args)


def make_clock(kind: str) -> Clock:
    if kind == "virtual":
        return VirtualClock()
    if kind == "real":
        return MonotonicClock()
    raise ValueError(f"Unknown clock {kind!r}")
