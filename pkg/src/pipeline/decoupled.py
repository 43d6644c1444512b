"""
Decoupled pipelining: one stage decodes whole abstract traces while the other
reifies the traces decoded before them.
"""

import asyncio
import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional

from ..errors import CoAError, GeneratorFailure
from .base_pipeline import BasePipeline, ItemReport, QueueSample, Reifier, RunReport, WorkItem, reifier_failure
from .clock import Clock
from .generator import TraceGenerator, as_generator_failure

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class _Decoded:
    item: WorkItem
    started: float
    decode_seconds: float
    text: Optional[str] = None
    error: Optional[GeneratorFailure] = None


_DONE = None


class DecoupledPipeline(BasePipeline):
    """Producer/consumer over one bounded queue.

    The producer only waits on tools when the queue is full. The consumer is
    the single place reports are assembled, so results come out in input order.
    Item ``seconds`` is the time between consecutive completions, which makes
    the per-item times add up to the run's total.
    """

    mode = "decoupled"

    def __init__(self, generator: TraceGenerator, reifier: Reifier, clock: Clock, queue_capacity: int = 8):
        if queue_capacity < 1:
            raise ValueError("queue_capacity must be at least 1")
        super().__init__(generator, clock)
        self.reifier = reifier
        self.queue_capacity = queue_capacity

    async def _produce(self, items: Iterable[WorkItem], queue: asyncio.Queue) -> None:
        for item in items:
            started = self.clock.now()
            try:
                text = await self.generator.next_trace(item, self.clock)
                decoded = _Decoded(item, started, self.clock.now() - started, text=text)
            except Exception as exc:
                decoded = _Decoded(item, started, self.clock.now() - started, error=as_generator_failure(item, exc))
            await queue.put(decoded)
        await queue.put(_DONE)

    async def _consume(self, queue: asyncio.Queue, run_started: float) -> tuple:
        reports: List[ItemReport] = []
        samples: List[QueueSample] = []
        previous = run_started
        while True:
            samples.append(QueueSample(time=self.clock.now(), occupancy=queue.qsize()))
            decoded = await queue.get()
            if decoded is _DONE:
                break
            item = decoded.item
            if decoded.error is not None:
                report = self._item_report(item, previous, decoded.decode_seconds, error=decoded.error)
            else:
                tool_started = self.clock.now()
                try:
                    reified, latencies = await self.reifier(item, decoded.text, self.clock)
                    report = self._item_report(
                        item,
                        previous,
                        decoded.decode_seconds,
                        reified,
                        tool_seconds=self.clock.now() - tool_started,
                        tool_latencies=latencies,
                    )
                except CoAError as exc:
                    report = self._item_report(
                        item,
                        previous,
                        decoded.decode_seconds,
                        error=reifier_failure(item, exc),
                        tool_seconds=self.clock.now() - tool_started,
                    )
            previous = report.finished
            reports.append(report)
            logger.debug("Item %s done at %.3f", item.id, report.finished)
        return reports, samples

    async def run(self, items: Iterable[WorkItem]) -> RunReport:
        queue: asyncio.Queue = asyncio.Queue(maxsize=self.queue_capacity)
        started = self.clock.now()
        producer = asyncio.create_task(self._produce(list(items), queue))
        try:
            reports, samples = await self._consume(queue, started)
        finally:
            if not producer.done():
                producer.cancel()
        await producer
        return self._build_report(reports, started, samples, self.queue_capacity)


def run_decoupled(
    items: Iterable[WorkItem],
    generator: TraceGenerator,
    reifier: Reifier,
    clock: Clock,
    queue_capacity: int = 8,
) -> RunReport:
    """Run a workload through the decoupled pipeline on ``clock``."""
    pipeline = DecoupledPipeline(generator, reifier, clock, queue_capacity)
    return clock.run(pipeline.run(items))
