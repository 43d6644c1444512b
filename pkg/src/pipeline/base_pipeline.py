"""
Base pipeline: work items, the reification stage and run reports.
Shared by the decoupled and interleaved runners.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

from pydantic import BaseModel, Field

from ..errors import CoAError, ReifierFailure
from ..evaluation import BUCKETS, count_steps, step_bucket
from ..jsonl import iter_jsonl
from ..math_reify import reify_math
from ..reified import ReifiedTrace
from ..trace_dsl import Domain, load_traces, parse_trace
from ..wiki_reify import PlanExecutor, WikiTools
from .clock import Clock

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WorkItem:
    """One question in a benchmark stream. ``trace`` is the recorded model output
    replayed by ``ReplayGenerator``."""

    id: str
    question: str = ""
    gold_steps: Optional[int] = None
    domain: Domain = Domain.MATH
    trace: Optional[str] = None

    @property
    def steps(self) -> int:
        if self.gold_steps is not None:
            return self.gold_steps
        return count_steps(self.trace or "", self.domain)


def load_workload(path: Path, domain: Domain = Domain.MATH) -> List[WorkItem]:
    """Work items from JSONL ``{"id", "question", "trace", "gold_steps"?, "domain"?}``."""
    items = []
    for row in iter_jsonl(Path(path)):
        items.append(
            WorkItem(
                id=str(row["id"]),
                question=row.get("question", ""),
                gold_steps=row.get("gold_steps"),
                domain=Domain(row.get("domain", domain)),
                trace=row.get("trace"),
            )
        )
    return items


def load_trace_items(path: Path, domain: Domain = Domain.MATH) -> List[WorkItem]:
    """Work items from a trace file: workload JSONL, or one plain trace per line."""
    try:
        return load_workload(path, domain)
    except (CoAError, KeyError):
        return [WorkItem(id=trace_id, domain=Domain(domain), trace=text) for trace_id, text in load_traces(path)]


class ItemReport(BaseModel):
    id: str
    status: str = "ok"
    seconds: float = 0.0
    started: float = 0.0
    finished: float = 0.0
    decode_seconds: float = 0.0
    tool_seconds: float = 0.0
    tool_calls: int = 0
    tool_latencies: List[Tuple[str, float]] = Field(default_factory=list)
    gold_steps: int = 0
    final_answer: Optional[str] = None
    error: Optional[Dict[str, Any]] = None


class QueueSample(BaseModel):
    time: float
    occupancy: int


class BucketTime(BaseModel):
    bucket: str
    gold_steps: float
    mean_seconds: float
    n: int


class RunReport(BaseModel):
    """Timing of one run. Per-item ``seconds`` sum to ``total_seconds``."""

    mode: str
    clock: str
    queue_capacity: Optional[int] = None
    total_seconds: float = 0.0
    items: List[ItemReport] = Field(default_factory=list)
    queue_samples: List[QueueSample] = Field(default_factory=list)
    buckets: List[BucketTime] = Field(default_factory=list)

    @property
    def ids(self) -> List[str]:
        return [item.id for item in self.items]

    @property
    def failures(self) -> int:
        return sum(item.status != "ok" for item in self.items)

    def csv_rows(self) -> List[Dict[str, Any]]:
        return [
            {"bucket": b.bucket, "gold_steps": b.gold_steps, "mode": self.mode, "mean_seconds": b.mean_seconds, "n": b.n}
            for b in self.buckets
        ]


def bucket_times(items: Iterable[ItemReport]) -> List[BucketTime]:
    grouped: Dict[str, List[ItemReport]] = {}
    for item in items:
        grouped.setdefault(step_bucket(item.gold_steps), []).append(item)
    return [
        BucketTime(
            bucket=bucket,
            gold_steps=sum(i.gold_steps for i in grouped[bucket]) / len(grouped[bucket]),
            mean_seconds=sum(i.seconds for i in grouped[bucket]) / len(grouped[bucket]),
            n=len(grouped[bucket]),
        )
        for bucket in BUCKETS
        if bucket in grouped
    ]


class Reifier:
    """Tool stage: parse and reify a decoded trace, then charge simulated tool time.

    ``tool_seconds`` is the simulated latency of one tool call; a math trace makes
    one solver call, a wiki trace one call per step plus lookahead searches.
    """

    def __init__(self, wiki_tools: Optional[WikiTools] = None, tool_seconds: float = 0.0):
        self.wiki_tools = wiki_tools
        self.tool_seconds = tool_seconds

    def reify(self, item: WorkItem, text: str) -> ReifiedTrace:
        trace = parse_trace(text, item.domain)
        if item.domain is Domain.MATH:
            return reify_math(trace, item.id)
        if self.wiki_tools is None:
            raise CoAError("Wiki reification needs an index", item_id=item.id)
        reified = PlanExecutor(trace, self.wiki_tools, item.question, item.id).run()
        if reified.error is not None:
            raise reified.error
        return reified

    async def __call__(self, item: WorkItem, text: str, clock: Clock) -> Tuple[ReifiedTrace, List[Tuple[str, float]]]:
        """Reified trace plus ``(call, seconds)`` for every tool call, timed on ``clock``."""
        reified = await clock.run_blocking(self.reify, item, text)
        latencies = []
        for label, _ in reified.tool_latencies:
            started = clock.now()
            await clock.advance(self.tool_seconds)
            latencies.append((label, clock.now() - started))
        return reified, latencies


def reifier_failure(item: WorkItem, error: CoAError) -> ReifierFailure:
    """Wrap a tool-stage error; the original diagnostic is kept as ``cause``."""
    if isinstance(error, ReifierFailure):
        return error
    failure = ReifierFailure(f"Reification failed: {error.message}", item.id)
    failure.details["cause"] = error.to_dict()
    return failure


class BasePipeline:
    """Common bookkeeping for the two scheduling modes."""

    mode = "base"

    def __init__(self, generator, clock: Clock):
        self.generator = generator
        self.clock = clock

    def _item_report(
        self,
        item: WorkItem,
        started: float,
        decode_seconds: float,
        reified: Optional[ReifiedTrace] = None,
        error: Optional[CoAError] = None,
        tool_seconds: float = 0.0,
        tool_latencies: Optional[List[Tuple[str, float]]] = None,
    ) -> ItemReport:
        finished = self.clock.now()
        if error is not None:
            logger.info("Item %s failed: %s", item.id, error.message)
        return ItemReport(
            id=item.id,
            status="failed" if error is not None else "ok",
            started=started,
            finished=finished,
            seconds=finished - started,
            decode_seconds=decode_seconds,
            tool_seconds=tool_seconds,
            tool_calls=len(tool_latencies or ()),
            tool_latencies=tool_latencies or [],
            gold_steps=item.steps,
            final_answer=reified.final_answer if reified is not None and error is None else None,
            error=error.to_dict() if error is not None else None,
        )

    def _build_report(
        self,
        items: List[ItemReport],
        started: float,
        samples: Optional[List[QueueSample]] = None,
        queue_capacity: Optional[int] = None,
    ) -> RunReport:
        report = RunReport(
            mode=self.mode,
            clock=self.clock.name,
            queue_capacity=queue_capacity,
            total_seconds=(items[-1].finished if items else self.clock.now()) - started,
            items=items,
            queue_samples=samples or [],
            buckets=bucket_times(items),
        )
        logger.info(
            "%s run: %d items, %d failed, %.3f s", self.mode, len(items), report.failures, report.total_seconds
        )
        return report
