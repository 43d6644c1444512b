"""
Interleaved tool calling: decoding stops at every operation, waits for the
tool's response and then resumes. Questions run one after another.
"""

import logging
from typing import Any, Dict, Iterable, List, Optional

from ..errors import CoAError, NoEntityFound, NoFinalAnswer, NoSearchResult, PlanStructureError, UnboundPlaceholder
from ..math_reify import answer_placeholder
from ..reified import ReifiedTrace
from ..tool_dispatcher import ToolDispatcher
from ..trace_dsl import (
    Domain,
    MathOp,
    NerOp,
    Placeholder,
    Segment,
    Text,
    Trace,
    WikiOp,
    check_structure,
    render_value,
    substitute,
)
from ..wiki_reify import ArticleResult, EntityResult, validate_plan
from .base_pipeline import BasePipeline, ItemReport, RunReport, WorkItem, reifier_failure
from .clock import Clock
from .generator import TraceGenerator, as_generator_failure

logger = logging.getLogger(__name__)


class _Session:
    """State of one question while its trace is decoded piece by piece."""

    def __init__(self, item: WorkItem, dispatcher: ToolDispatcher):
        self.item = item
        self.dispatcher = dispatcher
        self.segments: List[Segment] = []
        self.bindings: Dict[Placeholder, Any] = {}
        self.position = 0

    def _check(self) -> None:
        violations = check_structure(tuple(self.segments))
        if violations:
            raise violations[0]

    async def step(self, operation: Segment) -> None:
        self.position += 1
        if isinstance(operation, MathOp):
            value = await self.dispatcher.call_tool(
                "solve", {"derivation": operation.derivation, "values": self.bindings}
            )
            self.bindings[operation.defines] = value
        elif isinstance(operation, WikiOp):
            query = operation.step.fill({p: str(b) for p, b in self.bindings.items()})
            try:
                article, titles = await self.dispatcher.call_tool(
                    "wiki_search", {"query": query, "question": self.item.question}
                )
            except NoSearchResult as exc:
                raise NoSearchResult(exc.message, step=self.position, query=query) from None
            self.bindings[operation.defines] = ArticleResult(operation.defines, article, titles)
        elif isinstance(operation, NerOp):
            self.bindings[operation.defines] = await self._ner(operation)

    async def _ner(self, operation: NerOp) -> EntityResult:
        step = operation.step
        source = self.bindings.get(step.source)
        if not isinstance(source, ArticleResult):
            raise PlanStructureError(f"NER source {step.source} is not a bound article", step=self.position)
        try:
            chosen = await self.dispatcher.call_tool(
                "ner", {"article": source.article, "ner_class": step.ner_class, "question": self.item.question}
            )
        except NoEntityFound as exc:
            raise NoEntityFound(exc.message, step=self.position, ner_class=step.ner_class) from None
        return EntityResult(operation.defines, chosen, step.ner_class)

    async def feed(self, segments: Iterable[Segment]) -> None:
        for segment in segments:
            self.segments.append(segment)
            self._check()
            if not isinstance(segment, Text):
                await self.step(segment)

    def finish(self) -> ReifiedTrace:
        trace = Trace(tuple(self.segments), self.item.domain)
        reified = ReifiedTrace(trace=trace, bindings=dict(self.bindings), trace_id=self.item.id)
        reified.reified_text = substitute(trace, self.bindings)
        if trace.domain is Domain.WIKI:
            validate_plan(trace)
        else:
            if not trace.derivations:
                raise NoFinalAnswer("Trace has no derivations to solve")
            target = answer_placeholder(trace)
            if target not in self.bindings:
                raise UnboundPlaceholder([target.index])
            reified.answer_value = self.bindings[target]
            reified.final_answer = render_value(reified.answer_value)
        return reified


class InterleavedPipeline(BasePipeline):
    """Decode until an operation, call its tool, resume; one question at a time."""

    mode = "interleaved"

    def __init__(self, generator: TraceGenerator, dispatcher: ToolDispatcher, clock: Clock):
        super().__init__(generator, clock)
        self.dispatcher = dispatcher

    async def _run_item(self, item: WorkItem) -> ItemReport:
        started = self.clock.now()
        session = _Session(item, self.dispatcher)
        first_call = len(self.dispatcher.calls)
        decode_seconds = 0.0
        stream = self.generator.stream_trace(item, self.clock).__aiter__()
        error: Optional[CoAError] = None
        reified: Optional[ReifiedTrace] = None
        try:
            while True:
                resumed = self.clock.now()
                try:
                    chunk = await stream.__anext__()
                except StopAsyncIteration:
                    break
                except Exception as exc:
                    error = as_generator_failure(item, exc)
                    break
                finally:
                    decode_seconds += self.clock.now() - resumed
                if chunk.error is not None:
                    raise chunk.error
                await session.feed(chunk.segments)
            if error is None:
                reified = session.finish()
        except CoAError as exc:
            error = reifier_failure(item, exc)
        finally:
            await stream.aclose()

        latencies = self.dispatcher.calls[first_call:]
        return self._item_report(
            item,
            started,
            decode_seconds,
            reified,
            error=error,
            tool_seconds=sum(seconds for _, seconds in latencies),
            tool_latencies=list(latencies),
        )

    async def run(self, items: Iterable[WorkItem]) -> RunReport:
        started = self.clock.now()
        reports = [await self._run_item(item) for item in items]
        return self._build_report(reports, started)


def run_interleaved(
    items: Iterable[WorkItem],
    generator: TraceGenerator,
    tools: ToolDispatcher,
    clock: Clock,
) -> RunReport:
    """Run a workload serially with a tool call at every operation."""
    return clock.run(InterleavedPipeline(generator, tools, clock).run(items))
