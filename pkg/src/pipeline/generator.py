"""
Trace generators and the simulated decoding cost model.

A generator produces a question's trace either whole (``next_trace``, used by
the decoupled pipeline) or as chunks that each end at a tool operation
(``stream_trace``, used by the interleaved runner). Both charge the same decode
time for the same trace.
"""

import logging
from dataclasses import dataclass, field
from typing import AsyncIterator, Callable, Iterable, List, Mapping, Optional, Protocol, Tuple

from ..errors import CoAError, GeneratorFailure, TraceSyntaxError
from ..trace_dsl import Domain, Segment, Text, scan_trace
from .base_pipeline import WorkItem
from .clock import Clock

logger = logging.getLogger(__name__)


def whitespace_tokens(text: str) -> int:
    return len(text.split())


@dataclass(frozen=True)
class LatencyModel:
    """Decode seconds = ``per_token_cost`` x tokens, summed over rendered segments."""

    per_token_cost: float = 0.05
    tokens: Callable[[str], int] = whitespace_tokens

    @classmethod
    def from_rate(cls, tokens_per_second: float, tokens: Callable[[str], int] = whitespace_tokens) -> "LatencyModel":
        return cls(1.0 / tokens_per_second, tokens)

    def segment_seconds(self, segments: Iterable[Segment]) -> float:
        return self.per_token_cost * sum(self.tokens(s.render()) for s in segments)

    def decode_seconds(self, text: str, domain: Domain = Domain.MATH) -> float:
        return sum(self.segment_seconds(chunk.segments) for chunk in split_chunks(text, domain))


@dataclass(frozen=True)
class Chunk:
    """Decoded text up to and including one tool operation (or the trailing text)."""

    text: str
    segments: Tuple[Segment, ...] = field(default=())
    error: Optional[TraceSyntaxError] = None

    @property
    def operations(self) -> List[Segment]:
        return [s for s in self.segments if not isinstance(s, Text)]


def split_chunks(text: str, domain: Domain = Domain.MATH) -> List[Chunk]:
    """Cut a trace after every operation. Unparseable text stays one raw chunk."""
    try:
        trace, _ = scan_trace(text, domain)
    except TraceSyntaxError as exc:
        return [Chunk(text, (Text(text),), exc)] if text else []
    data = text.encode("utf-8")
    chunks: List[Chunk] = []
    pending: List[Segment] = []
    start = 0
    for segment in trace.segments:
        pending.append(segment)
        if not isinstance(segment, Text):
            end = segment.span[1]
            chunks.append(Chunk(data[start:end].decode("utf-8"), tuple(pending)))
            pending, start = [], end
    if pending:
        chunks.append(Chunk(data[start:].decode("utf-8"), tuple(pending)))
    return chunks


class TraceGenerator(Protocol):
    async def next_trace(self, item: WorkItem, clock: Clock) -> str: ...

    def stream_trace(self, item: WorkItem, clock: Clock) -> AsyncIterator[Chunk]: ...


class ReplayGenerator:
    """Replays recorded traces with simulated decode latency. Deterministic."""

    def __init__(self, traces: Mapping[str, str], latency: Optional[LatencyModel] = None):
        self.traces = dict(traces)
        self.latency = latency or LatencyModel()

    @classmethod
    def from_items(cls, items: Iterable[WorkItem], latency: Optional[LatencyModel] = None) -> "ReplayGenerator":
        return cls({item.id: item.trace for item in items if item.trace is not None}, latency)

    def _text(self, item: WorkItem) -> str:
        try:
            return self.traces[item.id]
        except KeyError:
            raise GeneratorFailure(f"No recorded trace for {item.id!r}", item.id) from None

    async def next_trace(self, item: WorkItem, clock: Clock) -> str:
        text = self._text(item)
        chunks = split_chunks(text, item.domain)
        await clock.advance(sum(self._chunk_seconds(c) for c in chunks))
        return text

    async def stream_trace(self, item: WorkItem, clock: Clock) -> AsyncIterator[Chunk]:
        for chunk in split_chunks(self._text(item), item.domain):
            await clock.advance(self._chunk_seconds(chunk))
            yield chunk

    def _chunk_seconds(self, chunk: Chunk) -> float:
        return self.latency.segment_seconds(chunk.segments)


def as_generator_failure(item: WorkItem, exc: Exception) -> GeneratorFailure:
    if isinstance(exc, GeneratorFailure):
        return exc
    message = exc.message if isinstance(exc, CoAError) else str(exc) or type(exc).__name__
    return GeneratorFailure(f"Generator failed: {message}", item.id)
