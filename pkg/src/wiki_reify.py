"""
Wiki-domain reification: a trace's WikiSearch and NER steps run as a
sequential tool plan.

Each WikiSearch step fills its query with earlier bindings (articles by title,
entities by surface), retrieves the top-k BM25 articles and keeps the one the
similarity scorer ranks first. Each NER step extracts entities of one class from
an article bound earlier. When several entities qualify, every candidate is
tried in the next search that consumes it and the entity whose provisional
result is most similar to the question wins.
"""

import logging
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Protocol, Sequence, Tuple, Union

from .errors import (
    CoAError,
    NoEntityFound,
    NoSearchResult,
    PlanError,
    PlanStructureError,
)
from .evaluation import extract_text_answer
from .reified import ReifiedTrace
from .trace_dsl import Domain, NerOp, Placeholder, ToolStep, Trace, WikiOp, substitute
from .wiki_tools.bm25 import Index, search
from .wiki_tools.corpus import Article
from .wiki_tools.ner import Extractor
from .wiki_tools.rerank import SimilarityScorer, rerank_scored

logger = logging.getLogger(__name__)

RERANK_REFERENCES = ("query", "question")


@dataclass(frozen=True)
class ArticleResult:
    """A WikiSearch output: the selected article plus the top-k titles it came from."""

    placeholder: Placeholder
    article: Article
    candidates: Tuple[str, ...] = field(default=(), compare=False)

    kind = "article"

    def to_record(self) -> Dict[str, str]:
        return {"var": str(self.placeholder), "kind": self.kind, "title": self.article.title}

    def __str__(self) -> str:
        return self.article.title


@dataclass(frozen=True)
class EntityResult:
    placeholder: Placeholder
    entity: str
    general_class: str = ""

    kind = "entity"

    def to_record(self) -> Dict[str, str]:
        return {"var": str(self.placeholder), "kind": self.kind, "entity": self.entity}

    def __str__(self) -> str:
        return self.entity


WikiBinding = Union[ArticleResult, EntityResult]


class PlanKind(str, Enum):
    SINGLE = "Single"
    BRIDGE = "Bridge"
    COMPARISON = "Comparison"


def classify_plan(trace: Trace) -> PlanKind:
    """Bridge when a step consumes an earlier output, Comparison for two or more
    independent searches, Single otherwise."""
    if any(step.refs for step in trace.steps):
        return PlanKind.BRIDGE
    searches = [op for op in trace.operations if isinstance(op, WikiOp)]
    return PlanKind.COMPARISON if len(searches) >= 2 else PlanKind.SINGLE


@dataclass(frozen=True)
class WikiTools:
    """The retrieval stack one plan runs against. Shared read-only across plans.

    ``rerank_reference`` picks the text the BM25 top-k is reranked against.
    The default ``"query"`` uses the step's own instantiated query. ``"question"``
    reranks every step against the original question instead; on bridge plans
    the lexical scorer then tends to re-select the first-hop article, because
    the question names it. An empty question falls back to the query.
    """

    index: Index
    ner: Extractor
    scorer: SimilarityScorer
    top_k: int = 10
    rerank_reference: str = "query"

    def __post_init__(self):
        if self.rerank_reference not in RERANK_REFERENCES:
            raise ValueError(f"rerank_reference must be one of {RERANK_REFERENCES}, got {self.rerank_reference!r}")

    def search(self, query: str, question: str = "") -> Tuple[Article, Tuple[str, ...]]:
        """Top-1 reranked article for ``query`` and the BM25 top-k titles.

        Raises:
            NoSearchResult
        """
        hits = search(self.index, query, self.top_k)
        if not hits:
            raise NoSearchResult(f"No article matches {query!r}", query=query)
        candidates = [article for article, _ in hits]
        reference = question if self.rerank_reference == "question" and question else query
        best = rerank_scored(candidates, reference, self.scorer)[0][0]
        return best, tuple(a.title for a in candidates)

    def entities(self, article: Article, ner_class: str) -> List[str]:
        """Distinct entity surfaces of ``ner_class`` in an article's text, in order."""
        seen: Dict[str, None] = {}
        for entity in self.ner.extract(article.text):
            if entity.general_class == ner_class:
                seen.setdefault(entity.surface, None)
        return list(seen)

    def similarity(self, question: str, text: str) -> float:
        return self.scorer.score(question, text)


def validate_plan(trace: Trace) -> None:
    """Structural checks beyond what parsing enforces.

    Raises:
        PlanStructureError
    """
    if trace.domain is not Domain.WIKI:
        raise PlanStructureError("Trace was not parsed in the wiki domain")
    if not trace.operations:
        raise PlanStructureError("Trace has no WikiSearch or NER steps")
    producers: Dict[Placeholder, str] = {}
    for position, op in enumerate(trace.operations, 1):
        if isinstance(op, NerOp):
            source = op.step.source
            if producers.get(source) != "search":
                raise PlanStructureError(
                    f"NER source {source} is not the output of an earlier WikiSearch step", step=position
                )
        producers[op.defines] = "search" if isinstance(op, WikiOp) else "ner"


def select_by_surface(candidates: Sequence[str], question: str, scorer: SimilarityScorer) -> str:
    """Entity whose surface is most similar to the question; ties keep text order."""
    scored = [(-scorer.score(question, surface), position, surface) for position, surface in enumerate(candidates)]
    return min(scored)[2]


class PlanExecutor:
    """Runs one trace's steps in order, accumulating bindings on a ``ReifiedTrace``."""

    def __init__(
        self,
        trace: Trace,
        tools: WikiTools,
        question: str = "",
        trace_id: str = "",
        lookahead: bool = True,
    ):
        self.trace = trace
        self.tools = tools
        self.question = question
        self.lookahead = lookahead
        self.operations = trace.operations
        self.reified = ReifiedTrace(trace=trace, trace_id=trace_id)

    @property
    def bindings(self) -> Dict[Placeholder, WikiBinding]:
        return self.reified.bindings

    def fill(self, step: ToolStep, extra: Optional[Mapping[Placeholder, WikiBinding]] = None) -> str:
        values = {p: str(b) for p, b in self.bindings.items()}
        if extra:
            values.update({p: str(b) for p, b in extra.items()})
        return step.fill(values)

    def _timed_search(self, query: str, label: str) -> Tuple[Article, Tuple[str, ...]]:
        started = time.perf_counter()
        try:
            return self.tools.search(query, self.question)
        finally:
            self.reified.tool_calls += 1
            self.reified.tool_latencies.append((label, time.perf_counter() - started))

    def run_search(self, position: int, op: WikiOp) -> ArticleResult:
        query = self.fill(op.step)
        try:
            article, titles = self._timed_search(query, f"wiki:{op.defines}")
        except NoSearchResult as exc:
            raise NoSearchResult(exc.message, step=position, query=query) from None
        binding = ArticleResult(op.defines, article, titles)
        logger.debug("Step %d: %r -> %s", position, query, article.title)
        return binding

    def run_ner(self, position: int, op: NerOp) -> EntityResult:
        step = op.step
        source = self.bindings.get(step.source)
        if not isinstance(source, ArticleResult):
            raise PlanStructureError(f"NER source {step.source} is not a bound article", step=position)

        started = time.perf_counter()
        candidates = self.tools.entities(source.article, step.ner_class)
        self.reified.tool_calls += 1
        self.reified.tool_latencies.append((f"ner:{op.defines}", time.perf_counter() - started))

        if not candidates:
            raise NoEntityFound(
                f"No {step.ner_class} entity in {source.article.title!r}",
                step=position,
                ner_class=step.ner_class,
            )
        if len(candidates) == 1:
            chosen = candidates[0]
        else:
            chosen = self._choose_entity(position, op, candidates)
        return EntityResult(op.defines, chosen, step.ner_class)

    def _consumer(self, position: int, output: Placeholder) -> Optional[Tuple[int, WikiOp]]:
        for later, op in enumerate(self.operations[position:], position + 1):
            if isinstance(op, WikiOp) and output in op.refs:
                return later, op
        return None

    def _choose_entity(self, position: int, op: NerOp, candidates: List[str]) -> str:
        consumer = self._consumer(position, op.defines) if self.lookahead else None
        if consumer is not None:
            later, next_op = consumer
            pending = set(next_op.refs) - set(self.bindings) - {op.defines}
            if pending:
                consumer = None
        if consumer is None:
            return select_by_surface(candidates, self.question, self.tools.scorer)

        best: Optional[Tuple[float, int, str]] = None
        for rank, surface in enumerate(candidates):
            query = self.fill(next_op.step, {op.defines: EntityResult(op.defines, surface)})
            try:
                article, _ = self._timed_search(query, f"lookahead:{op.defines}")
            except NoSearchResult:
                continue
            score = self.tools.similarity(self.question, article.full_text)
            logger.debug("Lookahead %s=%r -> %s (%.4f)", op.defines, surface, article.title, score)
            if best is None or (-score, rank) < (-best[0], best[1]):
                best = (score, rank, surface)
        if best is None:
            raise NoSearchResult(
                f"No provisional search for {op.defines} returned an article", step=later
            )
        return best[2]

    def run(self) -> ReifiedTrace:
        """Execute every step. Plan failures mark the result failed and keep partial bindings."""
        try:
            validate_plan(self.trace)
            for position, op in enumerate(self.operations, 1):
                if isinstance(op, WikiOp):
                    self.bindings[op.defines] = self.run_search(position, op)
                else:
                    self.bindings[op.defines] = self.run_ner(position, op)
            self.reified.reified_text = substitute(self.trace, self.bindings)
        except PlanError as exc:
            logger.info("Plan %s failed: %s", self.reified.trace_id or "trace", exc.message)
            self.reified.fail(exc)
        return self.reified


def execute_plan(
    trace: Trace,
    index: Index,
    ner: Extractor,
    scorer: SimilarityScorer,
    question: str,
    top_k: int = 10,
    rerank_reference: str = "query",
    trace_id: str = "",
) -> ReifiedTrace:
    """Run a wiki trace as a tool plan; see ``PlanExecutor``."""
    tools = WikiTools(index, ner, scorer, top_k, rerank_reference)
    return PlanExecutor(trace, tools, question, trace_id).run()


def collect_search_context(reified: ReifiedTrace) -> str:
    """``title > text`` of each searched article in step order; NER results excluded."""
    blocks = []
    for op in reified.trace.operations:
        binding = reified.bindings.get(op.defines)
        if isinstance(op, WikiOp) and isinstance(binding, ArticleResult):
            blocks.append(binding.article.context_block())
    return " ".join(blocks)


# Final-answer generation


class AnswerGenerator(Protocol):
    async def answer(self, item_id: str, question: str, context: str) -> str: ...


class ReplayAnswerGenerator:
    """Answers read from a mapping ``id -> output text``."""

    def __init__(self, outputs: Mapping[str, str]):
        self.outputs = dict(outputs)

    async def answer(self, item_id: str, question: str, context: str) -> str:
        try:
            return self.outputs[item_id]
        except KeyError:
            raise CoAError(f"No recorded answer for {item_id!r}", item_id=item_id) from None


_ANSWER_MARKER = re.compile(r"The answer is ")


async def generate_answer(
    reified: ReifiedTrace, question: str, generator: AnswerGenerator
) -> Optional[str]:
    """Ask ``generator`` for the final answer from the search context and record it."""
    text = await generator.answer(reified.trace_id, question, collect_search_context(reified))
    reified.final_answer = extract_text_answer(text) if _ANSWER_MARKER.search(text) else text.strip() or None
    return reified.final_answer
