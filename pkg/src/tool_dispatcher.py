"""
In-process tool registry used by the interleaved runner.

Tools are plain functions registered under a name. ``call_tool`` runs one on
the clock's blocking executor and then charges the simulated per-call latency.
"""

import functools
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING, Any, Callable, Dict, List, Mapping, Optional, Tuple

from .errors import NoEntityFound, UnknownTool
from .math_reify import evaluate
from .trace_dsl import Derivation, Placeholder
from .wiki_reify import WikiTools, select_by_surface
from .wiki_tools.corpus import Article

if TYPE_CHECKING:
    from .pipeline.clock import Clock

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    fn: Callable[..., Any]


class ToolDispatcher:
    """Named tools plus the clock their latency is charged on."""

    def __init__(self, clock: "Clock", tool_seconds: float = 0.0, tools: Optional[Mapping[str, ToolSpec]] = None):
        self.clock = clock
        self.tool_seconds = tool_seconds
        self._tools: Dict[str, ToolSpec] = dict(tools or {})
        self.calls: List[Tuple[str, float]] = []

    def register(self, name: str, fn: Callable[..., Any], description: str = "") -> None:
        self._tools[name] = ToolSpec(name, description, fn)

    def list_tools(self) -> List[ToolSpec]:
        return list(self._tools.values())

    async def call_tool(self, name: str, arguments: Dict[str, Any]) -> Any:
        """Run tool ``name`` with keyword ``arguments``.

        Args:
            name: Registered tool name
            arguments: Keyword arguments for the tool

        Returns:
            Whatever the tool returns; its errors propagate unchanged

        Raises:
            UnknownTool
        """
        spec = self._tools.get(name)
        if spec is None:
            raise UnknownTool(f"No tool named {name!r}", tool=name, available=sorted(self._tools))
        started = self.clock.now()
        try:
            return await self.clock.run_blocking(functools.partial(spec.fn, **arguments))
        finally:
            await self.clock.advance(self.tool_seconds)
            elapsed = self.clock.now() - started
            self.calls.append((name, elapsed))
            logger.debug("Tool %s took %.3f s", name, elapsed)


def solve_derivation(derivation: Derivation, values: Mapping[Placeholder, Fraction]) -> Fraction:
    return evaluate(derivation.lhs, dict(values), derivation)


def standard_tools(wiki_tools: Optional[WikiTools] = None) -> Dict[str, ToolSpec]:
    """``solve`` always; ``wiki_search`` and ``ner`` when retrieval tools are given."""
    tools = {"solve": ToolSpec("solve", "Evaluate one derivation exactly", solve_derivation)}
    if wiki_tools is not None:

        def wiki_search(query: str, question: str = "") -> Tuple[Article, Tuple[str, ...]]:
            return wiki_tools.search(query, question)

        def ner(article: Article, ner_class: str, question: str = "") -> str:
            candidates = wiki_tools.entities(article, ner_class)
            if not candidates:
                raise NoEntityFound(f"No {ner_class} entity in {article.title!r}", ner_class=ner_class)
            if len(candidates) == 1:
                return candidates[0]
            return select_by_surface(candidates, question, wiki_tools.scorer)

        tools["wiki_search"] = ToolSpec("wiki_search", "Top reranked article for a query", wiki_search)
        tools["ner"] = ToolSpec("ner", "Entity of one class in an article, closest to the question", ner)
    return tools
