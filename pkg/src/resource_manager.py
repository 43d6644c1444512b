"""
Resource Manager: builds the retrieval stack, generators and clocks a command
needs from its ``RunConfig``. Everything is created lazily and cached.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional

from .config import RunConfig
from .errors import ConfigError
from .jsonl import iter_jsonl
from .llm_client import LLMAnswerGenerator, LLMClient, LLMGenerator
from .message_system import load_demonstrations
from .pipeline.base_pipeline import Reifier, WorkItem
from .pipeline.clock import Clock, make_clock
from .pipeline.generator import LatencyModel, ReplayGenerator
from .tool_dispatcher import ToolDispatcher, standard_tools
from .wiki_reify import AnswerGenerator, ReplayAnswerGenerator, WikiTools
from .wiki_tools.bm25 import BM25Params, Index, build_index
from .wiki_tools.corpus import load_corpus
from .wiki_tools.ner import Extractor, GazetteerExtractor, SpacyExtractor
from .wiki_tools.rerank import LexicalScorer

logger = logging.getLogger(__name__)


class ResourceManager:
    """Owns the shared, read-only resources of one command invocation."""

    def __init__(self, config: RunConfig):
        self.config = config
        self._index: Optional[Index] = None
        self._wiki_tools: Optional[WikiTools] = None
        self._llm_client: Optional[LLMClient] = None

    @property
    def has_index_source(self) -> bool:
        return self.config.index is not None or self.config.corpus is not None

    def bm25_params(self) -> BM25Params:
        c = self.config
        return BM25Params(k1=c.k1, b=c.b, title_weight=c.title_weight, stem=c.stem)

    def index(self) -> Index:
        """The persisted index if ``index`` is set, else one built from ``corpus``."""
        if self._index is None:
            if self.config.index is not None:
                self._index = Index.load(self.config.index)
                logger.info("Loaded index %s (%d articles)", self.config.index, self._index.doc_count)
            elif self.config.corpus is not None:
                self._index = build_index(load_corpus(self.config.corpus, self.config.chunk), self.bm25_params())
            else:
                raise ConfigError("Wiki commands need --index or --corpus")
        return self._index

    def extractor(self) -> Extractor:
        if self.config.ner == "spacy":
            return SpacyExtractor(self.config.spacy_model)
        return GazetteerExtractor.from_corpus(self.index().articles)

    def wiki_tools(self) -> WikiTools:
        if self._wiki_tools is None:
            self._wiki_tools = WikiTools(
                index=self.index(),
                ner=self.extractor(),
                scorer=LexicalScorer(self.config.stem),
                top_k=self.config.top_k,
                rerank_reference=self.config.rerank_reference,
            )
        return self._wiki_tools

    def optional_wiki_tools(self) -> Optional[WikiTools]:
        return self.wiki_tools() if self.has_index_source else None

    # Pipeline pieces

    def clock(self) -> Clock:
        return make_clock(self.config.clock)

    def latency(self) -> LatencyModel:
        return LatencyModel.from_rate(self.config.sim_decode_tps)

    @property
    def tool_seconds(self) -> float:
        return self.config.sim_tool_ms / 1000.0

    def reifier(self) -> Reifier:
        return Reifier(self.optional_wiki_tools(), self.tool_seconds)

    def dispatcher(self, clock: Clock) -> ToolDispatcher:
        return ToolDispatcher(clock, self.tool_seconds, standard_tools(self.optional_wiki_tools()))

    def llm_client(self) -> LLMClient:
        if self._llm_client is None:
            self._llm_client = LLMClient(self.config.model or "", seed=self.config.seed)
        return self._llm_client

    def trace_generator(self, items: List[WorkItem]):
        if self.config.generator == "llm":
            return LLMGenerator(self.llm_client(), self.config.domain, load_demonstrations(self.config.domain))
        return ReplayGenerator.from_items(items, self.latency())

    def answer_generator(self) -> Optional[AnswerGenerator]:
        """Replayed answers from ``answers`` JSONL, the LLM, or None."""
        if self.config.answers is not None:
            return ReplayAnswerGenerator(read_answers(self.config.answers))
        if self.config.generator == "llm":
            return LLMAnswerGenerator(self.llm_client())
        return None


def read_answers(path: Path) -> Dict[str, str]:
    """``{"id", "output"}`` JSONL as ``id -> output``."""
    return {str(row["id"]): str(row.get("output", "")) for row in iter_jsonl(path)}
