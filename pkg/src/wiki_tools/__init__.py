"""
Wikipedia-domain tools: BM25 retrieval, similarity reranking and NER.
"""

from .bm25 import BM25Params, Index, build_index, search, tokenize
from .corpus import Article, load_corpus
from .ner import (
    TAG_CLASSES,
    GazetteerExtractor,
    NamedEntity,
    SpacyExtractor,
    aggregate_tag,
    ner_extract,
    title_tag,
    unmapped_tags,
)
from .rerank import LexicalScorer, SimilarityScorer, rerank, rerank_scored

__all__ = [
    "Article",
    "BM25Params",
    "GazetteerExtractor",
    "Index",
    "LexicalScorer",
    "NamedEntity",
    "SimilarityScorer",
    "SpacyExtractor",
    "TAG_CLASSES",
    "aggregate_tag",
    "build_index",
    "load_corpus",
    "ner_extract",
    "rerank",
    "rerank_scored",
    "search",
    "title_tag",
    "tokenize",
    "unmapped_tags",
]
