"""
Question-similarity reranking of BM25 candidates.

The default scorer is a cosine over term-frequency vectors; any object with a
``score(question, text) -> float`` method (for example a client for an
embedding service) can stand in for it.
"""

import math
from collections import Counter
from typing import List, Protocol, Sequence, Tuple

from ..errors import EmptyCandidates
from .bm25 import tokenize
from .corpus import Article


class SimilarityScorer(Protocol):
    def score(self, question: str, text: str) -> float: ...


class LexicalScorer:
    """Cosine similarity of term-frequency vectors. Stateless."""

    def __init__(self, stem: bool = False):
        self.stem = stem

    def score(self, question: str, text: str) -> float:
        left = Counter(tokenize(question, self.stem))
        right = Counter(tokenize(text, self.stem))
        if not left or not right:
            return 0.0
        dot = sum(count * right[term] for term, count in left.items())
        norm = math.sqrt(sum(c * c for c in left.values())) * math.sqrt(sum(c * c for c in right.values()))
        return dot / norm


def rerank_scored(
    candidates: Sequence[Article], question: str, scorer: SimilarityScorer
) -> List[Tuple[Article, float]]:
    """Candidates with their similarity to ``question``, best first.

    ``candidates`` must be in BM25 rank order; equal scores keep that order.
    """
    scored = [(rank, article, scorer.score(question, article.full_text)) for rank, article in enumerate(candidates)]
    scored.sort(key=lambda item: (-item[2], item[0]))
    return [(article, score) for _, article, score in scored]


def rerank(candidates: Sequence[Article], question: str, scorer: SimilarityScorer) -> Article:
    """The candidate most similar to ``question``.

    Raises:
        EmptyCandidates
    """
    if not candidates:
        raise EmptyCandidates("No candidates to rerank")
    return rerank_scored(candidates, question, scorer)[0][0]
