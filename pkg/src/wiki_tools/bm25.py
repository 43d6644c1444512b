"""
Okapi BM25 inverted index over an article corpus.

Scoring, for query tokens q_1..q_m (repeats count):

    score(D) = sum_i idf(q_i) * f(q_i, D) * (k1 + 1) / (f(q_i, D) + k1 * (1 - b + b * |D| / avgdl))
    idf(t)   = ln(1 + (N - n_t + 0.5) / (n_t + 0.5))

``f`` counts the term in the body plus ``title_weight`` copies of the title;
``|D|`` is the body length. When every body is empty the length ratio is 1.
"""

import io
import json
import logging
import math
import re
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import BinaryIO, Callable, Dict, Iterable, List, Optional, Tuple

from ..errors import DuplicateArticleId, EmptyCorpus, IndexFormatError
from ..jsonl import atomic_open
from .corpus import Article

logger = logging.getLogger(__name__)

MAGIC = b"COAIDX1\0"
FORMAT_VERSION = 1

_WORD = re.compile(r"[^\W_]+")
_HEADER = struct.Struct("<ddIBI")
_U32 = struct.Struct("<I")
_POSTING = struct.Struct("<II")


@lru_cache(maxsize=1)
def _porter() -> Callable[[str], str]:
    from nltk.stem import PorterStemmer

    return PorterStemmer().stem


def tokenize(text: str, stem: bool = False) -> List[str]:
    """Lowercased Unicode-alphanumeric words."""
    tokens = _WORD.findall(text.lower())
    if stem:
        stemmer = _porter()
        tokens = [stemmer(t) for t in tokens]
    return tokens


@dataclass(frozen=True)
class BM25Params:
    k1: float = 1.2
    b: float = 0.75
    title_weight: int = 2
    stem: bool = False


@dataclass
class Index:
    """Immutable after ``build_index``; safe for concurrent searches."""

    articles: Tuple[Article, ...]
    postings: Dict[str, List[Tuple[int, int]]]
    doc_lengths: List[int]
    params: BM25Params = field(default_factory=BM25Params)

    def __post_init__(self):
        self.avg_doc_length = (sum(self.doc_lengths) / len(self.doc_lengths)) if self.doc_lengths else 0.0
        self._by_id = {a.id: i for i, a in enumerate(self.articles)}

    @property
    def doc_count(self) -> int:
        return len(self.articles)

    @property
    def k1(self) -> float:
        return self.params.k1

    @property
    def b(self) -> float:
        return self.params.b

    def article(self, article_id: str) -> Article:
        return self.articles[self._by_id[article_id]]

    def term_postings(self, term: str) -> List[Tuple[str, int]]:
        """Postings of a term as (article id, term frequency), sorted by id."""
        return [(self.articles[doc].id, tf) for doc, tf in self.postings.get(term, [])]

    def idf(self, term: str) -> float:
        n = len(self.postings.get(term, ()))
        return max(0.0, math.log(1.0 + (self.doc_count - n + 0.5) / (n + 0.5)))

    def save(self, path: Path, format: str = "binary") -> None:
        with atomic_open(Path(path), "wb" if format == "binary" else "w") as handle:
            if format == "binary":
                write_binary(self, handle)
            elif format == "json":
                json.dump(self.to_json(), handle, ensure_ascii=False, sort_keys=True, indent=1)
                handle.write("\n")
            else:
                raise ValueError(f"Unknown index format {format!r}")

    @classmethod
    def load(cls, path: Path) -> "Index":
        data = Path(path).read_bytes()
        if data.startswith(MAGIC):
            return read_binary(io.BytesIO(data))
        try:
            return cls.from_json(json.loads(data.decode("utf-8")))
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError) as exc:
            raise IndexFormatError(f"{path} is neither a binary nor a JSON index", path=str(path)) from exc

    def to_json(self) -> dict:
        return {
            "format": "coa-index",
            "version": FORMAT_VERSION,
            "k1": self.params.k1,
            "b": self.params.b,
            "title_weight": self.params.title_weight,
            "stem": self.params.stem,
            "doc_count": self.doc_count,
            "avg_doc_length": self.avg_doc_length,
            "articles": [
                {"id": a.id, "title": a.title, "text": a.text, "ner": a.ner, "length": n}
                for a, n in zip(self.articles, self.doc_lengths)
            ],
            "postings": {
                term: [[self.articles[doc].id, tf] for doc, tf in entries]
                for term, entries in sorted(self.postings.items())
            },
        }

    @classmethod
    def from_json(cls, payload: dict) -> "Index":
        articles = tuple(Article(a["id"], a["title"], a["text"], a.get("ner")) for a in payload["articles"])
        ordinal = {a.id: i for i, a in enumerate(articles)}
        postings = {
            term: [(ordinal[article_id], tf) for article_id, tf in entries]
            for term, entries in payload["postings"].items()
        }
        params = BM25Params(payload["k1"], payload["b"], payload["title_weight"], payload["stem"])
        return cls(articles, postings, [a["length"] for a in payload["articles"]], params)


def build_index(corpus: Iterable[Article], params: Optional[BM25Params] = None) -> Index:
    """Build an index. The result does not depend on corpus order.

    Raises:
        DuplicateArticleId, EmptyCorpus
    """
    params = params or BM25Params()
    by_id: Dict[str, Article] = {}
    for article in corpus:
        if article.id in by_id:
            raise DuplicateArticleId(f"Duplicate article id {article.id!r}", article_id=article.id)
        by_id[article.id] = article
    if not by_id:
        raise EmptyCorpus("Corpus contains no articles")

    articles = tuple(by_id[k] for k in sorted(by_id))
    postings: Dict[str, List[Tuple[int, int]]] = {}
    doc_lengths: List[int] = []
    for ordinal, article in enumerate(articles):
        body = tokenize(article.text, params.stem)
        title = tokenize(article.title, params.stem)
        counts: Dict[str, int] = {}
        for token in title * params.title_weight + body:
            counts[token] = counts.get(token, 0) + 1
        for term, tf in counts.items():
            postings.setdefault(term, []).append((ordinal, tf))
        doc_lengths.append(len(body))

    index = Index(articles, postings, doc_lengths, params)
    logger.info("Indexed %d articles, %d terms, avg length %.2f", index.doc_count, len(postings), index.avg_doc_length)
    return index


def search(index: Index, query: str, k: int = 10) -> List[Tuple[Article, float]]:
    """Top-``k`` articles by BM25 score, descending; ties by ascending article id."""
    if k < 1:
        raise ValueError("k must be at least 1")
    terms = tokenize(query, index.params.stem)
    scores: Dict[int, float] = {}
    k1, b = index.params.k1, index.params.b
    avgdl = index.avg_doc_length
    for term in terms:
        entries = index.postings.get(term)
        if not entries:
            continue
        idf = index.idf(term)
        for doc, tf in entries:
            ratio = index.doc_lengths[doc] / avgdl if avgdl > 0 else 1.0
            gain = idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * ratio))
            scores[doc] = scores.get(doc, 0.0) + gain
    ranked = sorted(scores.items(), key=lambda item: (-item[1], index.articles[item[0]].id))
    return [(index.articles[doc], score) for doc, score in ranked[:k]]


# Binary persistence: magic, header, articles, then postings; little-endian.


def _write_str(handle: BinaryIO, value: str) -> None:
    data = value.encode("utf-8")
    handle.write(_U32.pack(len(data)))
    handle.write(data)


def _read_exact(handle: BinaryIO, size: int) -> bytes:
    data = handle.read(size)
    if len(data) != size:
        raise IndexFormatError("Index file is truncated")
    return data


def _read_u32(handle: BinaryIO) -> int:
    return _U32.unpack(_read_exact(handle, _U32.size))[0]


def _read_str(handle: BinaryIO) -> str:
    return _read_exact(handle, _read_u32(handle)).decode("utf-8")


def write_binary(index: Index, handle: BinaryIO) -> None:
    params = index.params
    handle.write(MAGIC)
    handle.write(_HEADER.pack(params.k1, params.b, params.title_weight, int(params.stem), index.doc_count))
    for article, length in zip(index.articles, index.doc_lengths):
        _write_str(handle, article.id)
        _write_str(handle, article.title)
        _write_str(handle, article.text)
        _write_str(handle, article.ner or "")
        handle.write(_U32.pack(length))
    handle.write(_U32.pack(len(index.postings)))
    for term in sorted(index.postings):
        entries = index.postings[term]
        _write_str(handle, term)
        handle.write(_U32.pack(len(entries)))
        for doc, tf in entries:
            handle.write(_POSTING.pack(doc, tf))


def read_binary(handle: BinaryIO) -> Index:
    if _read_exact(handle, len(MAGIC)) != MAGIC:
        raise IndexFormatError("Bad index magic bytes")
    k1, b, title_weight, stem, doc_count = _HEADER.unpack(_read_exact(handle, _HEADER.size))
    articles = []
    lengths = []
    for _ in range(doc_count):
        article_id, title, text, ner = (_read_str(handle) for _ in range(4))
        articles.append(Article(article_id, title, text, ner or None))
        lengths.append(_read_u32(handle))
    postings: Dict[str, List[Tuple[int, int]]] = {}
    for _ in range(_read_u32(handle)):
        term = _read_str(handle)
        count = _read_u32(handle)
        raw = _read_exact(handle, count * _POSTING.size)
        postings[term] = [tuple(p) for p in _POSTING.iter_unpack(raw)]
    if handle.read(1):
        raise IndexFormatError("Trailing bytes after index postings")
    return Index(tuple(articles), postings, lengths, BM25Params(k1, b, title_weight, bool(stem)))
