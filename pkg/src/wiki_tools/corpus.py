"""
Article corpus: KILT-like JSONL, one ``{"id", "title", "text"}`` object per line.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

from ..errors import CorpusError
from ..jsonl import iter_jsonl

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Article:
    id: str
    title: str
    text: str
    # fine-grained entity tag of the title itself (e.g. "PERSON"), if known
    ner: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        if not self.title or not self.title.strip():
            raise CorpusError(f"Article {self.id!r} has an empty title", article_id=self.id)

    @property
    def full_text(self) -> str:
        """Title followed by body: what similarity scorers see."""
        return f"{self.title} {self.text}".strip()

    def context_block(self) -> str:
        return f"{self.title} > {self.text}"


def load_corpus(path: Path, chunk: bool = False) -> Iterator[Article]:
    """Stream articles from a JSONL corpus.

    With ``chunk=True`` every blank-line-separated paragraph of an article becomes
    its own article ``<id>#<n>`` carrying the parent's title.
    """
    for record in iter_jsonl(Path(path)):
        try:
            article = Article(
                id=str(record["id"]),
                title=str(record["title"]),
                text=str(record.get("text", "")),
                ner=record.get("ner"),
            )
        except KeyError as exc:
            raise CorpusError(f"Corpus record missing field {exc.args[0]!r}", path=str(path)) from None
        if not chunk:
            yield article
            continue
        paragraphs = [p.strip() for p in article.text.split("\n\n") if p.strip()] or [""]
        for number, paragraph in enumerate(paragraphs):
            yield Article(f"{article.id}#{number}", article.title, paragraph, article.ner)
