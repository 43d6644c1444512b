"""
Bundled worked examples: rewritten math and wiki traces with their gold
answers, the wiki articles those traces retrieve, and a two-article corpus.
"""

from importlib import resources
from pathlib import Path

from ..trace_dsl import Domain

MATH_TRACES = "math.jsonl"
WIKI_TRACES = "wiki.jsonl"
WIKI_CORPUS = "wiki_corpus.jsonl"
BIG_STONE_GAP_CORPUS = "big_stone_gap_corpus.jsonl"


def data_path(name: str) -> Path:
    return Path(str(resources.files(__name__).joinpath(name)))


def traces_path(domain: Domain) -> Path:
    """Traces file for a domain; each record also serves as a gold record and a work item."""
    return data_path(MATH_TRACES if Domain(domain) is Domain.MATH else WIKI_TRACES)
