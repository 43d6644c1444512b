"""Shared fixtures: bundled traces, corpora and retrieval stacks."""

import random
from typing import Dict, List

import pytest

from src.data import BIG_STONE_GAP_CORPUS, MATH_TRACES, WIKI_CORPUS, WIKI_TRACES, data_path
from src.jsonl import iter_jsonl
from src.wiki_reify import WikiTools
from src.wiki_tools import GazetteerExtractor, Index, LexicalScorer, build_index, load_corpus

FIGURE_TRACE = "The shop sold [20 + 35 = y1] apples in total. So [90 - y1 = y2] apples are left. The answer is y2."

BIG_STONE_GAP_TRACE = (
    "First search the [director of romantic comedy ``Big Stone Gap'' -Wiki-> y1]. "
    "The name of this film's director is [y1 -NER(person)-> y2]. "
    "Then determine [y2 in what New York city -Wiki-> y3]."
)
BIG_STONE_GAP_QUESTION = (
    "The director of the romantic comedy \"Big Stone Gap\" is based in what New York city?"
)


def _rows(name: str) -> List[Dict]:
    return list(iter_jsonl(data_path(name)))


@pytest.fixture(scope="session")
def math_rows() -> List[Dict]:
    return _rows(MATH_TRACES)


@pytest.fixture(scope="session")
def wiki_rows() -> List[Dict]:
    return _rows(WIKI_TRACES)


@pytest.fixture(scope="session")
def wiki_index() -> Index:
    return build_index(load_corpus(data_path(WIKI_CORPUS)))


@pytest.fixture(scope="session")
def bsg_index() -> Index:
    return build_index(load_corpus(data_path(BIG_STONE_GAP_CORPUS)))


def make_tools(index: Index, **kwargs) -> WikiTools:
    return WikiTools(index, GazetteerExtractor.from_corpus(index.articles), LexicalScorer(), **kwargs)


@pytest.fixture(scope="session")
def wiki_tools(wiki_index) -> WikiTools:
    return make_tools(wiki_index)


@pytest.fixture(scope="session")
def bsg_tools(bsg_index) -> WikiTools:
    return make_tools(bsg_index)


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240607)
