import asyncio

import pytest

from src.errors import CoAError, NoEntityFound, NoSearchResult, PlanStructureError
from src.evaluation import exact_match, extract_text_answer
from src.trace_dsl import Domain, Placeholder, parse_trace
from src.wiki_reify import (
    ArticleResult,
    EntityResult,
    PlanExecutor,
    PlanKind,
    ReplayAnswerGenerator,
    WikiTools,
    classify_plan,
    collect_search_context,
    execute_plan,
    generate_answer,
    select_by_surface,
    validate_plan,
)
from src.wiki_tools import Article, GazetteerExtractor, LexicalScorer, build_index
from tests.conftest import BIG_STONE_GAP_QUESTION, BIG_STONE_GAP_TRACE, make_tools

Y1, Y2, Y3 = Placeholder(1), Placeholder(2), Placeholder(3)


def _wiki(text: str):
    return parse_trace(text, Domain.WIKI)


def _run(trace_text: str, tools: WikiTools, question: str = "", **kwargs):
    return PlanExecutor(_wiki(trace_text), tools, question, "t", **kwargs).run()


def test_big_stone_gap_plan(bsg_tools):
    reified = _run(BIG_STONE_GAP_TRACE, bsg_tools, BIG_STONE_GAP_QUESTION)
    assert reified.ok
    assert str(reified.bindings[Y1]) == "Big Stone Gap (film)"
    assert reified.bindings[Y2] == EntityResult(Y2, "Adriana Trigiani", "person")
    assert reified.bindings[Y3].article.id == "bsg-2"
    assert reified.tool_calls == 3
    assert [label for label, _ in reified.tool_latencies] == ["wiki:y1", "ner:y2", "wiki:y3"]
    assert reified.reified_text == (
        "First search the [director of romantic comedy ``Big Stone Gap'' -Wiki-> Big Stone Gap (film)]. "
        "The name of this film's director is [Big Stone Gap (film) -NER(person)-> Adriana Trigiani]. "
        "Then determine [Adriana Trigiani in what New York city -Wiki-> Adriana Trigiani]."
    )


def test_big_stone_gap_context_and_record(bsg_tools):
    reified = _run(BIG_STONE_GAP_TRACE, bsg_tools, BIG_STONE_GAP_QUESTION)
    context = collect_search_context(reified)
    assert context.startswith("Big Stone Gap (film) > Big Stone Gap is a 2014")
    assert "Greenwich Village" in context
    record = reified.to_record(context)
    assert record["status"] == "ok"
    assert record["bindings"] == [
        {"var": "y1", "kind": "article", "title": "Big Stone Gap (film)"},
        {"var": "y2", "kind": "entity", "entity": "Adriana Trigiani"},
        {"var": "y3", "kind": "article", "title": "Adriana Trigiani"},
    ]


def test_execute_plan_matches_executor(bsg_index):
    reified = execute_plan(
        _wiki(BIG_STONE_GAP_TRACE),
        bsg_index,
        GazetteerExtractor.from_corpus(bsg_index.articles),
        LexicalScorer(),
        BIG_STONE_GAP_QUESTION,
        top_k=5,
    )
    assert reified.ok
    assert str(reified.bindings[Y3]) == "Adriana Trigiani"


def test_bundled_traces_reify_on_bundled_corpus(wiki_rows, wiki_tools):
    for row in wiki_rows:
        reified = _run(row["trace"], wiki_tools, row["question"])
        assert reified.ok, row["id"]
        titles = [str(b) for b in reified.bindings.values() if isinstance(b, ArticleResult)]
        assert set(titles) <= set(row["gold_titles"]), row["id"]


def test_classify_plan(wiki_rows):
    kinds = {row["id"]: classify_plan(_wiki(row["trace"])) for row in wiki_rows}
    assert kinds["wiki-brodowski"] is PlanKind.SINGLE
    assert kinds["wiki-grand-slam"] is PlanKind.COMPARISON
    assert kinds["wiki-big-stone-gap"] is PlanKind.BRIDGE


def test_validate_plan():
    validate_plan(_wiki(BIG_STONE_GAP_TRACE))
    with pytest.raises(PlanStructureError):
        validate_plan(parse_trace("[1 + 1 = y1]"))
    with pytest.raises(PlanStructureError):
        validate_plan(_wiki("No steps at all."))
    with pytest.raises(PlanStructureError) as info:
        validate_plan(_wiki("[a -Wiki-> y1] [y1 -NER(person)-> y2] [y2 -NER(person)-> y3]"))
    assert info.value.step == 3


def test_structure_error_marks_result_failed(bsg_tools):
    reified = _run("[a film -Wiki-> y1] [y1 -NER(person)-> y2] [y2 -NER(person)-> y3]", bsg_tools)
    assert not reified.ok
    assert isinstance(reified.error, PlanStructureError)
    assert reified.bindings == {}


def test_no_search_result(bsg_tools):
    reified = _run("[zzz qqq -Wiki-> y1]", bsg_tools)
    assert isinstance(reified.error, NoSearchResult)
    assert reified.error.step == 1
    assert reified.to_record()["error"]["code"] == "NoSearchResult"


def test_no_entity_keeps_partial_bindings(bsg_tools):
    reified = _run("[Adriana Trigiani -Wiki-> y1] [y1 -NER(location)-> y2]", bsg_tools)
    assert isinstance(reified.error, NoEntityFound)
    assert reified.error.step == 2
    assert str(reified.bindings[Y1]) == "Adriana Trigiani"
    assert Y2 not in reified.bindings


def test_invalid_rerank_reference(bsg_index):
    with pytest.raises(ValueError):
        make_tools(bsg_index, rerank_reference="title")


def test_rerank_reference_defaults_to_query(bsg_index):
    query_tools = make_tools(bsg_index)
    question_tools = make_tools(bsg_index, rerank_reference="question")
    assert query_tools.rerank_reference == "query"
    query = "Adriana Trigiani in what New York city"
    assert question_tools.search(query) == query_tools.search(query)


# Entity disambiguation

NIGHT_CROSSING = [
    Article("m1", "Night Crossing (film)", "Night Crossing stars Alice Walker and Bob Stone."),
    Article("p1", "Alice Walker", "Alice Walker is a painter from Ohio."),
    Article("p2", "Bob Stone", "Bob Stone is a director based in Greenwich Village."),
]
NIGHT_CROSSING_TRACE = "[Night Crossing -Wiki-> y1] [y1 -NER(person)-> y2] [y2 director -Wiki-> y3]"
NIGHT_CROSSING_QUESTION = "Which director based in Greenwich Village starred in Night Crossing?"


@pytest.fixture(scope="module")
def crossing_tools():
    return make_tools(build_index(NIGHT_CROSSING))


def test_lookahead_picks_entity_with_most_relevant_follow_up(crossing_tools):
    reified = _run(NIGHT_CROSSING_TRACE, crossing_tools, NIGHT_CROSSING_QUESTION)
    assert reified.ok
    assert str(reified.bindings[Y2]) == "Bob Stone"
    assert reified.bindings[Y3].article.id == "p2"
    assert reified.tool_calls == 5


def test_without_lookahead_surface_similarity_decides(crossing_tools):
    reified = _run(NIGHT_CROSSING_TRACE, crossing_tools, NIGHT_CROSSING_QUESTION, lookahead=False)
    assert str(reified.bindings[Y2]) == "Alice Walker"
    assert reified.tool_calls == 3


def test_select_by_surface():
    scorer = LexicalScorer()
    assert select_by_surface(["Alice Walker", "Bob Stone"], "Was Bob Stone a director?", scorer) == "Bob Stone"
    assert select_by_surface(["Alice Walker", "Bob Stone"], "unrelated", scorer) == "Alice Walker"


# Final answers


def test_generate_answer_from_replay(bsg_tools):
    reified = _run(BIG_STONE_GAP_TRACE, bsg_tools, BIG_STONE_GAP_QUESTION)
    reified.trace_id = "wiki-big-stone-gap"
    generator = ReplayAnswerGenerator({"wiki-big-stone-gap": "She lives there. The answer is Greenwich Village."})
    answer = asyncio.run(generate_answer(reified, BIG_STONE_GAP_QUESTION, generator))
    assert answer == reified.final_answer
    assert exact_match(answer, "Greenwich Village", Domain.WIKI)


def test_generate_answer_without_marker_keeps_text(bsg_tools):
    reified = _run(BIG_STONE_GAP_TRACE, bsg_tools, BIG_STONE_GAP_QUESTION)
    answer = asyncio.run(generate_answer(reified, "", ReplayAnswerGenerator({"t": "  Greenwich Village \n"})))
    assert answer == "Greenwich Village"


def test_replay_answer_missing_id():
    with pytest.raises(CoAError):
        asyncio.run(ReplayAnswerGenerator({}).answer("nope", "q", "c"))


def test_gold_answers_extract():
    assert exact_match(extract_text_answer("The answer is Greenwich Village."), "greenwich village", Domain.WIKI)
