import re

import pytest

from src.errors import CoAError, DuplicateDefinition, NestedOperation, UnbalancedBracket
from src.evaluation import GoldRecord
from src.math_reify import reify_math
from src.trace_dsl import Domain, parse_trace
from src.verifier import (
    RejectReason,
    Verdict,
    VerificationResult,
    check_single_assignment,
    verification_stats,
    verify_record,
)
from tests.conftest import BIG_STONE_GAP_QUESTION, BIG_STONE_GAP_TRACE, FIGURE_TRACE

FIGURE_GOLD = GoldRecord(id="fig", question="How many apples are left?", gold_answer="The answer is 35.")
BSG_GOLD = GoldRecord(
    id="bsg",
    question=BIG_STONE_GAP_QUESTION,
    gold_answer="The answer is Greenwich Village.",
    gold_titles=["Big Stone Gap (film)", "Adriana Trigiani"],
)


def _gold(row) -> GoldRecord:
    return GoldRecord.model_validate(row)


def test_bundled_math_traces_are_accepted(math_rows):
    results = [verify_record(row["trace"], _gold(row), Domain.MATH) for row in math_rows]
    assert all(r.verdict is Verdict.ACCEPT for r in results)
    assert verification_stats(results).acceptance_rate == 1.0


def test_bundled_wiki_traces_are_accepted(wiki_rows, wiki_tools):
    results = [verify_record(row["trace"], _gold(row), Domain.WIKI, wiki_tools) for row in wiki_rows]
    assert [r.id for r in results if not r.accepted] == []
    stats = verification_stats(results)
    assert stats.acceptance_rate == 1.0
    assert set(stats.by_plan_kind) == {"Single", "Comparison", "Bridge"}


def test_figure_record():
    result = verify_record(FIGURE_TRACE, FIGURE_GOLD, Domain.MATH)
    assert result.to_record() == {"id": "fig", "verdict": "Accept", "steps": 2, "final_answer": "35"}


def _operator_flips(trace: str):
    """Every variant of ``trace`` with one operator inside a bracket swapped."""
    swap = {"+": "-", "-": "+", "*": "/", "/": "*"}
    for bracket in re.finditer(r"\[[^\[\]]*\]", trace):
        body_start = bracket.start()
        for match in re.finditer(r" ([-+*/]) ", bracket.group()):
            position = body_start + match.start(1)
            yield trace[:position] + swap[trace[position]] + trace[position + 1:]


def test_operator_flips_are_rejected_unless_value_preserving(math_rows):
    checked = 0
    for row in math_rows:
        gold = _gold(row)
        for mutated in _operator_flips(row["trace"]):
            try:
                value = reify_math(parse_trace(mutated)).answer_value
            except CoAError:
                value = None
            result = verify_record(mutated, gold, Domain.MATH)
            assert result.accepted == (value == gold.gold_final_number), mutated
            checked += 1
    assert checked > 10


def test_answer_swap_is_rejected():
    result = verify_record(FIGURE_TRACE.replace("The answer is y2.", "The answer is y1."), FIGURE_GOLD, Domain.MATH)
    assert result.reason is RejectReason.ANSWER_MISMATCH
    assert result.detail == {"code": "AnswerMismatch", "expected": "35", "actual": "55"}


def _operand_bumps(trace: str):
    """Every variant of ``trace`` with one integer literal inside a bracket increased by one."""
    for bracket in re.finditer(r"\[[^\[\]]*\]", trace):
        for match in re.finditer(r"(?<![\w.,])\d+(?![\w.,])", bracket.group()):
            start, end = bracket.start() + match.start(), bracket.start() + match.end()
            yield trace[:start] + str(int(match.group()) + 1) + trace[end:]


def test_operand_changes_are_rejected_unless_value_preserving(math_rows):
    checked = 0
    for row in math_rows:
        gold = _gold(row)
        for mutated in _operand_bumps(row["trace"]):
            try:
                value = reify_math(parse_trace(mutated)).answer_value
            except CoAError:
                value = None
            result = verify_record(mutated, gold, Domain.MATH)
            assert result.accepted == (value == gold.gold_final_number), mutated
            checked += 1
    assert checked > 10


def test_result_variable_swaps_are_answer_mismatches(math_rows):
    checked = 0
    for row in math_rows:
        gold = _gold(row)
        statement = re.search(r"The answer is (y\d+)", row["trace"])
        if statement is None:
            continue
        bindings = reify_math(parse_trace(row["trace"])).bindings
        for placeholder, value in bindings.items():
            if str(placeholder) == statement.group(1):
                continue
            mutated = row["trace"][: statement.start(1)] + str(placeholder) + row["trace"][statement.end(1):]
            result = verify_record(mutated, gold, Domain.MATH)
            if value == gold.gold_final_number:
                assert result.accepted, mutated
            else:
                assert result.reason is RejectReason.ANSWER_MISMATCH, mutated
            checked += 1
    assert checked > 5


def test_scrambled_first_query_is_rejected(wiki_rows, wiki_tools):
    for row in wiki_rows:
        mutated = re.sub(r"\[[^\[\]]*?-Wiki->", "[zzz qqq -Wiki->", row["trace"], count=1)
        assert mutated != row["trace"]
        result = verify_record(mutated, _gold(row), Domain.WIKI, wiki_tools)
        assert result.reason in (RejectReason.TITLE_MISMATCH, RejectReason.SOLVE_ERROR), row["id"]
        assert result.step == 1


@pytest.mark.parametrize(
    "candidate,reason",
    [
        ("", RejectReason.PARSE_ERROR),
        ("[20 + 35 = y1", RejectReason.PARSE_ERROR),
        ("[1 = y1] and [2 = y1]", RejectReason.STRUCTURE_ERROR),
        ("[5 - 5 = y1] [10 / y1 = y2]", RejectReason.SOLVE_ERROR),
        ("The answer is 35.", RejectReason.SOLVE_ERROR),
    ],
)
def test_math_rejections(candidate, reason):
    result = verify_record(candidate, FIGURE_GOLD, Domain.MATH)
    assert result.verdict is Verdict.REJECT
    assert result.reason is reason


def test_math_gold_without_number_is_mismatch():
    result = verify_record(FIGURE_TRACE, GoldRecord(id="x", gold_answer="unknown"), Domain.MATH)
    assert result.reason is RejectReason.ANSWER_MISMATCH


def test_coincident_values_warn_but_accept():
    candidate = "[20 + 35 = y1] [50 + 5 = y2]. The answer is y2."
    result = verify_record(candidate, GoldRecord(id="c", gold_answer="55"), Domain.MATH)
    assert result.accepted
    assert result.warnings == [{"code": "CoincidentValueWarning", "placeholders": ["y1", "y2"], "value": "55"}]
    assert verification_stats([result]).warnings == 1


def test_check_single_assignment_on_raw_text():
    (violation,) = check_single_assignment("[1 = y1] and [2 = y1]")
    assert isinstance(violation, DuplicateDefinition)
    assert check_single_assignment(FIGURE_TRACE) == []
    assert check_single_assignment(BIG_STONE_GAP_TRACE, Domain.WIKI) == []


def test_check_single_assignment_reports_unsegmentable_text():
    (violation,) = check_single_assignment("[1 = y1")
    assert isinstance(violation, UnbalancedBracket)
    (nested,) = check_single_assignment("[[1 = y1]]")
    assert isinstance(nested, NestedOperation)


def test_wiki_accept_and_query_scrambles(bsg_tools, wiki_tools):
    assert verify_record(BIG_STONE_GAP_TRACE, BSG_GOLD, Domain.WIKI, bsg_tools).plan_kind == "Bridge"

    nowhere = verify_record("[zzz qqq -Wiki-> y1]", BSG_GOLD, Domain.WIKI, bsg_tools)
    assert nowhere.reason is RejectReason.TITLE_MISMATCH
    assert nowhere.step == 1

    gold = GoldRecord(id="n", gold_titles=["Randal Kleiser", "Kyle Schickner"])
    result = verify_record("First find out the [nationality of Ricky Gervais -Wiki-> y1].", gold, Domain.WIKI, wiki_tools)
    assert result.reason is RejectReason.TITLE_MISMATCH
    assert result.step == 1
    assert result.detail["title"] == "Ricky Gervais"


def test_wiki_structure_and_parse_rejections(bsg_tools):
    structure = verify_record("[a -Wiki-> y1] [y1 -NER(person)-> y2] [y2 -NER(person)-> y3]", BSG_GOLD, Domain.WIKI, bsg_tools)
    assert structure.reason is RejectReason.STRUCTURE_ERROR
    parse = verify_record("[1 + 1 = y1]", BSG_GOLD, Domain.WIKI, bsg_tools)
    assert parse.reason is RejectReason.PARSE_ERROR


def test_wiki_needs_tools():
    with pytest.raises(ValueError):
        verify_record(BIG_STONE_GAP_TRACE, BSG_GOLD, Domain.WIKI)


def test_stats():
    results = [
        VerificationResult("a", Verdict.ACCEPT, steps=1),
        VerificationResult("b", Verdict.ACCEPT, steps=2),
        VerificationResult("c", Verdict.ACCEPT, steps=2),
        VerificationResult.reject("d", RejectReason.SOLVE_ERROR, steps=7),
    ]
    stats = verification_stats(results)
    assert (stats.total, stats.accepted, stats.acceptance_rate) == (4, 3, 0.75)
    assert stats.rejections == {"SolveError": 1}
    assert stats.rejection_rates == {"SolveError": 0.25}
    assert list(stats.by_steps) == ["1", "2", ">5"]
    assert stats.by_steps["2"].rate == 1.0
    assert stats.by_steps[">5"].rate == 0.0


def test_stats_on_empty_stream():
    stats = verification_stats([])
    assert stats.total == 0
    assert stats.acceptance_rate is None
    assert stats.by_steps == {}
