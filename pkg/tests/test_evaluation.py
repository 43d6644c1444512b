import csv
import json
from fractions import Fraction

import pytest

from src.errors import EmptyList
from src.evaluation import (
    AnswerStyle,
    EvalRecord,
    GoldRecord,
    count_steps,
    evaluate_record,
    evaluate_records,
    exact_match,
    extract_math_answer,
    extract_text_answer,
    load_gold,
    load_predictions,
    majority_vote,
    normalize_text,
    stratify,
    summarize,
    write_outputs,
)
from src.trace_dsl import Domain
from tests.conftest import BIG_STONE_GAP_TRACE, FIGURE_TRACE

MATH_CASES = [
    ("The answer is 35.", Fraction(35)),
    ("So she has $1,200 left.", Fraction(1200)),
    ("It costs 4.5 dollars", Fraction(9, 2)),
    ("Temperature dropped to -7 degrees", Fraction(-7)),
    ("5 - 3 = 2", Fraction(2)),
    ("No numbers here", None),
    ("", None),
    ("He ran 3 laps, then 10 more. The answer is 13", Fraction(13)),
    ("The answer is 1,000,000.", Fraction(1000000)),
    ("about .5 of it", Fraction(1, 2)),
    ("value is 7 for item x2", Fraction(7)),
    ("5-3", Fraction(3)),
    ("The total is 12.50.", Fraction(25, 2)),
    ("−4", Fraction(-4)),
    ("down by −4 degrees", Fraction(-4)),
    ("Answer: 3, then.", Fraction(3)),
    ("The answer is 42!", Fraction(42)),
    ("$ 15", Fraction(15)),
    ("It is (-5)", Fraction(-5)),
    ("3 apples - 2 apples = 1 apple", Fraction(1)),
    ("The answer is 0", Fraction(0)),
    ("Profit: £300", Fraction(300)),
    ("20 + 35 = 55 apples", Fraction(55)),
    ("There were 1,234.5 units", Fraction(2469, 2)),
    ("Total = 7 + 8 = 15", Fraction(15)),
    ("The scores were 3,4", Fraction(4)),
    ("Options 1,2,3", Fraction(3)),
    ("1,234", Fraction(1234)),
    ("It's 3.14159", Fraction(314159, 100000)),
    ("a 2-year old", Fraction(2)),
    ("The answer is 16. Hope this helps!", Fraction(16)),
    ("€5 and then 6%", Fraction(6)),
    ("-$5", Fraction(-5)),
    ("Bob has 3 cats and 4 dogs.", Fraction(4)),
    ("Each costs $0.75", Fraction(3, 4)),
    ("10,000 people", Fraction(10000)),
    ("ratio 3:2", Fraction(2)),
]

TEXT_CASES = [
    ("The answer is Greenwich Village.", AnswerStyle.ANSWER_IS, "Greenwich Village"),
    ("So the answer is yes.", AnswerStyle.ANSWER_IS, None),
    ("The answer is World War II.\nMore text", AnswerStyle.ANSWER_IS, "World War II"),
    ("Nothing", AnswerStyle.ANSWER_IS, None),
    ("The answer is ", AnswerStyle.ANSWER_IS, None),
    ("The answer is A. The answer is B.", AnswerStyle.ANSWER_IS, "B"),
    ("The answer is 25 June 1961.", AnswerStyle.ANSWER_IS, "25 June 1961"),
    ("The answer is Sri Lanka!?", AnswerStyle.ANSWER_IS, "Sri Lanka"),
    ("The answer is  New York City . ", AnswerStyle.ANSWER_IS, "New York City"),
    ("I think. The answer is The Family Man.", AnswerStyle.ANSWER_IS, "The Family Man"),
    ("The answer is: yes", AnswerStyle.ANSWER_IS, None),
    ("Action: finish[Jonathan Stark]", AnswerStyle.FIREACT_FINISH, "Jonathan Stark"),
    ("Action: finish[a [b] c] trailing", AnswerStyle.FIREACT_FINISH, "a [b] c"),
    ("Action: finish[truncated", AnswerStyle.FIREACT_FINISH, "truncated"),
    ("Action: search[x]", AnswerStyle.FIREACT_FINISH, None),
    ("Action: finish[one] Action: finish[two]", AnswerStyle.FIREACT_FINISH, "two"),
    ("Action: finish[]", AnswerStyle.FIREACT_FINISH, None),
]


@pytest.mark.parametrize("text,expected", MATH_CASES)
def test_extract_math_answer(text, expected):
    assert extract_math_answer(text) == expected


@pytest.mark.parametrize("text,style,expected", TEXT_CASES)
def test_extract_text_answer(text, style, expected):
    assert extract_text_answer(text, style) == expected


def test_extraction_table_size():
    assert len(MATH_CASES) + len(TEXT_CASES) >= 50


def test_normalize_and_match():
    assert normalize_text("  Greenwich   Village. ") == "greenwich village"
    assert exact_match("Greenwich Village", "greenwich  village.", Domain.WIKI)
    assert exact_match("Te\u0301a Leoni", "T\u00e9a Leoni", Domain.WIKI)
    assert exact_match(Fraction(7, 2), "The answer is 3.5", Domain.MATH)
    assert exact_match("3.50", "3.5", Domain.MATH)
    assert not exact_match(None, "x", Domain.WIKI)
    assert not exact_match("x", None, Domain.MATH)
    assert not exact_match("no digits", "4", Domain.MATH)


def test_count_steps():
    assert count_steps(FIGURE_TRACE, Domain.MATH) == 2
    assert count_steps("First 2 + 3 = 5. Then 5 * 2 = 10. Done.", Domain.MATH) == 2
    assert count_steps("Total = 7 + 8 = 15. That is all.", Domain.MATH) == 1
    assert count_steps(BIG_STONE_GAP_TRACE, Domain.WIKI) == 2
    assert count_steps("Action: search[a]\nAction: search[b]", Domain.WIKI) == 2
    assert count_steps("", Domain.MATH) == 0


def test_majority_vote():
    assert majority_vote(["a", "b", "a"]) == "a"
    assert majority_vote(["b", "a"]) == "b"
    assert majority_vote([None, None]) is None
    assert majority_vote([None, "x"]) == "x"
    assert majority_vote(["Sri Lanka", "sri lanka.", "India"]) == "Sri Lanka"
    assert majority_vote([Fraction(1, 2), Fraction(3), Fraction(1, 2)], Domain.MATH) == Fraction(1, 2)
    with pytest.raises(EmptyList):
        majority_vote([])


def test_evaluate_record_votes_over_samples():
    gold = GoldRecord(id="m", gold_answer="The answer is 5.", gold_steps=1)
    record = evaluate_record("m", ["The answer is 6", "The answer is 5", "The answer is 5."], gold, Domain.MATH)
    assert record.match
    assert record.extracted_answer == Fraction(5)
    assert record.prediction_text == "The answer is 5"
    assert record.samples == 3
    assert record.to_row()["extracted_answer"] == "5"


def test_wiki_gold_phrased_as_answer_statement():
    gold = GoldRecord(id="w", gold_answer="The answer is Greenwich Village.", gold_trace=BIG_STONE_GAP_TRACE)
    record = evaluate_record("w", ["The answer is greenwich village"], gold, Domain.WIKI)
    assert record.match
    assert record.gold_steps == 2


def test_evaluate_bundled_golds(math_rows, wiki_rows):
    for domain, rows in ((Domain.MATH, math_rows), (Domain.WIKI, wiki_rows)):
        golds = {row["id"]: GoldRecord.model_validate(row) for row in rows}
        predictions = {row["id"]: [row["gold_answer"]] for row in rows}
        records = evaluate_records(predictions, golds, domain)
        assert all(r.match for r in records)


def test_missing_prediction_counts_as_wrong():
    golds = {"a": GoldRecord(id="a", gold_answer="1"), "b": GoldRecord(id="b", gold_answer="2")}
    records = evaluate_records({"a": ["1"]}, golds, Domain.MATH)
    assert [(r.id, r.match, r.samples) for r in records] == [("a", True, 1), ("b", False, 0)]


def _records(predicted: int, gold: int, count: int, correct: int):
    return [
        EvalRecord(f"{predicted}-{gold}-{i}", "", None, "", i < correct, predicted, gold)
        for i in range(count)
    ]


def test_stratify_masks_small_off_diagonal_cells():
    records = _records(2, 3, 14, 7) + _records(1, 2, 15, 5) + _records(2, 2, 3, 3) + _records(7, 9, 1, 1)
    table = stratify(records, min_cell=15)
    assert table.cells[("2", "3")].count == 14
    assert table.accuracy("2", "3") is None
    assert table.accuracy("1", "2") == pytest.approx(1 / 3)
    assert table.accuracy("2", "2") == 1.0
    assert table.accuracy(">5", ">5") == 1.0
    assert table.accuracy("0", "0") is None
    assert table.total == 33
    assert [(r["predicted_bucket"], r["gold_bucket"]) for r in table.rows()] == [
        ("1", "2"),
        ("2", "2"),
        ("2", "3"),
        (">5", ">5"),
    ]

    summary = summarize(records, table, Domain.MATH)
    assert (summary.n, summary.correct, summary.masked_cells) == (33, 16, 1)
    assert [b.bucket for b in summary.buckets] == ["2", "3", ">5"]


def test_stratify_rejects_negative_threshold():
    with pytest.raises(ValueError):
        stratify([], min_cell=-1)


def test_summary_of_nothing():
    summary = summarize([], stratify([]), Domain.WIKI)
    assert summary.accuracy is None
    assert summary.samples_per_question == 0.0


def test_load_gold_and_predictions(tmp_path):
    gold_path = tmp_path / "gold.jsonl"
    gold_path.write_text(json.dumps({"id": 7, "gold_answer": "The answer is 3."}) + "\n", encoding="utf-8")
    golds = load_gold(gold_path)
    assert golds["7"].gold_final_number == 3

    pred_path = tmp_path / "pred.jsonl"
    rows = [{"id": "a", "output": "x"}, {"id": "a", "output": "y"}, {"id": "b", "output": ["p", "q"]}]
    pred_path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    assert load_predictions(pred_path) == {"a": ["x", "y"], "b": ["p", "q"]}


def test_write_outputs(tmp_path):
    records = _records(1, 1, 4, 3)
    table = stratify(records)
    paths = write_outputs(tmp_path, summarize(records, table, Domain.MATH), table)
    assert [p.name for p in paths] == ["summary.json", "buckets.csv", "heatmap.csv"]
    assert json.loads(paths[0].read_text(encoding="utf-8"))["accuracy"] == 0.75
    with paths[2].open(encoding="utf-8") as handle:
        (row,) = list(csv.DictReader(handle))
    assert row == {"predicted_bucket": "1", "gold_bucket": "1", "count": "4", "accuracy": "0.75"}
