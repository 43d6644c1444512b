"""
Answer extraction, exact-match scoring, reasoning-step stratification and
self-consistency voting.

Math answers are the last number in the output, compared as exact rationals.
Wiki answers are the words after the last "The answer is " (or inside
"Action: finish[...]"), compared after case folding, whitespace collapsing and
trimming punctuation.
"""

import logging
import re
import string
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, Field

from .errors import EmptyList
from .jsonl import iter_jsonl, write_csv, write_json
from .trace_dsl import Domain, render_value

logger = logging.getLogger(__name__)

Answer = Union[str, Fraction, None]

BUCKETS = ("0", "1", "2", "3", "4", "5", ">5")

STEP_COUNT_NOTE = (
    "CoA outputs count bracketed derivations or WikiSearch steps; plain "
    "chain-of-thought outputs count sentences containing ' = ', an approximation"
)

_NUMBER = re.compile(
    r"(?:(?<![\w)])(?P<sign>[-−])\s?)?[$€£]?\s?(?<![A-Za-z_\d])(?P<num>(?:\d{1,3}(?:,\d{3})+(?!\d)|\d+)(?:\.\d+)?|\.\d+)"
)
_ANSWER_IS = "The answer is "
_FINISH = "Action: finish["
_BRACKET_DERIVATION = re.compile(r"\[[^\[\]]*=\s*y[1-9][0-9]*\s*\]")
_WIKI_STEP = re.compile(r"-Wiki->|Action: search\[", re.IGNORECASE)
_SENTENCE = re.compile(r"(?<=[.!?])\s+|\n+")
_TRIM = string.punctuation + "“”‘’«»" + string.whitespace


class AnswerStyle(str, Enum):
    ANSWER_IS = "answer_is"
    FIREACT_FINISH = "fireact_finish"


def extract_math_answer(text: str) -> Optional[Fraction]:
    """Last number in ``text`` as an exact rational; currency and thousands separators are dropped.

    A comma only joins digits when groups of exactly three follow it, so ``3,4`` reads as two numbers.
    """
    matches = list(_NUMBER.finditer(text or ""))
    if not matches:
        return None
    last = matches[-1]
    digits = last.group("num").replace(",", "").rstrip(".")
    if not digits or digits == ".":
        return None
    value = Fraction(digits)
    return -value if last.group("sign") else value


def extract_text_answer(text: str, style: AnswerStyle = AnswerStyle.ANSWER_IS) -> Optional[str]:
    """Answer words after the last marker of ``style``; None when the marker is absent.

    An unclosed ``finish[`` (truncated generation) yields the rest of the text.
    """
    text = text or ""
    if AnswerStyle(style) is AnswerStyle.FIREACT_FINISH:
        start = text.rfind(_FINISH)
        if start < 0:
            return None
        body = text[start + len(_FINISH):]
        depth = 0
        for position, char in enumerate(body):
            if char == "[":
                depth += 1
            elif char == "]":
                if depth == 0:
                    body = body[:position]
                    break
                depth -= 1
        answer = body.strip()
        return answer or None

    start = text.rfind(_ANSWER_IS)
    if start < 0:
        return None
    answer = text[start + len(_ANSWER_IS):].split("\n", 1)[0]
    answer = answer.strip().rstrip(".!?;:").strip()
    return answer or None


def normalize_text(value: str) -> str:
    """NFC, case fold, collapse whitespace, trim surrounding punctuation."""
    value = unicodedata.normalize("NFC", value).casefold()
    value = " ".join(value.split())
    return value.strip(_TRIM)


def to_rational(value: Any) -> Optional[Fraction]:
    if value is None:
        return None
    if isinstance(value, (Fraction, int)):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(str(value))
    return extract_math_answer(str(value))


def exact_match(extracted: Answer, gold: Any, domain: Domain) -> bool:
    """Rational equality for math, normalised string equality for wiki."""
    if extracted is None or gold is None:
        return False
    if Domain(domain) is Domain.MATH:
        left, right = to_rational(extracted), to_rational(gold)
        return left is not None and right is not None and left == right
    return normalize_text(str(extracted)) == normalize_text(str(gold))


def count_steps(text: str, domain: Domain) -> int:
    """Reasoning steps in a trace or answer.

    Math: bracketed derivations when any are present, otherwise sentences
    containing `` = ``. Wiki: WikiSearch steps (or ``Action: search[`` calls).
    """
    if not text:
        return 0
    if Domain(domain) is Domain.WIKI:
        return len(_WIKI_STEP.findall(text))
    bracketed = len(_BRACKET_DERIVATION.findall(text))
    if bracketed:
        return bracketed
    return sum(1 for sentence in _SENTENCE.split(text) if " = " in sentence)


def step_bucket(steps: int) -> str:
    return str(steps) if steps <= 5 else ">5"


def answer_key(answer: Answer, domain: Domain) -> Any:
    """Equality key under the domain's matching rule."""
    if answer is None:
        return None
    if Domain(domain) is Domain.MATH:
        value = to_rational(answer)
        return value if value is not None else normalize_text(str(answer))
    return normalize_text(str(answer))


def majority_vote(answers: Sequence[Answer], domain: Domain = Domain.WIKI) -> Answer:
    """Most frequent answer; ties go to the one seen first. Absent answers only win
    when nothing else was extracted.

    Raises:
        EmptyList
    """
    if not answers:
        raise EmptyList("majority_vote needs at least one answer")
    present = [a for a in answers if a is not None]
    if not present:
        return None
    counts: Counter = Counter()
    first: Dict[Any, Tuple[int, Answer]] = {}
    for position, answer in enumerate(present):
        key = answer_key(answer, domain)
        counts[key] += 1
        first.setdefault(key, (position, answer))
    key = min(counts, key=lambda k: (-counts[k], first[k][0]))
    return first[key][1]


# Records


class GoldRecord(BaseModel):
    """One gold question. Math golds carry a final number, wiki golds the titles
    of their supporting articles."""

    id: str
    question: str = ""
    gold_answer: str = ""
    gold_titles: List[str] = Field(default_factory=list)
    gold_steps: Optional[int] = None
    gold_trace: Optional[str] = None

    @property
    def gold_final_number(self) -> Optional[Fraction]:
        return extract_math_answer(self.gold_answer)

    def steps(self, domain: Domain) -> int:
        if self.gold_steps is not None:
            return self.gold_steps
        return count_steps(self.gold_trace or self.gold_answer, domain)


def load_gold(path: Path) -> Dict[str, GoldRecord]:
    golds: Dict[str, GoldRecord] = {}
    for row in iter_jsonl(Path(path)):
        record = GoldRecord.model_validate({**row, "id": str(row.get("id", ""))})
        golds[record.id] = record
    return golds


def load_predictions(path: Path) -> Dict[str, List[str]]:
    """``id -> outputs``. Repeated ids and list-valued ``output`` fields are samples."""
    predictions: Dict[str, List[str]] = {}
    for row in iter_jsonl(Path(path)):
        output = row.get("output", "")
        outputs = [str(o) for o in output] if isinstance(output, list) else [str(output)]
        predictions.setdefault(str(row.get("id", "")), []).extend(outputs)
    return predictions


@dataclass
class EvalRecord:
    id: str
    prediction_text: str
    extracted_answer: Answer
    gold_answer: str
    match: bool
    predicted_steps: int
    gold_steps: int
    samples: int = 1

    def to_row(self) -> Dict[str, Any]:
        extracted = self.extracted_answer
        if isinstance(extracted, Fraction):
            extracted = render_value(extracted)
        return {
            "id": self.id,
            "extracted_answer": extracted,
            "gold_answer": self.gold_answer,
            "match": self.match,
            "predicted_steps": self.predicted_steps,
            "gold_steps": self.gold_steps,
            "samples": self.samples,
        }


def extract_answer(text: str, domain: Domain, style: AnswerStyle = AnswerStyle.ANSWER_IS) -> Answer:
    if Domain(domain) is Domain.MATH:
        return extract_math_answer(text)
    return extract_text_answer(text, style)


def evaluate_record(
    item_id: str,
    outputs: Sequence[str],
    gold: GoldRecord,
    domain: Domain,
    style: AnswerStyle = AnswerStyle.ANSWER_IS,
) -> EvalRecord:
    """Score one question; several outputs are majority-voted first."""
    extracted = [extract_answer(o, domain, style) for o in outputs] or [None]
    winner = majority_vote(extracted, domain)
    key = answer_key(winner, domain)
    text = next((o for o, a in zip(outputs, extracted) if answer_key(a, domain) == key), outputs[0] if outputs else "")
    gold_answer = gold.gold_answer
    if Domain(domain) is Domain.WIKI:
        # gold answers may themselves be phrased "The answer is X."
        gold_answer = extract_text_answer(gold_answer) or gold_answer
    return EvalRecord(
        id=item_id,
        prediction_text=text,
        extracted_answer=winner,
        gold_answer=gold.gold_answer,
        match=exact_match(winner, gold_answer, domain),
        predicted_steps=count_steps(text, domain),
        gold_steps=gold.steps(domain),
        samples=len(outputs),
    )


def evaluate_records(
    predictions: Mapping[str, Sequence[str]],
    golds: Mapping[str, GoldRecord],
    domain: Domain,
    style: AnswerStyle = AnswerStyle.ANSWER_IS,
) -> List[EvalRecord]:
    """One record per gold id, in gold order. Missing predictions count as wrong."""
    records = []
    missing = 0
    for item_id, gold in golds.items():
        outputs = list(predictions.get(item_id, ()))
        missing += not outputs
        records.append(evaluate_record(item_id, outputs, gold, domain, style))
    if missing:
        logger.warning("%d gold ids have no prediction", missing)
    return records


# Stratification


@dataclass
class Cell:
    count: int = 0
    correct: int = 0
    masked: bool = False

    @property
    def accuracy(self) -> Optional[float]:
        if self.masked or self.count == 0:
            return None
        return self.correct / self.count


@dataclass
class StratifiedTable:
    """Accuracy by (predicted steps bucket, gold steps bucket)."""

    cells: Dict[Tuple[str, str], Cell] = field(default_factory=dict)
    min_cell: int = 15

    @property
    def total(self) -> int:
        return sum(cell.count for cell in self.cells.values())

    def accuracy(self, predicted: str, gold: str) -> Optional[float]:
        cell = self.cells.get((predicted, gold))
        return cell.accuracy if cell else None

    def rows(self) -> List[Dict[str, Any]]:
        order = {b: i for i, b in enumerate(BUCKETS)}
        return [
            {
                "predicted_bucket": predicted,
                "gold_bucket": gold,
                "count": cell.count,
                "accuracy": cell.accuracy,
            }
            for (predicted, gold), cell in sorted(self.cells.items(), key=lambda kv: (order[kv[0][0]], order[kv[0][1]]))
        ]


def stratify(records: Iterable[EvalRecord], min_cell: int = 15) -> StratifiedTable:
    """Bucket records by predicted and gold step counts.

    Off-diagonal cells with fewer than ``min_cell`` records keep their count but
    report no accuracy.
    """
    if min_cell < 0:
        raise ValueError("min_cell must be non-negative")
    table = StratifiedTable(min_cell=min_cell)
    for record in records:
        key = (step_bucket(record.predicted_steps), step_bucket(record.gold_steps))
        cell = table.cells.setdefault(key, Cell())
        cell.count += 1
        cell.correct += bool(record.match)
    for (predicted, gold), cell in table.cells.items():
        cell.masked = predicted != gold and cell.count < min_cell
    return table


class BucketSummary(BaseModel):
    bucket: str
    gold_steps: float
    n: int
    accuracy: float


class EvalSummary(BaseModel):
    domain: str
    n: int
    correct: int
    accuracy: Optional[float]
    samples_per_question: float
    masked_cells: int
    min_cell: int
    buckets: List[BucketSummary]
    step_count_note: str = STEP_COUNT_NOTE


def bucket_summaries(records: Sequence[EvalRecord]) -> List[BucketSummary]:
    grouped: Dict[str, List[EvalRecord]] = {}
    for record in records:
        grouped.setdefault(step_bucket(record.gold_steps), []).append(record)
    return [
        BucketSummary(
            bucket=bucket,
            gold_steps=sum(r.gold_steps for r in grouped[bucket]) / len(grouped[bucket]),
            n=len(grouped[bucket]),
            accuracy=sum(r.match for r in grouped[bucket]) / len(grouped[bucket]),
        )
        for bucket in BUCKETS
        if bucket in grouped
    ]


def summarize(records: Sequence[EvalRecord], table: StratifiedTable, domain: Domain) -> EvalSummary:
    n = len(records)
    correct = sum(r.match for r in records)
    return EvalSummary(
        domain=Domain(domain).value,
        n=n,
        correct=correct,
        accuracy=(correct / n) if n else None,
        samples_per_question=(sum(r.samples for r in records) / n) if n else 0.0,
        masked_cells=sum(cell.masked for cell in table.cells.values()),
        min_cell=table.min_cell,
        buckets=bucket_summaries(records),
    )


def write_outputs(out_dir: Path, summary: EvalSummary, table: StratifiedTable) -> List[Path]:
    """``summary.json``, ``buckets.csv`` and ``heatmap.csv`` under ``out_dir``."""
    out_dir = Path(out_dir)
    paths = [out_dir / "summary.json", out_dir / "buckets.csv", out_dir / "heatmap.csv"]
    write_json(paths[0], summary.model_dump(mode="json"))
    write_csv(paths[1], (b.model_dump() for b in summary.buckets), ["bucket", "gold_steps", "n", "accuracy"])
    write_csv(paths[2], table.rows(), ["predicted_bucket", "gold_bucket", "count", "accuracy"])
    return paths
