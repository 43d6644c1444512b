"""
Keep/discard checks for rewritten CoA training data.

A math candidate is kept when it reifies to the gold final number. A wiki
candidate is kept when every WikiSearch step lands on one of the gold article
titles. Every failure becomes a rejection with exactly one reason.
"""

import logging
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

from pydantic import BaseModel, Field

from .errors import (
    CoAError,
    CyclicDependency,
    DuplicateDefinition,
    NoSearchResult,
    PlanStructureError,
    SolveError,
    TraceStructureError,
    TraceSyntaxError,
    UnboundPlaceholder,
)
from .evaluation import BUCKETS, GoldRecord, count_steps, step_bucket
from .math_reify import extract_system, reify_math, solve
from .trace_dsl import Domain, Placeholder, Trace, WikiOp, check_structure, parse_trace, render_value, scan_trace
from .wiki_reify import ArticleResult, PlanExecutor, WikiTools, classify_plan

logger = logging.getLogger(__name__)


class Verdict(str, Enum):
    ACCEPT = "Accept"
    REJECT = "Reject"


class RejectReason(str, Enum):
    PARSE_ERROR = "ParseError"
    SOLVE_ERROR = "SolveError"
    ANSWER_MISMATCH = "AnswerMismatch"
    TITLE_MISMATCH = "TitleMismatch"
    STRUCTURE_ERROR = "StructureError"


@dataclass
class VerificationResult:
    id: str
    verdict: Verdict
    reason: Optional[RejectReason] = None
    step: Optional[int] = None
    detail: Optional[Dict[str, Any]] = None
    steps: int = 0
    domain: Domain = Domain.MATH
    plan_kind: Optional[str] = None
    final_answer: Optional[str] = None
    warnings: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def accepted(self) -> bool:
        return self.verdict is Verdict.ACCEPT

    @property
    def cyclic(self) -> bool:
        return bool(self.detail) and self.detail.get("code") == CyclicDependency.code

    @classmethod
    def reject(cls, item_id: str, reason: RejectReason, error: Optional[CoAError] = None, **kwargs) -> "VerificationResult":
        return cls(item_id, Verdict.REJECT, reason, detail=error.to_dict() if error else None, **kwargs)

    def to_record(self) -> Dict[str, Any]:
        record: Dict[str, Any] = {"id": self.id, "verdict": self.verdict.value, "steps": self.steps}
        if self.reason is not None:
            record["reason"] = self.reason.value
        if self.step is not None:
            record["step"] = self.step
        if self.detail:
            record["detail"] = self.detail
        if self.plan_kind is not None:
            record["plan_kind"] = self.plan_kind
        if self.final_answer is not None:
            record["final_answer"] = self.final_answer
        if self.warnings:
            record["warnings"] = self.warnings
        return record


@dataclass(frozen=True)
class CoincidentValueWarning:
    """Distinct placeholders that solve to the same value without being unified."""

    placeholders: tuple
    value: Fraction

    code = "CoincidentValueWarning"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "code": self.code,
            "placeholders": [str(p) for p in self.placeholders],
            "value": render_value(self.value),
        }


StructureViolation = Union[TraceSyntaxError, TraceStructureError, CoincidentValueWarning]


def normalize_title(title: str) -> str:
    """NFC, case fold, collapsed whitespace."""
    return " ".join(unicodedata.normalize("NFC", title).casefold().split())


def _parse(candidate: str, domain: Domain, item_id: str, steps: int):
    """Trace, or the rejection for a candidate that cannot be parsed."""
    if not candidate or not candidate.strip():
        return None, VerificationResult.reject(
            item_id, RejectReason.PARSE_ERROR, CoAError("Empty candidate"), steps=steps, domain=domain
        )
    try:
        return parse_trace(candidate, domain), None
    except TraceSyntaxError as exc:
        return None, VerificationResult.reject(item_id, RejectReason.PARSE_ERROR, exc, steps=steps, domain=domain)
    except TraceStructureError as exc:
        return None, VerificationResult.reject(item_id, RejectReason.STRUCTURE_ERROR, exc, steps=steps, domain=domain)


def verify_math(candidate: str, gold: GoldRecord) -> VerificationResult:
    """Parse, reify and compare the final answer to the gold number exactly."""
    steps = count_steps(candidate, Domain.MATH)
    trace, rejected = _parse(candidate, Domain.MATH, gold.id, steps)
    if rejected:
        return rejected
    try:
        reified = reify_math(trace, gold.id)
    except (SolveError, UnboundPlaceholder) as exc:
        return VerificationResult.reject(gold.id, RejectReason.SOLVE_ERROR, exc, steps=steps)

    expected = gold.gold_final_number
    if expected is None or reified.answer_value != expected:
        return VerificationResult(
            gold.id,
            Verdict.REJECT,
            RejectReason.ANSWER_MISMATCH,
            detail={
                "code": RejectReason.ANSWER_MISMATCH.value,
                "expected": render_value(expected) if expected is not None else None,
                "actual": reified.final_answer,
            },
            steps=steps,
            final_answer=reified.final_answer,
        )
    return VerificationResult(gold.id, Verdict.ACCEPT, steps=steps, final_answer=reified.final_answer)


def verify_wiki(
    candidate: str,
    gold: GoldRecord,
    tools: WikiTools,
    match_any_topk: bool = False,
) -> VerificationResult:
    """Run the plan and check each WikiSearch result against the gold titles.

    With ``match_any_topk`` a step passes when any of its BM25 top-k titles is a
    gold title, not only the reranked top-1.
    """
    steps = count_steps(candidate, Domain.WIKI)
    trace, rejected = _parse(candidate, Domain.WIKI, gold.id, steps)
    if rejected:
        return rejected
    kind = classify_plan(trace).value

    reified = PlanExecutor(trace, tools, gold.question, gold.id).run()
    if not reified.ok:
        error = reified.error
        if isinstance(error, NoSearchResult):
            reason = RejectReason.TITLE_MISMATCH
        elif isinstance(error, PlanStructureError):
            reason = RejectReason.STRUCTURE_ERROR
        else:
            reason = RejectReason.SOLVE_ERROR
        return VerificationResult.reject(
            gold.id, reason, error, step=error.step, steps=steps, domain=Domain.WIKI, plan_kind=kind
        )

    allowed = {normalize_title(t) for t in gold.gold_titles}
    for position, op in enumerate(trace.operations, 1):
        if not isinstance(op, WikiOp):
            continue
        binding: ArticleResult = reified.bindings[op.defines]
        titles = binding.candidates if match_any_topk else (binding.article.title,)
        if not any(normalize_title(t) in allowed for t in titles):
            return VerificationResult(
                gold.id,
                Verdict.REJECT,
                RejectReason.TITLE_MISMATCH,
                step=position,
                detail={"code": RejectReason.TITLE_MISMATCH.value, "title": binding.article.title},
                steps=steps,
                domain=Domain.WIKI,
                plan_kind=kind,
            )
    return VerificationResult(gold.id, Verdict.ACCEPT, steps=steps, domain=Domain.WIKI, plan_kind=kind)


def check_single_assignment(trace: Union[Trace, str], domain: Domain = Domain.MATH) -> List[StructureViolation]:
    """Duplicate definitions, plus (math) placeholders that solve to equal values.

    Accepts a scanned trace or raw text, so traces that ``parse_trace`` would
    reject can still be inspected. Raw text that cannot be segmented yields its
    syntax error as the only violation.
    """
    if isinstance(trace, str):
        try:
            trace, _ = scan_trace(trace, domain)
        except TraceSyntaxError as exc:
            return [exc]
    violations: List[StructureViolation] = [
        v for v in check_structure(trace.segments) if isinstance(v, DuplicateDefinition)
    ]
    if violations or trace.domain is not Domain.MATH or not trace.derivations:
        return violations
    try:
        values = solve(extract_system(trace))
    except CoAError:
        return violations

    groups: Dict[Fraction, List[Placeholder]] = {}
    for placeholder, value in values.items():
        groups.setdefault(value, []).append(placeholder)
    coincident = [CoincidentValueWarning(tuple(sorted(group)), value) for value, group in groups.items() if len(group) > 1]
    violations.extend(sorted(coincident, key=lambda w: w.placeholders))
    return violations


def verify_record(
    candidate: str,
    gold: GoldRecord,
    domain: Domain,
    tools: Optional[WikiTools] = None,
    match_any_topk: bool = False,
) -> VerificationResult:
    """Dispatch on domain; math results also carry coincident-value warnings."""
    if Domain(domain) is Domain.WIKI:
        if tools is None:
            raise ValueError("Wiki verification needs retrieval tools")
        return verify_wiki(candidate, gold, tools, match_any_topk)
    result = verify_math(candidate, gold)
    if result.accepted:
        result.warnings = [w.to_dict() for w in check_single_assignment(candidate, Domain.MATH)]
    return result


# Statistics


class GroupStats(BaseModel):
    n: int = 0
    accepted: int = 0
    rate: Optional[float] = None


class StatsReport(BaseModel):
    total: int
    accepted: int
    acceptance_rate: Optional[float]
    rejections: Dict[str, int] = Field(default_factory=dict)
    rejection_rates: Dict[str, float] = Field(default_factory=dict)
    by_steps: Dict[str, GroupStats] = Field(default_factory=dict)
    by_plan_kind: Dict[str, GroupStats] = Field(default_factory=dict)
    cyclic_rejections: int = 0
    warnings: int = 0


def _rate(accepted: int, n: int) -> Optional[float]:
    return accepted / n if n else None


def verification_stats(results: Iterable[VerificationResult]) -> StatsReport:
    """Acceptance overall, per rejection reason, per step bucket and per plan kind."""
    total = accepted = cyclic = warnings = 0
    rejections: Dict[str, int] = {}
    by_steps: Dict[str, GroupStats] = {}
    by_kind: Dict[str, GroupStats] = {}
    for result in results:
        total += 1
        accepted += result.accepted
        warnings += len(result.warnings)
        if not result.accepted:
            rejections[result.reason.value] = rejections.get(result.reason.value, 0) + 1
            cyclic += result.cyclic
        groups: Sequence[GroupStats] = [by_steps.setdefault(step_bucket(result.steps), GroupStats())]
        if result.plan_kind is not None:
            groups = [*groups, by_kind.setdefault(result.plan_kind, GroupStats())]
        for group in groups:
            group.n += 1
            group.accepted += result.accepted
    for group in [*by_steps.values(), *by_kind.values()]:
        group.rate = _rate(group.accepted, group.n)

    return StatsReport(
        total=total,
        accepted=accepted,
        acceptance_rate=_rate(accepted, total),
        rejections=dict(sorted(rejections.items())),
        rejection_rates={k: v / total for k, v in sorted(rejections.items())},
        by_steps={b: by_steps[b] for b in BUCKETS if b in by_steps},
        by_plan_kind=dict(sorted(by_kind.items())),
        cyclic_rejections=cyclic,
        warnings=warnings,
    )
