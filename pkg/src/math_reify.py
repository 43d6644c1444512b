"""
Equation-system reification for math traces.

Derivations are collected into an ``EquationSystem`` and solved by forward
evaluation in topological order with exact rationals. Systems that are not
forward-evaluable (cycles) are rejected rather than solved simultaneously.
"""

import logging
import re
import time
from dataclasses import dataclass, field
from fractions import Fraction
from graphlib import CycleError, TopologicalSorter
from typing import Dict, FrozenSet, Iterable, List, Optional

from .errors import (
    CyclicDependency,
    DivisionByZero,
    NoFinalAnswer,
    Redefinition,
    UnboundPlaceholder,
)
from .reified import ReifiedTrace
from .trace_dsl import (
    BinOp,
    Derivation,
    Expr,
    Neg,
    Num,
    Placeholder,
    Ref,
    Text,
    Trace,
    render_value,
    substitute,
)

logger = logging.getLogger(__name__)

_ANSWER_REF = re.compile(r"answer is\s*\$?\s*(y[1-9][0-9]*)(?![A-Za-z0-9_])", re.IGNORECASE)

__all__ = [
    "Derivation",
    "EquationSystem",
    "extract_system",
    "solve",
    "evaluate",
    "reify_math",
    "render_value",
]


@dataclass(frozen=True)
class EquationSystem:
    """Ordered derivations plus the result -> operands dependency graph."""

    derivations: tuple
    dep_graph: Dict[Placeholder, FrozenSet[Placeholder]] = field(compare=False)

    @classmethod
    def from_derivations(cls, derivations: Iterable[Derivation]) -> "EquationSystem":
        """Build and validate a system.

        Raises:
            Redefinition: a placeholder is the result of two derivations.
            CyclicDependency: some derivation depends on itself, directly or not.
        """
        derivations = tuple(derivations)
        graph: Dict[Placeholder, FrozenSet[Placeholder]] = {}
        for derivation in derivations:
            if derivation.result in graph:
                raise Redefinition(f"{derivation.result} is defined more than once", placeholder=str(derivation.result))
            graph[derivation.result] = frozenset(derivation.operands)
        system = cls(derivations, graph)
        system.order()
        return system

    @property
    def defined(self) -> List[Placeholder]:
        return [d.result for d in self.derivations]

    def order(self) -> List[Placeholder]:
        """Defined placeholders in an evaluation order."""
        sorter = TopologicalSorter({r: ops & self.dep_graph.keys() for r, ops in self.dep_graph.items()})
        try:
            return list(sorter.static_order())
        except CycleError as exc:
            raise CyclicDependency([str(p) for p in exc.args[1]]) from None

    def __len__(self) -> int:
        return len(self.derivations)


def extract_system(trace: Trace) -> EquationSystem:
    """Collect a math trace's derivations, in trace order, into an equation system."""
    return EquationSystem.from_derivations(trace.derivations)


def evaluate(expr: Expr, values: Dict[Placeholder, Fraction], derivation: Optional[Derivation] = None) -> Fraction:
    """Exact value of an expression under ``values``."""
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Ref):
        try:
            return values[expr.placeholder]
        except KeyError:
            raise UnboundPlaceholder([expr.placeholder.index]) from None
    if isinstance(expr, Neg):
        return -evaluate(expr.operand, values, derivation)
    left = evaluate(expr.left, values, derivation)
    right = evaluate(expr.right, values, derivation)
    if expr.op == "+":
        return left + right
    if expr.op == "-":
        return left - right
    if expr.op == "*":
        return left * right
    if right == 0:
        where = derivation.render() if derivation is not None else expr.render()
        raise DivisionByZero(f"Division by zero in [{where}]", derivation=where)
    return left / right


def solve(system: EquationSystem) -> Dict[Placeholder, Fraction]:
    """Bind every defined placeholder by forward topological evaluation.

    Raises:
        CyclicDependency, DivisionByZero, UnboundPlaceholder (operand never defined)
    """
    by_result = {d.result: d for d in system.derivations}
    free = {op for ops in system.dep_graph.values() for op in ops} - by_result.keys()
    if free:
        raise UnboundPlaceholder([p.index for p in free])
    values: Dict[Placeholder, Fraction] = {}
    for placeholder in system.order():
        derivation = by_result[placeholder]
        values[placeholder] = evaluate(derivation.lhs, values, derivation)
    return values


def answer_placeholder(trace: Trace) -> Optional[Placeholder]:
    """Placeholder named by the trailing answer statement, else the last defined one."""
    for segment in reversed(trace.segments):
        if isinstance(segment, Text):
            matches = _ANSWER_REF.findall(segment.text)
            if matches:
                return Placeholder.parse(matches[-1])
    derivations = trace.derivations
    return derivations[-1].result if derivations else None


def reify_math(trace: Trace, trace_id: str = "") -> ReifiedTrace:
    """Solve a math trace and substitute the solved values.

    Raises:
        NoFinalAnswer: the trace has no derivations.
        CyclicDependency, Redefinition, DivisionByZero, UnboundPlaceholder
    """
    if not trace.derivations:
        raise NoFinalAnswer("Trace has no derivations to solve")
    reified = ReifiedTrace(trace=trace, trace_id=trace_id, tool_calls=1)

    started = time.perf_counter()
    system = extract_system(trace)
    values = solve(system)
    reified.tool_latencies.append(("solve", time.perf_counter() - started))
    reified.bindings = dict(values)

    reified.reified_text = substitute(trace, values)
    target = answer_placeholder(trace)
    if target not in values:
        raise UnboundPlaceholder([target.index])
    reified.answer_value = values[target]
    reified.final_answer = render_value(values[target])
    logger.debug("Reified %s: %d derivations, answer %s", trace_id or "trace", len(system), reified.final_answer)
    return reified
