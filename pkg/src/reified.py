"""
ReifiedTrace: a trace with its placeholders bound by domain tools.
Shared by the math and wiki reifiers, the verifier and the pipeline.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Tuple

from .errors import CoAError
from .trace_dsl import Domain, Placeholder, Trace, render_binding


@dataclass
class ReifiedTrace:
    """Result of reifying one trace. ``status`` is ``"failed"`` when a tool step
    raised; bindings made before the failure are kept for diagnostics."""

    trace: Trace
    bindings: Dict[Placeholder, Any] = field(default_factory=dict)
    final_answer: Optional[str] = None
    answer_value: Optional[Fraction] = None
    reified_text: Optional[str] = None
    tool_latencies: List[Tuple[str, float]] = field(default_factory=list)
    tool_calls: int = 0
    trace_id: str = ""
    error: Optional[CoAError] = None

    @property
    def status(self) -> str:
        return "failed" if self.error is not None else "ok"

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def domain(self) -> Domain:
        return self.trace.domain

    def fail(self, error: CoAError) -> "ReifiedTrace":
        self.error = error
        return self

    def to_record(self, context: Optional[str] = None) -> Dict[str, Any]:
        """JSONL output record for the trace's domain."""
        if self.domain is Domain.MATH:
            record: Dict[str, Any] = {
                "id": self.trace_id,
                "status": self.status,
                "reified_text": self.reified_text,
                "bindings": {
                    str(p): render_binding(v) for p, v in sorted(self.bindings.items())
                },
                "final_answer": self.final_answer,
            }
        else:
            record = {
                "id": self.trace_id,
                "status": self.status,
                "bindings": [
                    binding.to_record() for _, binding in sorted(self.bindings.items())
                ],
                "context": context if context is not None else "",
            }
        if self.error is not None:
            record["error"] = self.error.to_dict()
        return record
