"""
Error hierarchy for the CoA runtime.

Every error carries a stable ``code`` and serialises to a JSON diagnostic via
``to_dict()``. Record-level loops (reify, verify, pipeline) catch ``CoAError``
and attach the diagnostic to the failing record instead of aborting the run.
"""

from typing import Any, Dict, List, Optional, Sequence


class CoAError(Exception):
    """Base class for all runtime errors."""

    code = "CoAError"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        """JSON diagnostic for this error."""
        payload: Dict[str, Any] = {"code": self.code, "message": self.message}
        payload.update({k: v for k, v in self.details.items() if v is not None})
        return payload


class ConfigError(CoAError):
    code = "ConfigError"


# Trace parsing


class TraceSyntaxError(CoAError):
    """A bracketed span could not be read as an operation."""

    code = "ParseError"

    def __init__(self, message: str, start: int, end: Optional[int] = None):
        super().__init__(message, start=start, end=end)
        self.start = start
        self.end = end


class UnbalancedBracket(TraceSyntaxError):
    code = "UnbalancedBracket"


class MalformedOperation(TraceSyntaxError):
    code = "MalformedOperation"


class NestedOperation(MalformedOperation):
    code = "NestedOperation"


class TraceStructureError(CoAError):
    """Single-assignment or def-before-use violation."""

    code = "StructureError"

    def __init__(self, message: str, placeholder: str, start: int, end: int):
        super().__init__(message, placeholder=placeholder, start=start, end=end)
        self.placeholder = placeholder
        self.start = start
        self.end = end


class DuplicateDefinition(TraceStructureError):
    code = "DuplicateDefinition"


class UseBeforeDefinition(TraceStructureError):
    code = "UseBeforeDefinition"


class UnboundPlaceholder(CoAError):
    code = "UnboundPlaceholder"

    def __init__(self, missing: Sequence[int]):
        names = [f"y{i}" for i in sorted(missing)]
        super().__init__(f"Unbound placeholders: {', '.join(names)}", missing=names)
        self.missing = sorted(missing)


# Equation solving


class SolveError(CoAError):
    code = "SolveError"


class CyclicDependency(SolveError):
    code = "CyclicDependency"

    def __init__(self, cycle: List[str]):
        super().__init__(f"Cyclic dependency: {' -> '.join(cycle)}", cycle=cycle)
        self.cycle = cycle


class Redefinition(SolveError):
    code = "Redefinition"


class DivisionByZero(SolveError):
    code = "DivisionByZero"


class NoFinalAnswer(SolveError):
    code = "NoFinalAnswer"


# Corpus and index


class CorpusError(CoAError):
    code = "CorpusError"


class DuplicateArticleId(CorpusError):
    code = "DuplicateArticleId"


class EmptyCorpus(CorpusError):
    code = "EmptyCorpus"


class IndexFormatError(CorpusError):
    code = "IndexFormatError"


# Wiki plans


class PlanError(CoAError):
    code = "PlanError"

    def __init__(self, message: str, step: Optional[int] = None, **details: Any):
        super().__init__(message, step=step, **details)
        self.step = step


class NoSearchResult(PlanError):
    code = "NoSearchResult"


class NoEntityFound(PlanError):
    code = "NoEntityFound"


class PlanStructureError(PlanError):
    code = "PlanStructureError"


class EmptyCandidates(PlanError):
    code = "EmptyCandidates"


# Pipeline


class PipelineError(CoAError):
    code = "PipelineError"

    def __init__(self, message: str, item_id: str):
        super().__init__(message, item_id=item_id)
        self.item_id = item_id


class GeneratorFailure(PipelineError):
    code = "GeneratorFailure"


class ReifierFailure(PipelineError):
    code = "ReifierFailure"


class WorkloadMismatch(CoAError):
    code = "WorkloadMismatch"


class UnknownTool(CoAError):
    code = "UnknownTool"


# Evaluation


class EmptyList(CoAError):
    code = "EmptyList"
