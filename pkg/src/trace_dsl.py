"""
Chain-of-Abstraction trace grammar.

A trace is natural-language text with bracketed abstract operations:

    [20 + 35 = y1]                          math derivation
    [director of ... -Wiki-> y1]            Wikipedia search
    [y1 -NER(person)-> y2]                  entity extraction

``parse_trace`` turns text into an immutable ``Trace``; ``render_trace`` is its
inverse up to normalisation; ``substitute`` fills placeholders with values.
All offsets reported in diagnostics are UTF-8 byte offsets into the source.
"""

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Iterator, List, Mapping, Optional, Tuple, Union

from .errors import (
    DuplicateDefinition,
    MalformedOperation,
    NestedOperation,
    TraceStructureError,
    UnbalancedBracket,
    UnboundPlaceholder,
    UseBeforeDefinition,
)


class Domain(str, Enum):
    MATH = "math"
    WIKI = "wiki"


NER_CLASSES = ("person", "group", "location", "culture", "date", "numeral")

# "y" + index without leading zeros, not glued to other word characters
_PLACEHOLDER = re.compile(r"(?<![A-Za-z0-9_])y([1-9][0-9]*)(?![A-Za-z0-9_])")
_BRACKET = re.compile(r"[\[\]]")
_WIKI_OP = re.compile(r"^\s*(?P<query>\S.*?)\s*-Wiki->\s*y(?P<out>[1-9][0-9]*)\s*$", re.DOTALL)
_NER_OP = re.compile(
    r"^\s*y(?P<src>[1-9][0-9]*)\s*-NER\(\s*(?P<cls>[^()]*?)\s*\)->\s*y(?P<out>[1-9][0-9]*)\s*$"
)
_MATH_RESULT = re.compile(r"^\s*y(?P<out>[1-9][0-9]*)\s*$")
_EXPR_TOKEN = re.compile(
    r"\s*(?:(?P<num>[0-9]+(?:\.[0-9]+)?|\.[0-9]+)|(?P<ref>y[1-9][0-9]*)(?![A-Za-z0-9_])|(?P<op>[-+*/()]))"
)
_THOUSANDS = re.compile(r"(?<=\d),(?=\d{3}(?!\d))")
_CURRENCY = re.compile(r"[$€£¥]")
_UNICODE_OPS = str.maketrans({"×": "*", "÷": "/", "−": "-", "–": "-"})

MAX_EXPR_DEPTH = 200


@dataclass(frozen=True, order=True)
class Placeholder:
    """Abstract single-assignment variable ``y<index>``."""

    index: int

    def __post_init__(self):
        if self.index < 1:
            raise ValueError(f"Placeholder index must be positive, got {self.index}")

    @classmethod
    def parse(cls, name: str) -> "Placeholder":
        match = _PLACEHOLDER.fullmatch(name.strip())
        if not match:
            raise ValueError(f"Not a placeholder: {name!r}")
        return cls(int(match.group(1)))

    def __str__(self) -> str:
        return f"y{self.index}"


def render_value(value: Fraction) -> str:
    """Canonical rendering: integer, else exact terminating decimal, else ``p/q``."""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    den = value.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{value.numerator}/{value.denominator}"
    digits = max(twos, fives)
    scaled = abs(value.numerator) * 10**digits // value.denominator
    whole, frac = divmod(scaled, 10**digits)
    frac_text = str(frac).rjust(digits, "0").rstrip("0")
    sign = "-" if value < 0 else ""
    return f"{sign}{whole}.{frac_text}"


# Expression AST

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}


@dataclass(frozen=True)
class Num:
    value: Fraction

    precedence = 4

    def render(self) -> str:
        return render_value(self.value)


@dataclass(frozen=True)
class Ref:
    placeholder: Placeholder

    precedence = 4

    def render(self) -> str:
        return str(self.placeholder)


@dataclass(frozen=True)
class Neg:
    operand: "Expr"

    precedence = 3

    def render(self) -> str:
        inner = self.operand.render()
        if self.operand.precedence < self.precedence:
            inner = f"({inner})"
        return f"-{inner}"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"

    @property
    def precedence(self) -> int:
        return _PRECEDENCE[self.op]

    def render(self) -> str:
        left = self.left.render()
        if self.left.precedence < self.precedence:
            left = f"({left})"
        right = self.right.render()
        # right operand at equal precedence keeps its grouping
        if self.right.precedence <= self.precedence:
            right = f"({right})"
        return f"{left} {self.op} {right}"


Expr = Union[Num, Ref, Neg, BinOp]


def expr_refs(expr: Expr) -> List[Placeholder]:
    """Placeholders referenced by an expression, in left-to-right order."""
    if isinstance(expr, Ref):
        return [expr.placeholder]
    if isinstance(expr, Neg):
        return expr_refs(expr.operand)
    if isinstance(expr, BinOp):
        return expr_refs(expr.left) + expr_refs(expr.right)
    return []


class _ExprParser:
    """Recursive-descent parser over normalised derivation text."""

    def __init__(self, source: str, span: Tuple[int, int]):
        self.tokens = self._tokenize(source, span)
        self.pos = 0
        self.span = span
        self.depth = 0

    def _fail(self, message: str) -> MalformedOperation:
        return MalformedOperation(message, start=self.span[0], end=self.span[1])

    def _tokenize(self, source: str, span: Tuple[int, int]) -> List[Tuple[str, str]]:
        tokens = []
        pos = 0
        while pos < len(source):
            if source[pos:].strip() == "":
                break
            match = _EXPR_TOKEN.match(source, pos)
            if not match:
                raise MalformedOperation(
                    f"Unexpected character {source[pos:].lstrip()[:1]!r} in derivation",
                    start=span[0],
                    end=span[1],
                )
            kind = match.lastgroup
            tokens.append((kind, match.group(kind)))
            pos = match.end()
        return tokens

    def _peek(self) -> Optional[Tuple[str, str]]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _take(self) -> Tuple[str, str]:
        token = self._peek()
        if token is None:
            raise self._fail("Derivation ends unexpectedly")
        self.pos += 1
        return token

    def parse(self) -> Expr:
        if not self.tokens:
            raise self._fail("Derivation has an empty left-hand side")
        expr = self._expression()
        if self._peek() is not None:
            raise self._fail(f"Unexpected token {self._peek()[1]!r} in derivation")
        return expr

    def _expression(self) -> Expr:
        expr = self._term()
        while self._peek() in (("op", "+"), ("op", "-")):
            op = self._take()[1]
            expr = BinOp(op, expr, self._term())
        return expr

    def _term(self) -> Expr:
        expr = self._unary()
        while self._peek() in (("op", "*"), ("op", "/")):
            op = self._take()[1]
            expr = BinOp(op, expr, self._unary())
        return expr

    def _unary(self) -> Expr:
        self.depth += 1
        if self.depth > MAX_EXPR_DEPTH:
            raise self._fail("Derivation nests too deeply")
        try:
            if self._peek() == ("op", "-"):
                self._take()
                return Neg(self._unary())
            return self._atom()
        finally:
            self.depth -= 1

    def _atom(self) -> Expr:
        kind, text = self._take()
        if kind == "num":
            return Num(Fraction(text))
        if kind == "ref":
            return Ref(Placeholder(int(text[1:])))
        if text == "(":
            expr = self._expression()
            if self._take() != ("op", ")"):
                raise self._fail("Missing closing parenthesis")
            return expr
        raise self._fail(f"Unexpected token {text!r} in derivation")


def normalize_math_text(source: str) -> str:
    """Strip currency symbols and thousands separators; map unicode operators."""
    source = source.translate(_UNICODE_OPS)
    source = _CURRENCY.sub("", source)
    return _THOUSANDS.sub("", source)


def parse_expression(source: str) -> Expr:
    """Parse a standalone arithmetic expression."""
    return _ExprParser(normalize_math_text(source), (0, len(source.encode("utf-8")))).parse()


# Operations and segments


class StepKind(str, Enum):
    WIKI_SEARCH = "WikiSearch"
    NER = "Ner"


@dataclass(frozen=True)
class Derivation:
    """``[lhs = result]``: binds ``result`` to the value of ``lhs``."""

    lhs: Expr
    result: Placeholder

    @property
    def operands(self) -> List[Placeholder]:
        return expr_refs(self.lhs)

    def render(self) -> str:
        return f"{self.lhs.render()} = {self.result}"


@dataclass(frozen=True)
class ToolStep:
    """A WikiSearch or NER step. ``template`` is the query text (WikiSearch) or the
    source placeholder name (NER)."""

    kind: StepKind
    template: str
    output: Placeholder
    ner_class: Optional[str] = None

    @property
    def refs(self) -> List[Placeholder]:
        return [Placeholder(int(m.group(1))) for m in _PLACEHOLDER.finditer(self.template)]

    @property
    def source(self) -> Optional[Placeholder]:
        return Placeholder.parse(self.template) if self.kind is StepKind.NER else None

    def render(self) -> str:
        if self.kind is StepKind.NER:
            return f"{self.template} -NER({self.ner_class})-> {self.output}"
        return f"{self.template} -Wiki-> {self.output}"

    def fill(self, values: Mapping[Placeholder, str]) -> str:
        """Query text with every referenced placeholder replaced."""
        return _substitute_refs(self.template, values)


@dataclass(frozen=True)
class Text:
    text: str
    span: Tuple[int, int] = field(default=(0, 0), compare=False)

    @property
    def refs(self) -> List[Placeholder]:
        return [Placeholder(int(m.group(1))) for m in _PLACEHOLDER.finditer(self.text)]

    def render(self) -> str:
        return self.text


@dataclass(frozen=True)
class MathOp:
    derivation: Derivation
    span: Tuple[int, int] = field(default=(0, 0), compare=False)

    @property
    def defines(self) -> Placeholder:
        return self.derivation.result

    @property
    def refs(self) -> List[Placeholder]:
        return self.derivation.operands

    def render(self) -> str:
        return f"[{self.derivation.render()}]"


@dataclass(frozen=True)
class WikiOp:
    step: ToolStep
    span: Tuple[int, int] = field(default=(0, 0), compare=False)

    @property
    def defines(self) -> Placeholder:
        return self.step.output

    @property
    def refs(self) -> List[Placeholder]:
        return self.step.refs

    def render(self) -> str:
        return f"[{self.step.render()}]"


@dataclass(frozen=True)
class NerOp:
    step: ToolStep
    span: Tuple[int, int] = field(default=(0, 0), compare=False)

    @property
    def defines(self) -> Placeholder:
        return self.step.output

    @property
    def refs(self) -> List[Placeholder]:
        return self.step.refs

    def render(self) -> str:
        return f"[{self.step.render()}]"


Segment = Union[Text, MathOp, WikiOp, NerOp]
Operation = Union[MathOp, WikiOp, NerOp]


@dataclass(frozen=True)
class Trace:
    """Parsed trace: ordered segments plus defined/used placeholder sets."""

    segments: Tuple[Segment, ...]
    domain: Domain = field(default=Domain.MATH, compare=False)

    @property
    def operations(self) -> List[Operation]:
        return [s for s in self.segments if not isinstance(s, Text)]

    @property
    def defined(self) -> frozenset:
        return frozenset(op.defines for op in self.operations)

    @property
    def used(self) -> frozenset:
        return frozenset(ref for segment in self.segments for ref in segment.refs)

    @property
    def derivations(self) -> List[Derivation]:
        return [s.derivation for s in self.segments if isinstance(s, MathOp)]

    @property
    def steps(self) -> List[ToolStep]:
        return [s.step for s in self.segments if isinstance(s, (WikiOp, NerOp))]


class _ByteOffsets:
    """Character index -> UTF-8 byte offset."""

    def __init__(self, text: str):
        self.text = text
        self.ascii = text.isascii()

    def __call__(self, index: int) -> int:
        if self.ascii:
            return index
        return len(self.text[:index].encode("utf-8"))


def _parse_operation(
    content: str, domain: Domain, span: Tuple[int, int]
) -> Optional[Operation]:
    """Parse bracket content; None when the span does not look like an operation."""
    looks_math = "=" in content
    looks_tool = "->" in content
    if not (looks_math or looks_tool):
        return None

    if looks_tool:
        if domain is not Domain.WIKI:
            raise MalformedOperation("Tool operation is not legal in the math domain", *span)
        match = _WIKI_OP.match(content)
        if match:
            step = ToolStep(StepKind.WIKI_SEARCH, match.group("query"), Placeholder(int(match.group("out"))))
            return WikiOp(step, span)
        match = _NER_OP.match(content)
        if match:
            ner_class = match.group("cls").lower()
            if ner_class not in NER_CLASSES:
                raise MalformedOperation(f"Unknown NER class {match.group('cls')!r}", *span)
            step = ToolStep(
                StepKind.NER,
                f"y{match.group('src')}",
                Placeholder(int(match.group("out"))),
                ner_class=ner_class,
            )
            return NerOp(step, span)
        raise MalformedOperation("Span does not match the WikiSearch or NER grammar", *span)

    if domain is not Domain.MATH:
        raise MalformedOperation("Derivation is not legal in the wiki domain", *span)
    lhs, _, rhs = content.rpartition("=")
    result = _MATH_RESULT.match(rhs)
    if not result:
        raise MalformedOperation("Derivation result must be a placeholder y<k>", *span)
    expr = _ExprParser(normalize_math_text(lhs), span).parse()
    return MathOp(Derivation(expr, Placeholder(int(result.group("out")))), span)


def _text_segment(text: str, start: int, end: int, offsets: _ByteOffsets) -> Text:
    return Text(text[start:end], (offsets(start), offsets(end)))


def check_structure(segments: Tuple[Segment, ...]) -> List[TraceStructureError]:
    """Single-assignment and def-before-use violations, in segment order."""
    violations: List[TraceStructureError] = []
    defined: set = set()
    for segment in segments:
        span = segment.span
        for ref in segment.refs:
            if ref not in defined:
                violations.append(
                    UseBeforeDefinition(f"{ref} used before it is defined", str(ref), *span)
                )
        if isinstance(segment, Text):
            continue
        target = segment.defines
        if target in defined:
            violations.append(DuplicateDefinition(f"{target} defined more than once", str(target), *span))
        defined.add(target)
    return violations


def scan_trace(text: str, domain: Domain = Domain.MATH) -> Tuple[Trace, List[TraceStructureError]]:
    """Lexical pass: segments plus structural violations (not raised).

    Raises:
        UnbalancedBracket, MalformedOperation: the text cannot be segmented.
    """
    domain = Domain(domain)
    offsets = _ByteOffsets(text)
    segments: List[Segment] = []
    text_start = 0
    open_at: Optional[int] = None

    for match in _BRACKET.finditer(text):
        index = match.start()
        if match.group() == "[":
            if open_at is not None:
                close = text.find("]", index)
                end = offsets(close + 1) if close >= 0 else offsets(len(text))
                raise NestedOperation("Nested brackets are not supported", offsets(open_at), end)
            open_at = index
            continue
        if open_at is None:
            raise UnbalancedBracket("Closing bracket without an opening bracket", offsets(index), offsets(index + 1))
        span = (offsets(open_at), offsets(index + 1))
        operation = _parse_operation(text[open_at + 1 : index], domain, span)
        if operation is not None:
            if open_at > text_start:
                segments.append(_text_segment(text, text_start, open_at, offsets))
            segments.append(operation)
            text_start = index + 1
        open_at = None

    if open_at is not None:
        raise UnbalancedBracket("Opening bracket is never closed", offsets(open_at), offsets(len(text)))
    if text_start < len(text):
        segments.append(_text_segment(text, text_start, len(text), offsets))

    trace = Trace(tuple(segments), domain)
    return trace, check_structure(trace.segments)


def parse_trace(text: str, domain: Domain = Domain.MATH) -> Trace:
    """Parse a CoA trace.

    Raises:
        UnbalancedBracket, MalformedOperation, DuplicateDefinition, UseBeforeDefinition
    """
    trace, violations = scan_trace(text, domain)
    if violations:
        raise violations[0]
    return trace


def render_trace(trace: Trace) -> str:
    """Canonical text of a trace."""
    return "".join(segment.render() for segment in trace.segments)


def render_binding(value: Any) -> str:
    """Text used when a bound value replaces its placeholder."""
    if isinstance(value, (Fraction, int)):
        return render_value(Fraction(value))
    return str(value)


def render_operand(value: Any, text: Optional[str] = None) -> str:
    """``render_binding`` for use inside an expression: fractions and negatives are parenthesised."""
    text = render_binding(value) if text is None else text
    if isinstance(value, (Fraction, int)) and (Fraction(value).denominator != 1 or value < 0):
        return f"({text})"
    return text


def _substitute_refs(text: str, values: Mapping[Placeholder, Any], render: Callable[[Any], str] = render_binding) -> str:
    def replace(match: re.Match) -> str:
        placeholder = Placeholder(int(match.group(1)))
        if placeholder not in values:
            return match.group(0)
        return render(values[placeholder])

    return _PLACEHOLDER.sub(replace, text)


def substitute(
    trace: Trace,
    bindings: Mapping[Placeholder, Any],
    render: Callable[[Any], str] = render_binding,
) -> str:
    """Replace every placeholder occurrence with its bound value.

    Bracketed derivations render as ``[expr = value]``; values substituted into
    ``expr`` go through ``render_operand`` so the line still evaluates to ``value``.

    Raises:
        UnboundPlaceholder: some used or defined placeholder has no binding.
    """
    missing = (trace.used | trace.defined) - set(bindings)
    if missing:
        raise UnboundPlaceholder([p.index for p in missing])
    parts = []
    for segment in trace.segments:
        if isinstance(segment, MathOp):
            lhs = _substitute_refs(
                segment.derivation.lhs.render(), bindings, lambda value: render_operand(value, render(value))
            )
            parts.append(f"[{lhs} = {render(bindings[segment.defines])}]")
        elif isinstance(segment, (WikiOp, NerOp)):
            step = segment.step
            source = _substitute_refs(step.template, bindings, render)
            arrow = f"-NER({step.ner_class})->" if step.kind is StepKind.NER else "-Wiki->"
            parts.append(f"[{source} {arrow} {render(bindings[step.output])}]")
        else:
            parts.append(_substitute_refs(segment.text, bindings, render))
    return "".join(parts)


def load_traces(path: Path) -> Iterator[Tuple[str, str]]:
    """Yield ``(id, trace)`` pairs from a plain one-per-line file or ``{"id","trace"}`` JSONL."""
    with Path(path).open("r", encoding="utf-8") as handle:
        for line_num, line in enumerate(handle, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.lstrip().startswith("{"):
                try:
                    record = json.loads(line)
                except json.JSONDecodeError:
                    record = None
                if isinstance(record, dict) and "trace" in record:
                    yield str(record.get("id", f"line-{line_num}")), record["trace"]
                    continue
            yield f"line-{line_num}", line
