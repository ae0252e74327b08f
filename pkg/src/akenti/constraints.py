"""Use-condition constraint language: parser, printer and three-valued evaluator.

Grammar::

    expr       := and ( "||" and )*
    and        := prim ( "&&" prim )*
    prim       := "(" expr ")" | comparison
    comparison := IDENT OP VALUE
    OP         := "=" | "<" | ">"
    IDENT      := [A-Za-z_][A-Za-z0-9_.-]*

An unquoted VALUE runs up to the next ``)``, ``&``, ``|`` or end of input and
is stripped; a double-quoted VALUE may contain anything, with ``\\"`` and
``\\\\`` escapes.  There is no negation, so evaluation is monotone in the
attributes a subject holds.

Names resolve as X.509 DN components if they are reserved component keys,
then as AKENTI attributes if the governing use-condition declares them, and
otherwise as SYSTEM attributes.  Only SYSTEM attributes can be unknown; an
expression that stays undetermined evaluates to a :class:`Residual` holding
the SYSTEM comparisons still to be checked by the enforcement side.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Union

X509_KEYS = frozenset({"DN", "CN", "O", "OU", "DC", "C", "L", "ST", "EMAIL"})
OPERATORS = ("=", "<", ">")

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.-]*")
_TIME_RE = re.compile(r"^(\d{1,2})(?::(\d{2}))?(am|pm)?$", re.IGNORECASE)
_INT_RE = re.compile(r"^[+-]?\d+$")


class ConstraintSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class ConstraintTypeError(TypeError):
    """Ordered comparison between values that have no common ordering."""


class MalformedTime(ValueError):
    pass


@dataclass(frozen=True)
class Comparison:
    attr: str
    op: str
    value: str


@dataclass(frozen=True)
class And:
    children: tuple


@dataclass(frozen=True)
class Or:
    children: tuple


ConstraintExpr = Union[Comparison, And, Or]


@dataclass(frozen=True)
class Residual:
    expr: ConstraintExpr


EvalOutcome = Union[bool, Residual]


@dataclass
class AttributeContext:
    x509: dict[str, tuple[str, ...]] = field(default_factory=dict)
    akenti: dict[str, set[str]] = field(default_factory=dict)
    system: dict[str, str] = field(default_factory=dict)
    declared_akenti: frozenset[str] = frozenset()

    @classmethod
    def for_subject(cls, dn: str | None, **kwargs) -> "AttributeContext":
        return cls(x509=x509_attributes(dn) if dn else {}, **kwargs)

    def kind(self, name: str) -> str:
        if name in X509_KEYS:
            return "X509"
        if name in self.declared_akenti:
            return "AKENTI"
        return "SYSTEM"


def x509_attributes(dn: str) -> dict[str, tuple[str, ...]]:
    """DN components keyed by component name, plus the whole DN under ``DN``."""
    attrs: dict[str, list[str]] = {"DN": [dn]}
    for comp in dn.lstrip("/").split("/"):
        key, sep, value = comp.partition("=")
        if sep:
            attrs.setdefault(key, []).append(value)
    return {k: tuple(v) for k, v in attrs.items()}


# -- parsing ----------------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message: str):
        raise ConstraintSyntaxError(message, self.pos)

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self, token: str) -> bool:
        self.skip_ws()
        return self.text.startswith(token, self.pos)

    def parse(self) -> ConstraintExpr:
        expr = self.expr()
        self.skip_ws()
        if self.pos != len(self.text):
            self.error(f"unexpected {self.text[self.pos]!r}")
        return expr

    def expr(self) -> ConstraintExpr:
        items = [self.conj()]
        while self.peek("||"):
            self.pos += 2
            items.append(self.conj())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def conj(self) -> ConstraintExpr:
        items = [self.prim()]
        while self.peek("&&"):
            self.pos += 2
            items.append(self.prim())
        return items[0] if len(items) == 1 else And(tuple(items))

    def prim(self) -> ConstraintExpr:
        if self.peek("("):
            self.pos += 1
            inner = self.expr()
            if not self.peek(")"):
                self.error("expected ')'")
            self.pos += 1
            return inner
        return self.comparison()

    def comparison(self) -> Comparison:
        self.skip_ws()
        m = _IDENT_RE.match(self.text, self.pos)
        if not m:
            self.error("expected attribute name")
        self.pos = m.end()
        self.skip_ws()
        if self.pos >= len(self.text) or self.text[self.pos] not in OPERATORS:
            self.error("expected one of = < >")
        op = self.text[self.pos]
        self.pos += 1
        return Comparison(m.group(), op, self.value())

    def value(self) -> str:
        self.skip_ws()
        if self.pos < len(self.text) and self.text[self.pos] == '"':
            return self.quoted()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] not in ")&|":
            self.pos += 1
        value = self.text[start : self.pos].strip()
        if not value:
            self.pos = start
            self.error("expected a value")
        return value

    def quoted(self) -> str:
        self.pos += 1
        out = []
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch == "\\" and self.pos + 1 < len(self.text):
                out.append(self.text[self.pos + 1])
                self.pos += 2
            elif ch == '"':
                self.pos += 1
                return "".join(out)
            else:
                out.append(ch)
                self.pos += 1
        self.error("unterminated quoted value")


def parse_constraint(text: str) -> ConstraintExpr:
    if not text or not text.strip():
        raise ConstraintSyntaxError("empty constraint", 0)
    return _Parser(text).parse()


def _needs_quotes(value: str) -> bool:
    return (
        not value
        or value != value.strip()
        or value.startswith('"')
        or any(c in value for c in ')&|"\\\n\r\t')
    )


def pretty_print(expr: ConstraintExpr) -> str:
    """Render an expression so that ``parse_constraint`` gives it back unchanged.

    Compound nodes are always parenthesized.
    """
    if isinstance(expr, Comparison):
        value = expr.value
        if _needs_quotes(value):
            value = '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
        return f"{expr.attr}{expr.op}{value}"
    joiner = " && " if isinstance(expr, And) else " || "
    return "(" + joiner.join(pretty_print(c) for c in expr.children) + ")"


def comparisons(expr: ConstraintExpr) -> Iterator[Comparison]:
    if isinstance(expr, Comparison):
        yield expr
    else:
        for child in expr.children:
            yield from comparisons(child)


def referenced_names(expr: ConstraintExpr) -> set[str]:
    return {c.attr for c in comparisons(expr)}


# -- values -------------------------------------------------------------------------


def parse_time_of_day(value: str) -> int:
    """Minutes since midnight for ``H[H][:MM]`` (24 h) or ``H[H][:MM]am|pm``."""
    m = _TIME_RE.match(value.strip())
    if not m:
        raise MalformedTime(f"{value!r} is not a time of day")
    hour, minute = int(m.group(1)), int(m.group(2) or 0)
    suffix = (m.group(3) or "").lower()
    if minute > 59:
        raise MalformedTime(f"{value!r}: minute out of range")
    if suffix:
        if not 1 <= hour <= 12:
            raise MalformedTime(f"{value!r}: hour out of range for a 12-hour clock")
        hour = hour % 12 + (12 if suffix == "pm" else 0)
    elif hour > 23:
        raise MalformedTime(f"{value!r}: hour out of range")
    return hour * 60 + minute


def _as_int(value: str) -> int | None:
    return int(value) if _INT_RE.match(value.strip()) else None


def _as_time(value: str) -> int | None:
    try:
        return parse_time_of_day(value)
    except MalformedTime:
        return None


def compare_values(actual: str, op: str, expected: str) -> bool:
    """Integer comparison if both sides are integers, else time-of-day, else string equality."""
    lhs, rhs = _as_int(actual), _as_int(expected)
    if lhs is None or rhs is None:
        lhs, rhs = _as_time(actual), _as_time(expected)
    if lhs is None or rhs is None:
        if op == "=":
            return actual == expected
        raise ConstraintTypeError(f"cannot order {actual!r} against {expected!r}")
    if op == "=":
        return lhs == rhs
    return lhs < rhs if op == "<" else lhs > rhs


# -- evaluation ---------------------------------------------------------------------


def _leaf(cmp: Comparison, ctx: AttributeContext) -> bool | Comparison:
    kind = ctx.kind(cmp.attr)
    if kind == "SYSTEM":
        if cmp.attr not in ctx.system:
            return cmp
        return compare_values(str(ctx.system[cmp.attr]), cmp.op, cmp.value)
    if cmp.op != "=":
        raise ConstraintTypeError(f"{kind} attribute {cmp.attr!r} supports only '='")
    if kind == "X509":
        return cmp.value in ctx.x509.get(cmp.attr, ())
    held = ctx.akenti.get(cmp.attr, ())
    want = cmp.value.casefold()
    return any(v.casefold() == want for v in held)


def _partial(expr: ConstraintExpr, ctx: AttributeContext):
    if isinstance(expr, Comparison):
        return _leaf(expr, ctx)
    results = [_partial(c, ctx) for c in expr.children]
    dominant = isinstance(expr, Or)  # True dominates Or, False dominates And
    if any(r is dominant for r in results):
        return dominant
    rest = [r for r in results if not isinstance(r, bool)]
    if not rest:
        return not dominant
    return rest[0] if len(rest) == 1 else type(expr)(tuple(rest))


def evaluate(expr: ConstraintExpr, ctx: AttributeContext) -> EvalOutcome:
    """Kleene evaluation; undetermined results come back as a pruned Residual."""
    result = _partial(expr, ctx)
    return result if isinstance(result, bool) else Residual(result)
