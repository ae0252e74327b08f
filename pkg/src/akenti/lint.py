"""Static checks over a directory of policy certificates."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

from .certs import AttrType, CertificateError, CertType, PolicyCert
from .constraints import (
    And,
    AttributeContext,
    Comparison,
    ConstraintExpr,
    ConstraintSyntaxError,
    ConstraintTypeError,
    MalformedTime,
    Or,
    comparisons,
    compare_values,
    evaluate,
    parse_constraint,
    parse_time_of_day,
    pretty_print,
)
from .xmlcodec import read_certificate

MINUTES_PER_DAY = 24 * 60


class Severity(str, enum.Enum):
    ERROR = "error"
    WARNING = "warning"
    INFO = "info"


@dataclass(frozen=True)
class Diagnostic:
    code: str
    severity: Severity
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity.value.upper():7} {self.code} {self.location}: {self.message}"


def _and_nodes(expr: ConstraintExpr):
    if isinstance(expr, And):
        yield expr
    if isinstance(expr, (And, Or)):
        for child in expr.children:
            yield from _and_nodes(child)


def time_window_satisfiable(cmps: list[Comparison]) -> bool:
    """Is there a minute of the day meeting every `time` comparison?"""
    for minute in range(MINUTES_PER_DAY):
        now = f"{minute // 60:02d}:{minute % 60:02d}"
        if all(compare_values(now, c.op, c.value) for c in cmps):
            return True
    return False


def lint_constraint(expr: ConstraintExpr | str, location: str = "<constraint>") -> list[Diagnostic]:
    if isinstance(expr, str):
        try:
            expr = parse_constraint(expr)
        except ConstraintSyntaxError as exc:
            return [Diagnostic("SYNTAX", Severity.ERROR, location, str(exc))]
    out = []
    for cmp in comparisons(expr):
        if cmp.attr == "time":
            try:
                parse_time_of_day(cmp.value)
            except MalformedTime as exc:
                out.append(Diagnostic("MALFORMED_TIME", Severity.ERROR, location, str(exc)))
    if out:
        return out
    for node in _and_nodes(expr):
        window = [c for c in node.children if isinstance(c, Comparison) and c.attr == "time"]
        if len(window) > 1 and not time_window_satisfiable(window):
            text = " && ".join(pretty_print(c) for c in window)
            out.append(Diagnostic(
                "UNSATISFIABLE_TIME_WINDOW", Severity.WARNING, location,
                f"no time of day satisfies {text}; an overnight window needs ||",
            ))
    return out


def _governing_policy(resource: str, policies: dict[str, PolicyCert]) -> PolicyCert | None:
    parts = resource.split("/")
    for i in range(len(parts), 0, -1):
        policy = policies.get("/".join(parts[:i]))
        if policy is not None:
            return policy
    return None


def lint_corpus(corpus_dir: str | Path) -> list[Diagnostic]:
    root = Path(corpus_dir)
    certs, out = [], []
    for path in sorted(root.rglob("*.xml")):
        try:
            certs.append((path.relative_to(root).as_posix(), read_certificate(path)))
        except CertificateError as exc:
            out.append(Diagnostic("UNREADABLE", Severity.WARNING, str(path), str(exc)))

    policies = {c.body.resource_name: c.body for _, c in certs if c.cert_type is CertType.POLICY}
    identities = {c.body.subject for _, c in certs if c.cert_type is CertType.IDENTITY}
    attrs = [c for _, c in certs if c.cert_type is CertType.ATTRIBUTE]
    subjects = identities | {c.body.subject for c in attrs}

    for where, cert in certs:
        if cert.cert_type is not CertType.USE_CONDITION:
            continue
        uc = cert.body
        try:
            expr = uc.constraint
        except ConstraintSyntaxError as exc:
            out.append(Diagnostic("SYNTAX", Severity.ERROR, where, str(exc)))
            continue
        out.extend(lint_constraint(expr, where))

        policy = _governing_policy(uc.resource_name, policies)
        if policy is None:
            out.append(Diagnostic("NO_POLICY", Severity.WARNING, where,
                                  f"no policy certificate governs {uc.resource_name}"))
        elif cert.issuer not in policy.uc_issuers:
            out.append(Diagnostic("UNTRUSTED_ISSUER", Severity.ERROR, where,
                                  f"{cert.issuer.user_dn} is not a stakeholder for {uc.resource_name}"))

        for info in uc.attribute_infos:
            if info.attr_type is not AttrType.AKENTI:
                continue
            if not any(a in identities for a in info.authorities):
                out.append(Diagnostic(
                    "UNREACHABLE_AUTHORITY", Severity.WARNING, where,
                    f"no identity certificate for any authority of attribute {info.attr_name!r}",
                ))
        for cmp in comparisons(expr):
            info = uc.attribute_info(cmp.attr)
            if info is None or info.attr_type is not AttrType.AKENTI or cmp.op != "=":
                continue
            held = any(
                c.body.attr_name == cmp.attr
                and c.body.attr_value.casefold() == cmp.value.casefold()
                and c.issuer in info.authorities
                for c in attrs
            )
            if not held:
                out.append(Diagnostic("NO_HOLDER", Severity.INFO, where,
                                      f"nobody holds {cmp.attr}={cmp.value}"))

        if not any(_grantable(expr, uc, s, attrs) for s in subjects):
            out.append(Diagnostic("NEVER_GRANTED", Severity.INFO, where,
                                  f"no known subject can obtain {', '.join(uc.rights)}"))
    return out


def _grantable(expr, uc, subject, attrs) -> bool:
    akenti: dict[str, set[str]] = {}
    for c in attrs:
        info = uc.attribute_info(c.body.attr_name)
        if c.body.subject == subject and info is not None and c.issuer in info.authorities:
            akenti.setdefault(c.body.attr_name, set()).add(c.body.attr_value)
    ctx = AttributeContext.for_subject(subject.user_dn, akenti=akenti, declared_akenti=uc.declared_akenti)
    try:
        return evaluate(expr, ctx) is not False
    except ConstraintTypeError:
        return False


def has_errors(diagnostics) -> bool:
    return any(d.severity is Severity.ERROR for d in diagnostics)
