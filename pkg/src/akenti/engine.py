"""The decision function: policy chains, rights aggregation and capabilities."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .certs import (
    DEFAULT_CAPABILITY_LIFETIME,
    MAX_CAPABILITY_LIFETIME,
    AkentiCertificate,
    CapabilityCert,
    CertType,
    ConditionalAction,
    PolicyCert,
    Principal,
    Validity,
    make_header,
    sign_certificate,
    validate_period,
    verify_signature,
)
from .constraints import (
    And,
    AttributeContext,
    ConstraintExpr,
    ConstraintTypeError,
    Or,
    Residual,
    comparisons,
    evaluate,
    pretty_print,
)
from .keys import KeyPair, UnsupportedAlgorithm
from .pki import pki_verify
from .store import CertSource, CertStore, SourceKind, SourceUnavailable, file_url

log = logging.getLogger(__name__)

DEFAULT_ENGINE_DN = "/O=akenti/CN=Akenti Decision Service"

# denial reasons
IDENTITY_REJECTED = "IdentityRejected"
NO_APPLICABLE_POLICY = "NoApplicablePolicy"
CRITICAL_UNSATISFIED = "CriticalUnsatisfied"
NOT_AUTHORIZED = "ConstraintsUnsatisfied"


class SystemFailure(Exception):
    """The decision could not be made (as opposed to a denial)."""

    kind = "SystemFailure"

    def __init__(self, detail: str = ""):
        super().__init__(f"{self.kind}: {detail}" if detail else self.kind)
        self.detail = detail


class NoRootPolicy(SystemFailure):
    kind = "NoRootPolicy"


class UntrustedPolicy(SystemFailure):
    kind = "UntrustedPolicy"


class StoreFailure(SystemFailure):
    kind = "SourceUnavailable"


class EmptyDecision(Exception):
    pass


class LifetimeTooLong(Exception):
    pass


@dataclass(frozen=True)
class PolicyLevel:
    resource: str
    policy: PolicyCert | None
    effective: PolicyCert
    uid: str | None = None

    @property
    def inherited(self) -> bool:
        return self.policy is None


@dataclass(frozen=True)
class PolicyChain:
    levels: tuple[PolicyLevel, ...]

    @property
    def root_policy(self) -> PolicyCert:
        return self.levels[0].policy

    @property
    def target(self) -> PolicyLevel:
        return self.levels[-1]

    @property
    def evidence(self) -> list[str]:
        return [lv.uid for lv in self.levels if lv.uid]


@dataclass
class AuthorizationDecision:
    subject: Principal
    resource: str
    granted: frozenset[str] = frozenset()
    conditional: dict[str, ConstraintExpr] = field(default_factory=dict)
    denied_reason: str | None = None
    evidence: tuple[str, ...] = ()

    @property
    def allowed(self) -> bool:
        return bool(self.granted or self.conditional)


@dataclass(frozen=True)
class CapabilityCheck:
    granted: frozenset[str]
    conditional: dict[str, str]
    reason: str | None = None


def _segments(resource_path: str) -> list[str]:
    parts = resource_path.split("/")
    if not resource_path or any(not p for p in parts):
        raise SystemFailure(f"bad resource path {resource_path!r}")
    return parts


def _self_signed_ok(cert: AkentiCertificate, store: CertStore, now: datetime) -> str | None:
    key = store.principal_key(cert.issuer, cert.body, now)
    if key is None:
        return f"no verifiable identity for {cert.issuer.user_dn} under the policy's own CAs"
    try:
        if not verify_signature(cert, key):
            return "self-signature does not verify"
    except UnsupportedAlgorithm as exc:
        return str(exc)
    if validate_period(cert, now) is not Validity.VALID:
        return "outside validity period"
    return None


def load_policy_chain(
    resource_path: str,
    trusted_root_dir: str | Path,
    store: CertStore,
    now: datetime,
    root_ttl: float = 0,
) -> PolicyChain:
    """Resolve explicit or inherited policy for every level of `resource_path`."""
    segments = _segments(resource_path)
    source = CertSource(file_url(trusted_root_dir), SourceKind.TRUSTED_ROOT)
    try:
        trusted = store.fetch_directory(source, now, root_ttl)
    except SourceUnavailable as exc:
        raise NoRootPolicy(str(exc)) from None
    roots = [
        c for c in trusted
        if c.cert_type is CertType.POLICY and c.body.resource_name == segments[0]
    ]
    if not roots:
        raise NoRootPolicy(f"no root policy for {segments[0]!r} in {trusted_root_dir}")
    root, problems = None, []
    for cand in roots:
        reason = _self_signed_ok(cand, store, now)
        if reason is None:
            root = cand
            break
        problems.append(f"{cand.uid}: {reason}")
    if root is None:
        raise UntrustedPolicy("; ".join(problems))

    levels = [PolicyLevel(segments[0], root.body, root.body, root.uid)]
    for i in range(1, len(segments)):
        prefix = "/".join(segments[: i + 1])
        parent = levels[-1].effective
        candidates = [
            c for c in trusted
            if c.cert_type is CertType.POLICY and c.body.resource_name == prefix
        ]
        for url in parent.uc_dirs:
            for c in store.fetch_directory(
                CertSource(url, SourceKind.USE_CONDITION_DIR), now, parent.cache_time
            ):
                if c.cert_type is CertType.POLICY and c.body.resource_name == prefix:
                    candidates.append(c)
        explicit = None
        for cand in {c.uid: c for c in candidates}.values():
            reason = store.verify_issued_by(cand, parent.uc_issuers, parent, now)
            if reason is not None:
                raise UntrustedPolicy(f"policy {cand.uid} for {prefix}: {reason}")
            explicit = explicit or cand
        if explicit is not None:
            levels.append(PolicyLevel(prefix, explicit.body, explicit.body, explicit.uid))
        else:
            levels.append(PolicyLevel(prefix, None, parent))
    return PolicyChain(tuple(levels))


def _disjoin(exprs: list[ConstraintExpr]) -> ConstraintExpr:
    unique = list(dict.fromkeys(exprs))
    return unique[0] if len(unique) == 1 else Or(tuple(unique))


def _conjoin(exprs: list[ConstraintExpr]) -> ConstraintExpr:
    unique = list(dict.fromkeys(exprs))
    return unique[0] if len(unique) == 1 else And(tuple(unique))


def aggregate(outcomes, requested=None):
    """Combine per-use-condition outcomes into (granted, conditional, reason).

    `outcomes` is a sequence of ``(rights, critical, outcome)`` with outcome
    True, False or a Residual.
    """
    granted: set[str] = set()
    residuals: dict[str, list[ConstraintExpr]] = {}
    for rights, _critical, outcome in outcomes:
        if outcome is True:
            granted.update(rights)
        elif isinstance(outcome, Residual):
            for action in rights:
                residuals.setdefault(action, []).append(outcome.expr)
    conditional = {a: _disjoin(r) for a, r in residuals.items() if a not in granted}

    if any(crit and outcome is False for _r, crit, outcome in outcomes):
        return frozenset(), {}, CRITICAL_UNSATISFIED
    critical = [o.expr for _r, crit, o in outcomes if crit and isinstance(o, Residual)]
    if critical:
        guard = _conjoin(critical)
        conditional = {a: _conjoin([r, guard]) for a, r in conditional.items()}
        for action in granted:
            conditional[action] = guard
        granted = set()

    if requested is not None:
        granted &= set(requested)
        conditional = {a: r for a, r in conditional.items() if a in requested}
    reason = None if granted or conditional else NOT_AUTHORIZED
    return frozenset(granted), dict(sorted(conditional.items())), reason


class PolicyEngine:
    """Answers "what may this subject do to this resource" from signed policy."""

    def __init__(
        self,
        trusted_root_dir: str | Path,
        store: CertStore | None = None,
        signing_key: KeyPair | None = None,
        principal: Principal | None = None,
        max_capability_lifetime: int = MAX_CAPABILITY_LIFETIME,
    ):
        self.trusted_root_dir = Path(trusted_root_dir)
        self.store = store or CertStore()
        self.signing_key = signing_key or KeyPair.generate()
        self.principal = principal or Principal(user_dn=DEFAULT_ENGINE_DN, ca_dn=DEFAULT_ENGINE_DN)
        self.max_capability_lifetime = max_capability_lifetime
        self._root_ttl = 0

    def load_policy_chain(self, resource_path: str, now: datetime) -> PolicyChain:
        chain = load_policy_chain(
            resource_path, self.trusted_root_dir, self.store, now, self._root_ttl
        )
        self._root_ttl = chain.root_policy.cache_time
        return chain

    def _context(self, subject, uc, policy, system_ctx, now):
        akenti: dict[str, set[str]] = {}
        evidence = []
        dirs = list(policy.attr_dirs) + list(uc.attr_dirs)
        declared = uc.declared_akenti
        for cmp in comparisons(uc.constraint):
            if cmp.attr not in declared or cmp.op != "=":
                continue
            info = uc.attribute_info(cmp.attr)
            cert = self.store.find_attribute_cert(
                subject, cmp.attr, cmp.value, dirs, info.authorities, now, policy
            )
            if cert is not None:
                akenti.setdefault(cmp.attr, set()).add(cmp.value)
                evidence.append(cert.uid)
        ctx = AttributeContext.for_subject(
            subject.user_dn,
            akenti=akenti,
            system={k: str(v) for k, v in (system_ctx or {}).items()},
            declared_akenti=declared,
        )
        return ctx, evidence

    def authorize(
        self,
        subject: Principal,
        subject_identity: AkentiCertificate | None,
        resource_path: str,
        requested_actions=None,
        system_ctx: dict | None = None,
        now: datetime | None = None,
    ) -> AuthorizationDecision:
        """Decide `subject`'s rights on `resource_path`.

        `requested_actions` of None asks for every action the subject holds.
        Raises SystemFailure when policy cannot be gathered; every other
        negative outcome is a denial carried in the decision.
        """
        now = now or datetime.now(timezone.utc)
        requested = None if requested_actions is None else frozenset(requested_actions)
        try:
            chain = self.load_policy_chain(resource_path, now)
            policy = chain.target.effective
            evidence = list(chain.evidence)

            crls = []
            for ca in policy.ca_infos:
                crls.extend(self.store.crls_for(ca, now, policy.cache_time))
            if (
                subject_identity is None
                or subject_identity.cert_type is not CertType.IDENTITY
                or subject_identity.body.subject != subject
                or not pki_verify(subject_identity, policy.ca_infos, crls, now)
            ):
                return AuthorizationDecision(
                    subject, resource_path, denied_reason=IDENTITY_REJECTED, evidence=tuple(evidence)
                )

            ucs = self.store.find_use_conditions(resource_path, chain, now)
            if not ucs:
                return AuthorizationDecision(
                    subject, resource_path, denied_reason=NO_APPLICABLE_POLICY, evidence=tuple(evidence)
                )
            outcomes = []
            for cert in ucs:
                uc = cert.body
                ctx, attr_evidence = self._context(subject, uc, policy, system_ctx, now)
                try:
                    outcome = evaluate(uc.constraint, ctx)
                except ConstraintTypeError as exc:
                    log.warning("use-condition %s cannot be evaluated: %s", cert.uid, exc)
                    outcome = False
                outcomes.append((uc.rights, uc.critical, outcome))
                evidence.append(cert.uid)
                evidence.extend(attr_evidence)
        except SourceUnavailable as exc:
            raise StoreFailure(str(exc)) from None

        granted, conditional, reason = aggregate(outcomes, requested)
        return AuthorizationDecision(
            subject,
            resource_path,
            granted=granted,
            conditional=conditional,
            denied_reason=reason,
            evidence=tuple(dict.fromkeys(evidence)),
        )

    def issue_capability(
        self,
        decision: AuthorizationDecision,
        subject_public_key: str,
        lifetime_s: int = DEFAULT_CAPABILITY_LIFETIME,
        now: datetime | None = None,
    ) -> AkentiCertificate:
        if not decision.granted and not decision.conditional:
            raise EmptyDecision("nothing to put in a capability")
        if lifetime_s > self.max_capability_lifetime:
            raise LifetimeTooLong(f"{lifetime_s}s exceeds the {self.max_capability_lifetime}s maximum")
        now = (now or datetime.now(timezone.utc)).replace(microsecond=0)
        body = CapabilityCert(
            subject=decision.subject,
            subject_public_key=subject_public_key,
            resource_name=decision.resource,
            granted_actions=tuple(decision.granted),
            conditional_actions=tuple(
                ConditionalAction(action=a, constraint_text=pretty_print(r))
                for a, r in sorted(decision.conditional.items())
            ),
        )
        header = make_header(body, self.principal, now, now + timedelta(seconds=lifetime_s))
        return sign_certificate(body, header, self.signing_key)


def verify_capability(
    cap: AkentiCertificate, trusted_engine_keys, presented_subject: Principal, now: datetime
) -> CapabilityCheck:
    """Usable actions of a pushed capability, or an empty result with a reason."""

    def empty(reason: str) -> CapabilityCheck:
        return CapabilityCheck(frozenset(), {}, reason)

    if cap.cert_type is not CertType.CAPABILITY:
        return empty("NotACapability")
    try:
        signed = any(verify_signature(cap, key) for key in trusted_engine_keys)
    except UnsupportedAlgorithm:
        return empty("UnsupportedAlgorithm")
    if not signed:
        return empty("UntrustedSignature")
    period = validate_period(cap, now)
    if period is Validity.EXPIRED:
        return empty("Expired")
    if period is Validity.NOT_YET_VALID:
        return empty("NotYetValid")
    if cap.body.subject != presented_subject:
        return empty("SubjectMismatch")
    return CapabilityCheck(
        frozenset(cap.body.granted_actions),
        {c.action: c.constraint_text for c in cap.body.conditional_actions},
    )
