"""Certificate types, the Ak1CanAlg canonical form, signing and validity checks.

Every certificate is an envelope of a header, one body and a signature over
the canonical bytes of header plus body.  Ak1CanAlg is defined here as an
ordered ``name=value`` line serialization: fields are emitted in declaration
order, nested records are flattened with dotted prefixes, list items carry an
index, and values are escaped so that no line has trailing whitespace.
"""

from __future__ import annotations

import dataclasses
import enum
import re
import secrets
import socket
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from functools import cached_property

from .keys import (
    DEFAULT_SIGNATURE_ALG,
    KeyMismatch,
    KeyPair,
    UnsupportedAlgorithm,
    encode_public_key,
    same_public_key,
    verify_bytes,
)

CANON_ALG = "Ak1CanAlg"
CERT_VERSION = "2"
DN_KEYS = frozenset({"O", "OU", "CN", "DC", "C", "L", "ST", "EMAIL"})
STANDARD_ACTIONS = ("start", "cancel", "query", "signal", "suspend", "resume")
DEFAULT_CAPABILITY_LIFETIME = 300
MAX_CAPABILITY_LIFETIME = 900

_ACTION_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.-]*$")
_TIMESTAMP_RE = re.compile(r"^(\d{2})(\d{2})(\d{2})(\d{2})(\d{2})(\d{2})Z$")

__all__ = [
    "AkentiCertificate",
    "AttrType",
    "AttributeCert",
    "AttributeInfo",
    "CAInfo",
    "CapabilityCert",
    "CertHeader",
    "CertType",
    "CertificateError",
    "ConditionalAction",
    "IdentityCert",
    "InvalidBody",
    "KeyMismatch",
    "MalformedTimestamp",
    "PolicyCert",
    "Principal",
    "RevocationList",
    "Scope",
    "UnsupportedAlgorithm",
    "UseConditionCert",
    "Validity",
    "canonicalize",
    "dn_components",
    "format_timestamp",
    "make_header",
    "parse_timestamp",
    "sign_certificate",
    "validate_period",
    "verify_signature",
]


class CertificateError(Exception):
    """Base class for certificate construction and decoding failures."""


class InvalidBody(CertificateError):
    """A certificate header or body violates one of its invariants."""


class MalformedTimestamp(CertificateError, ValueError):
    pass


class CertType(str, enum.Enum):
    POLICY = "Policy"
    USE_CONDITION = "UseCondition"
    ATTRIBUTE = "Attribute"
    CAPABILITY = "Capability"
    IDENTITY = "Identity"
    REVOCATION = "RevocationList"


class Scope(str, enum.Enum):
    LOCAL = "local"
    SUBTREE = "sub-tree"


class AttrType(str, enum.Enum):
    AKENTI = "AKENTI"
    SYSTEM = "SYSTEM"
    X509 = "X509"


class Validity(str, enum.Enum):
    VALID = "Valid"
    EXPIRED = "Expired"
    NOT_YET_VALID = "NotYetValid"


# -- timestamps ---------------------------------------------------------------


def parse_timestamp(text: str) -> datetime:
    """Parse ``YYMMDDHHMMSSZ``; two-digit years below 50 are 20xx, the rest 19xx."""
    m = _TIMESTAMP_RE.match(text.strip())
    if not m:
        raise MalformedTimestamp(f"timestamp {text!r} is not YYMMDDHHMMSSZ")
    yy, mo, dd, hh, mi, ss = (int(g) for g in m.groups())
    year = 2000 + yy if yy < 50 else 1900 + yy
    try:
        return datetime(year, mo, dd, hh, mi, ss, tzinfo=timezone.utc)
    except ValueError as exc:
        raise MalformedTimestamp(f"timestamp {text!r}: {exc}") from None


def format_timestamp(when: datetime) -> str:
    when = _utc(when)
    if not 1950 <= when.year <= 2049:
        raise MalformedTimestamp(f"year {when.year} outside the two-digit window 1950-2049")
    return when.strftime("%y%m%d%H%M%SZ")


def _utc(when: datetime) -> datetime:
    if when.tzinfo is None:
        raise ValueError("naive datetime; certificates need UTC instants")
    return when.astimezone(timezone.utc)


def _second(when: datetime) -> datetime:
    return _utc(when).replace(microsecond=0)


# -- principals ---------------------------------------------------------------


def dn_components(dn: str) -> list[tuple[str, str]]:
    """Split a slash-separated DN into ``(KEY, value)`` pairs, validating keys."""
    if not dn or not dn.startswith("/"):
        raise InvalidBody(f"DN {dn!r} must begin with '/'")
    parts = []
    for comp in dn[1:].split("/"):
        key, sep, value = comp.partition("=")
        if not sep or key not in DN_KEYS or not value:
            raise InvalidBody(f"DN component {comp!r} in {dn!r} is not KEY=value")
        parts.append((key, value))
    return parts


@dataclass(frozen=True, kw_only=True)
class Principal:
    user_dn: str
    ca_dn: str

    def validate(self) -> None:
        dn_components(self.user_dn)
        dn_components(self.ca_dn)

    def __str__(self) -> str:
        return f"{self.user_dn} (CA {self.ca_dn})"


def _tuple(obj, name: str) -> None:
    value = getattr(obj, name)
    if not isinstance(value, tuple):
        object.__setattr__(obj, name, tuple(value))


# -- header and bodies ------------------------------------------------------------


@dataclass(frozen=True, kw_only=True)
class CertHeader:
    cert_type: CertType
    signature_alg: str = DEFAULT_SIGNATURE_ALG
    canon_alg: str = CANON_ALG
    version: str = CERT_VERSION
    uid: str
    issuer: Principal
    validity_begin: datetime
    validity_end: datetime

    def validate(self) -> None:
        if self.canon_alg != CANON_ALG:
            raise InvalidBody(f"unknown canonicalization {self.canon_alg!r}")
        parts = self.uid.strip('"').split("#")
        if len(parts) != 3 or not all(parts):
            raise InvalidBody(f"UID {self.uid!r} is not host#hex#timestamp")
        self.issuer.validate()
        if not self.validity_begin < self.validity_end:
            raise InvalidBody("validity period begins after it ends")


@dataclass(frozen=True, kw_only=True)
class CAInfo:
    ca_dn: str
    ca_public_key: str
    id_dirs: tuple[str, ...] = ()
    crl_dirs: tuple[str, ...] = ()

    def __post_init__(self):
        _tuple(self, "id_dirs")
        _tuple(self, "crl_dirs")

    def validate(self) -> None:
        dn_components(self.ca_dn)
        if not self.ca_public_key:
            raise InvalidBody(f"CA {self.ca_dn} has no public key")


@dataclass(frozen=True, kw_only=True)
class PolicyCert:
    resource_name: str
    ca_infos: tuple[CAInfo, ...]
    uc_issuers: tuple[Principal, ...]
    uc_dirs: tuple[str, ...] = ()
    attr_dirs: tuple[str, ...] = ()
    cache_time: int = 3600

    cert_type = CertType.POLICY

    def __post_init__(self):
        for name in ("ca_infos", "uc_issuers", "uc_dirs", "attr_dirs"):
            _tuple(self, name)

    def validate(self) -> None:
        _check_resource(self.resource_name)
        if not self.ca_infos:
            raise InvalidBody("policy certificate names no CA")
        if not self.uc_issuers:
            raise InvalidBody("policy certificate names no stakeholder")
        for ca in self.ca_infos:
            ca.validate()
        known = {ca.ca_dn for ca in self.ca_infos}
        for p in self.uc_issuers:
            p.validate()
            if p.ca_dn not in known:
                raise InvalidBody(f"stakeholder {p.user_dn} uses CA {p.ca_dn} not listed in CAInfo")
        if not isinstance(self.cache_time, int) or self.cache_time < 0:
            raise InvalidBody("cache time must be a non-negative integer")

    def ca_info(self, ca_dn: str) -> CAInfo | None:
        for ca in self.ca_infos:
            if ca.ca_dn == ca_dn:
                return ca
        return None


@dataclass(frozen=True, kw_only=True)
class AttributeInfo:
    attr_type: AttrType
    attr_name: str
    attr_value: str = ""
    authorities: tuple[Principal, ...] = ()

    def __post_init__(self):
        _tuple(self, "authorities")

    def validate(self) -> None:
        if not self.attr_name:
            raise InvalidBody("AttributeInfo without a name")
        if self.attr_type is AttrType.AKENTI and not self.authorities:
            raise InvalidBody(f"AKENTI attribute {self.attr_name!r} names no authority")
        for p in self.authorities:
            p.validate()


@dataclass(frozen=True, kw_only=True)
class UseConditionCert:
    critical: bool = False
    scope: Scope = Scope.SUBTREE
    resource_name: str
    constraint_text: str
    attribute_infos: tuple[AttributeInfo, ...] = ()
    rights: tuple[str, ...]
    attr_dirs: tuple[str, ...] = ()

    cert_type = CertType.USE_CONDITION

    def __post_init__(self):
        for name in ("attribute_infos", "attr_dirs"):
            _tuple(self, name)
        object.__setattr__(self, "rights", tuple(sorted(set(self.rights))))

    @cached_property
    def constraint(self):
        from .constraints import parse_constraint

        return parse_constraint(self.constraint_text)

    @property
    def declared_akenti(self) -> frozenset[str]:
        return frozenset(
            i.attr_name for i in self.attribute_infos if i.attr_type is AttrType.AKENTI
        )

    def attribute_info(self, name: str) -> AttributeInfo | None:
        for info in self.attribute_infos:
            if info.attr_name == name:
                return info
        return None

    def validate(self) -> None:
        from .constraints import ConstraintSyntaxError, referenced_names

        _check_resource(self.resource_name)
        if not self.rights:
            raise InvalidBody("use-condition grants no rights")
        for r in self.rights:
            if not _ACTION_RE.match(r):
                raise InvalidBody(f"bad action name {r!r}")
        for info in self.attribute_infos:
            info.validate()
        try:
            names = referenced_names(self.constraint)
        except ConstraintSyntaxError as exc:
            raise InvalidBody(f"constraint does not parse: {exc}") from None
        akenti = [i.attr_name for i in self.attribute_infos if i.attr_type is AttrType.AKENTI]
        for name in names & set(akenti):
            if akenti.count(name) != 1:
                raise InvalidBody(f"AKENTI attribute {name!r} declared more than once")


@dataclass(frozen=True, kw_only=True)
class AttributeCert:
    subject: Principal
    attr_name: str
    attr_value: str

    cert_type = CertType.ATTRIBUTE

    def validate(self) -> None:
        self.subject.validate()
        if not self.attr_name or not self.attr_value:
            raise InvalidBody("attribute certificate needs a name and a value")


@dataclass(frozen=True, kw_only=True)
class ConditionalAction:
    action: str
    constraint_text: str


@dataclass(frozen=True, kw_only=True)
class CapabilityCert:
    subject: Principal
    subject_public_key: str
    resource_name: str
    granted_actions: tuple[str, ...] = ()
    conditional_actions: tuple[ConditionalAction, ...] = ()

    cert_type = CertType.CAPABILITY

    def __post_init__(self):
        object.__setattr__(self, "granted_actions", tuple(sorted(set(self.granted_actions))))
        _tuple(self, "conditional_actions")

    def validate(self) -> None:
        self.subject.validate()
        _check_resource(self.resource_name)
        if not self.granted_actions and not self.conditional_actions:
            raise InvalidBody("capability carries no actions")


@dataclass(frozen=True, kw_only=True)
class IdentityCert:
    subject: Principal
    public_key: str

    cert_type = CertType.IDENTITY

    def validate(self) -> None:
        self.subject.validate()
        if not self.public_key:
            raise InvalidBody("identity certificate without a key")


@dataclass(frozen=True, kw_only=True)
class RevocationList:
    revoked_uids: tuple[str, ...] = ()
    revoked_dns: tuple[str, ...] = ()

    cert_type = CertType.REVOCATION

    def __post_init__(self):
        _tuple(self, "revoked_uids")
        _tuple(self, "revoked_dns")

    def validate(self) -> None:
        pass


BODY_TYPES = {
    CertType.POLICY: PolicyCert,
    CertType.USE_CONDITION: UseConditionCert,
    CertType.ATTRIBUTE: AttributeCert,
    CertType.CAPABILITY: CapabilityCert,
    CertType.IDENTITY: IdentityCert,
    CertType.REVOCATION: RevocationList,
}


def _check_resource(name: str) -> None:
    if not name or name.startswith("/") or name.endswith("/") or "//" in name:
        raise InvalidBody(f"bad resource path {name!r}")


@dataclass(frozen=True)
class AkentiCertificate:
    header: CertHeader
    body: object
    signature: bytes

    @property
    def uid(self) -> str:
        return self.header.uid

    @property
    def issuer(self) -> Principal:
        return self.header.issuer

    @property
    def cert_type(self) -> CertType:
        return self.header.cert_type


# -- canonical form -------------------------------------------------------------------


def _escape(value: str) -> str:
    out = (
        value.replace("\\", "\\\\")
        .replace("\n", "\\n")
        .replace("\r", "\\r")
        .replace("\t", "\\t")
    )
    if out.endswith(" "):
        out = out[:-1] + "\\s"
    return out


def _scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, datetime):
        return format_timestamp(value)
    return str(value)


def _emit(prefix: str, value, lines: list[str]) -> None:
    if dataclasses.is_dataclass(value):
        for f in dataclasses.fields(value):
            _emit(f"{prefix}.{f.name}", getattr(value, f.name), lines)
    elif isinstance(value, tuple):
        for i, item in enumerate(value):
            _emit(f"{prefix}[{i}]", item, lines)
    else:
        lines.append(f"{prefix}={_escape(_scalar(value))}")


def canonicalize(header: CertHeader, body) -> bytes:
    """Ak1CanAlg bytes of a header and body; raises InvalidBody on bad input."""
    header.validate()
    body.validate()
    if header.cert_type is not body.cert_type:
        raise InvalidBody(
            f"header type {header.cert_type.value} does not match body {type(body).__name__}"
        )
    lines: list[str] = []
    _emit("header", header, lines)
    _emit("body", body, lines)
    return "".join(line + "\n" for line in lines).encode("utf-8")


# -- issuing, signing, verifying --------------------------------------------------


def new_uid(now: datetime | None = None) -> str:
    now = _second(now or datetime.now(timezone.utc))
    stamp = now.strftime("%a %b %d %H:%M:%S UTC %Y")
    return f"{socket.gethostname() or 'localhost'}#{secrets.token_hex(4)}#{stamp}"


def make_header(
    body,
    issuer: Principal,
    begin: datetime,
    end: datetime | None = None,
    *,
    lifetime: timedelta | None = None,
    uid: str | None = None,
) -> CertHeader:
    begin = _second(begin)
    if end is None:
        end = begin + (lifetime or timedelta(days=365))
    return CertHeader(
        cert_type=body.cert_type,
        uid=uid or new_uid(begin),
        issuer=issuer,
        validity_begin=begin,
        validity_end=_second(end),
    )


def sign_certificate(
    body, header: CertHeader, signer_key: KeyPair, registered_key=None
) -> AkentiCertificate:
    """Sign header+body with `signer_key`.

    When `registered_key` (the issuer's known public key) is given the signer
    must hold its private half, else KeyMismatch.
    """
    if registered_key is not None and not same_public_key(signer_key.public_key, registered_key):
        raise KeyMismatch(f"signing key does not belong to {header.issuer.user_dn}")
    header = dataclasses.replace(header, signature_alg=signer_key.signature_alg)
    signature = signer_key.sign(canonicalize(header, body))
    return AkentiCertificate(header, body, signature)


def verify_signature(cert: AkentiCertificate, issuer_public_key, allow_legacy: bool = False) -> bool:
    """True iff the signature validates over the certificate's canonical bytes."""
    try:
        data = canonicalize(cert.header, cert.body)
    except (InvalidBody, MalformedTimestamp):
        return False
    return verify_bytes(
        cert.header.signature_alg, issuer_public_key, data, cert.signature, allow_legacy
    )


def validate_period(cert: AkentiCertificate | CertHeader, now: datetime) -> Validity:
    header = cert.header if isinstance(cert, AkentiCertificate) else cert
    now = _utc(now)
    if now < header.validity_begin:
        return Validity.NOT_YET_VALID
    if now > header.validity_end:
        return Validity.EXPIRED
    return Validity.VALID


def public_key_text(keypair: KeyPair) -> str:
    return encode_public_key(keypair.public_key)
