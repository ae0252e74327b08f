"""XML text form of Akenti certificates.

Element names follow the published Akenti examples (``AkentiCertificate``,
``SignablePart``, ``Header``, ``PolicyCert``, ``UseConditionCert``,
``AttributeCert``) with ``CapabilityCert``, ``IdentityCert`` and
``RevocationList`` laid out the same way.  Decoding is strict: unknown
elements or attributes and stray text are rejected.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from pathlib import Path

from .certs import (
    AkentiCertificate,
    AttrType,
    AttributeCert,
    AttributeInfo,
    CAInfo,
    CapabilityCert,
    CertHeader,
    CertificateError,
    CertType,
    ConditionalAction,
    IdentityCert,
    InvalidBody,
    MalformedTimestamp,
    PolicyCert,
    Principal,
    RevocationList,
    Scope,
    UseConditionCert,
    canonicalize,
    format_timestamp,
    parse_timestamp,
)
from .keys import b64decode_strict, b64encode

XSI = "http://www.w3.org/2001/XMLSchema-instance"
_ROOT_ATTRS = {f"{{{XSI}}}noNamespaceSchemaLocation", f"{{{XSI}}}schemaLocation"}

_BODY_TAGS = {
    CertType.POLICY: "PolicyCert",
    CertType.USE_CONDITION: "UseConditionCert",
    CertType.ATTRIBUTE: "AttributeCert",
    CertType.CAPABILITY: "CapabilityCert",
    CertType.IDENTITY: "IdentityCert",
    CertType.REVOCATION: "RevocationList",
}
_TAG_TYPES = {tag: t for t, tag in _BODY_TAGS.items()}


class ParseError(CertificateError):
    """Text is not well-formed or contains elements the format does not define."""


class SchemaError(CertificateError):
    """A required field is missing or a decoded value breaks an invariant."""


# -- serialization ---------------------------------------------------------------


def _sub(parent: ET.Element, tag: str, text: str | None = None, **attrs) -> ET.Element:
    el = ET.SubElement(parent, tag, attrs)
    if text is not None:
        el.text = text
    return el


def _principal(parent: ET.Element, tag: str, p: Principal) -> None:
    el = _sub(parent, tag)
    _sub(el, "UserDN", p.user_dn)
    _sub(el, "CADN", p.ca_dn)


def _urls(parent: ET.Element, tag: str, urls) -> None:
    el = _sub(parent, tag)
    for url in urls:
        _sub(el, "URL", url)


def _write_body(parent: ET.Element, body) -> None:
    if isinstance(body, PolicyCert):
        el = _sub(parent, "PolicyCert")
        _sub(el, "ResourceName", body.resource_name)
        for ca in body.ca_infos:
            c = _sub(el, "CAInfo")
            _sub(c, "CADN", ca.ca_dn)
            _sub(c, "X509Certificate", ca.ca_public_key)
            _urls(c, "IdDirs", ca.id_dirs)
            _urls(c, "CRLDirs", ca.crl_dirs)
        group = _sub(el, "UseCondIssuerGroup")
        for p in body.uc_issuers:
            _principal(group, "Principal", p)
        for url in body.uc_dirs:
            _sub(group, "URL", url)
        _urls(el, "AttrDirs", body.attr_dirs)
        _sub(el, "CacheTime", str(body.cache_time))
    elif isinstance(body, UseConditionCert):
        el = _sub(
            parent,
            "UseConditionCert",
            critical="true" if body.critical else "false",
            scope=body.scope.value,
        )
        _sub(el, "ResourceName", body.resource_name)
        cond = _sub(el, "Condition")
        _sub(cond, "Constraint", body.constraint_text)
        for info in body.attribute_infos:
            i = _sub(cond, "AttributeInfo", type=info.attr_type.value)
            _sub(i, "AttrName", info.attr_name)
            _sub(i, "AttrValue", info.attr_value)
            for p in info.authorities:
                _principal(i, "Principal", p)
        _sub(el, "Rights", ",".join(body.rights))
        if body.attr_dirs:
            _urls(el, "AttrDirs", body.attr_dirs)
    elif isinstance(body, AttributeCert):
        el = _sub(parent, "AttributeCert")
        _principal(el, "SubjectAndCA", body.subject)
        _sub(el, "AttrName", body.attr_name)
        _sub(el, "AttrValue", body.attr_value)
    elif isinstance(body, CapabilityCert):
        el = _sub(parent, "CapabilityCert")
        _principal(el, "Subject", body.subject)
        _sub(el, "SubjectPublicKey", body.subject_public_key)
        _sub(el, "ResourceName", body.resource_name)
        g = _sub(el, "GrantedActions")
        for a in body.granted_actions:
            _sub(g, "Action", a)
        c = _sub(el, "ConditionalActions")
        for ca in body.conditional_actions:
            _sub(c, "Conditional", ca.constraint_text, action=ca.action)
    elif isinstance(body, IdentityCert):
        el = _sub(parent, "IdentityCert")
        _principal(el, "Subject", body.subject)
        _sub(el, "PublicKey", body.public_key)
    elif isinstance(body, RevocationList):
        el = _sub(parent, "RevocationList")
        for uid in body.revoked_uids:
            _sub(el, "RevokedUID", uid)
        for dn in body.revoked_dns:
            _sub(el, "RevokedDN", dn)
    else:
        raise TypeError(f"not a certificate body: {type(body).__name__}")


def serialize_certificate(cert: AkentiCertificate) -> str:
    root = ET.Element("AkentiCertificate")
    signable = _sub(root, "SignablePart")
    h = cert.header
    header = _sub(
        signable,
        "Header",
        Type=h.cert_type.value,
        SignatureDigestAlg=h.signature_alg,
        CanonAlg=h.canon_alg,
        Version=h.version,
    )
    _sub(header, "UID", h.uid)
    _principal(header, "Issuer", h.issuer)
    _sub(
        header,
        "ValidityPeriod",
        Begin=format_timestamp(h.validity_begin),
        End=format_timestamp(h.validity_end),
    )
    _write_body(signable, cert.body)
    _sub(root, "Signature", b64encode(cert.signature))
    ET.indent(root, space="  ")
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def write_certificate(cert: AkentiCertificate, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(serialize_certificate(cert), encoding="utf-8")
    return path


# -- parsing ------------------------------------------------------------------------


def _where(el: ET.Element) -> str:
    return f"<{el.tag}>"


def _blank(text: str | None) -> bool:
    return text is None or not text.strip()


def _check(el: ET.Element, children: set[str], attrs: set[str] = frozenset()) -> None:
    extra = set(el.attrib) - set(attrs)
    if el.tag == "AkentiCertificate":
        extra -= _ROOT_ATTRS
    if extra:
        raise ParseError(f"unexpected attribute(s) {sorted(extra)} on {_where(el)}")
    if len(el) and not _blank(el.text):
        raise ParseError(f"stray text in {_where(el)}")
    for child in el:
        if child.tag not in children:
            raise ParseError(f"unexpected element <{child.tag}> in {_where(el)}")
        if not _blank(child.tail):
            raise ParseError(f"stray text after <{child.tag}> in {_where(el)}")


def _text(el: ET.Element, attrs: set[str] = frozenset()) -> str:
    if len(el):
        raise ParseError(f"{_where(el)} must contain text only")
    _check(el, set(), attrs)
    return (el.text or "").strip()


def _one(el: ET.Element, tag: str, required: bool = True) -> ET.Element | None:
    found = el.findall(tag)
    if len(found) > 1:
        raise SchemaError(f"{_where(el)} has {len(found)} <{tag}> elements, expected one")
    if not found:
        if required:
            raise SchemaError(f"{_where(el)} is missing <{tag}>")
        return None
    return found[0]


def _one_text(el: ET.Element, tag: str, required: bool = True) -> str:
    child = _one(el, tag, required)
    return "" if child is None else _text(child)


def _attr(el: ET.Element, name: str) -> str:
    if name not in el.attrib:
        raise SchemaError(f"{_where(el)} is missing attribute {name}")
    return el.attrib[name]


def _read_principal(el: ET.Element) -> Principal:
    _check(el, {"UserDN", "CADN"})
    return Principal(user_dn=_one_text(el, "UserDN"), ca_dn=_one_text(el, "CADN"))


def _read_urls(el: ET.Element | None) -> tuple[str, ...]:
    if el is None:
        return ()
    _check(el, {"URL"})
    return tuple(_text(u) for u in el.findall("URL"))


def _enum(cls, value: str, where: str):
    try:
        return cls(value)
    except ValueError:
        raise SchemaError(f"{where}: {value!r} is not one of {[m.value for m in cls]}") from None


def _read_policy(el: ET.Element) -> PolicyCert:
    _check(el, {"ResourceName", "CAInfo", "UseCondIssuerGroup", "AttrDirs", "CacheTime"})
    cas = []
    for c in el.findall("CAInfo"):
        _check(c, {"CADN", "X509Certificate", "IdDirs", "CRLDirs"})
        cas.append(
            CAInfo(
                ca_dn=_one_text(c, "CADN"),
                ca_public_key="".join(_one_text(c, "X509Certificate").split()),
                id_dirs=_read_urls(_one(c, "IdDirs", False)),
                crl_dirs=_read_urls(_one(c, "CRLDirs", False)),
            )
        )
    group = _one(el, "UseCondIssuerGroup")
    _check(group, {"Principal", "URL"})
    cache = _one_text(el, "CacheTime")
    if not cache.isdigit():
        raise SchemaError(f"CacheTime {cache!r} is not a non-negative integer")
    return PolicyCert(
        resource_name=_one_text(el, "ResourceName"),
        ca_infos=tuple(cas),
        uc_issuers=tuple(_read_principal(p) for p in group.findall("Principal")),
        uc_dirs=tuple(_text(u) for u in group.findall("URL")),
        attr_dirs=_read_urls(_one(el, "AttrDirs", False)),
        cache_time=int(cache),
    )


def _read_bool(value: str, where: str) -> bool:
    if value not in ("true", "false"):
        raise SchemaError(f"{where}: expected true or false, got {value!r}")
    return value == "true"


def _read_use_condition(el: ET.Element) -> UseConditionCert:
    _check(el, {"ResourceName", "Condition", "Rights", "AttrDirs"}, {"critical", "scope"})
    cond = _one(el, "Condition")
    _check(cond, {"Constraint", "AttributeInfo"})
    infos = []
    for i in cond.findall("AttributeInfo"):
        _check(i, {"AttrName", "AttrValue", "Principal"}, {"type"})
        infos.append(
            AttributeInfo(
                attr_type=_enum(AttrType, _attr(i, "type"), "AttributeInfo type"),
                attr_name=_one_text(i, "AttrName"),
                attr_value=_one_text(i, "AttrValue", required=False),
                authorities=tuple(_read_principal(p) for p in i.findall("Principal")),
            )
        )
    rights = [r for r in _one_text(el, "Rights").replace(",", " ").split() if r]
    return UseConditionCert(
        critical=_read_bool(el.attrib.get("critical", "false"), "critical"),
        scope=_enum(Scope, el.attrib.get("scope", Scope.SUBTREE.value), "scope"),
        resource_name=_one_text(el, "ResourceName"),
        constraint_text=_one_text(cond, "Constraint"),
        attribute_infos=tuple(infos),
        rights=tuple(rights),
        attr_dirs=_read_urls(_one(el, "AttrDirs", False)),
    )


def _read_attribute(el: ET.Element) -> AttributeCert:
    _check(el, {"SubjectAndCA", "AttrName", "AttrValue"})
    return AttributeCert(
        subject=_read_principal(_one(el, "SubjectAndCA")),
        attr_name=_one_text(el, "AttrName"),
        attr_value=_one_text(el, "AttrValue"),
    )


def _read_capability(el: ET.Element) -> CapabilityCert:
    _check(
        el,
        {"Subject", "SubjectPublicKey", "ResourceName", "GrantedActions", "ConditionalActions"},
    )
    granted = _one(el, "GrantedActions", False)
    actions: list[str] = []
    if granted is not None:
        _check(granted, {"Action"})
        actions = [_text(a) for a in granted.findall("Action")]
    conds = _one(el, "ConditionalActions", False)
    conditional = []
    if conds is not None:
        _check(conds, {"Conditional"})
        for c in conds.findall("Conditional"):
            conditional.append(
                ConditionalAction(action=_attr(c, "action"), constraint_text=_text(c, {"action"}))
            )
    return CapabilityCert(
        subject=_read_principal(_one(el, "Subject")),
        subject_public_key=_one_text(el, "SubjectPublicKey"),
        resource_name=_one_text(el, "ResourceName"),
        granted_actions=tuple(actions),
        conditional_actions=tuple(conditional),
    )


def _read_identity(el: ET.Element) -> IdentityCert:
    _check(el, {"Subject", "PublicKey"})
    return IdentityCert(
        subject=_read_principal(_one(el, "Subject")),
        public_key="".join(_one_text(el, "PublicKey").split()),
    )


def _read_revocation(el: ET.Element) -> RevocationList:
    _check(el, {"RevokedUID", "RevokedDN"})
    return RevocationList(
        revoked_uids=tuple(_text(u) for u in el.findall("RevokedUID")),
        revoked_dns=tuple(_text(d) for d in el.findall("RevokedDN")),
    )


_READERS = {
    "PolicyCert": _read_policy,
    "UseConditionCert": _read_use_condition,
    "AttributeCert": _read_attribute,
    "CapabilityCert": _read_capability,
    "IdentityCert": _read_identity,
    "RevocationList": _read_revocation,
}


def _read_header(el: ET.Element) -> CertHeader:
    _check(el, {"UID", "Issuer", "ValidityPeriod"}, {"Type", "SignatureDigestAlg", "CanonAlg", "Version"})
    period = _one(el, "ValidityPeriod")
    _check(period, set(), {"Begin", "End"})
    try:
        begin = parse_timestamp(_attr(period, "Begin"))
        end = parse_timestamp(_attr(period, "End"))
    except MalformedTimestamp as exc:
        raise SchemaError(str(exc)) from None
    return CertHeader(
        cert_type=_enum(CertType, _attr(el, "Type"), "Header Type"),
        signature_alg=_attr(el, "SignatureDigestAlg"),
        canon_alg=_attr(el, "CanonAlg"),
        version=_attr(el, "Version"),
        uid=_one_text(el, "UID"),
        issuer=_read_principal(_one(el, "Issuer")),
        validity_begin=begin,
        validity_end=end,
    )


def parse_certificate(text: str | bytes) -> AkentiCertificate:
    """Decode certificate text; ParseError for malformed XML, SchemaError for bad content."""
    if isinstance(text, str):
        text = text.encode("utf-8")
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        line, col = exc.position
        raise ParseError(f"malformed XML at line {line}, column {col}: {exc}") from None
    if root.tag != "AkentiCertificate":
        raise ParseError(f"root element is <{root.tag}>, expected <AkentiCertificate>")
    _check(root, {"SignablePart", "Signature"})
    signable = _one(root, "SignablePart")
    _check(signable, {"Header"} | set(_READERS))
    header = _read_header(_one(signable, "Header"))
    bodies = [c for c in signable if c.tag in _READERS]
    if len(bodies) != 1:
        raise SchemaError(f"<SignablePart> holds {len(bodies)} certificate bodies, expected one")
    if _TAG_TYPES[bodies[0].tag] is not header.cert_type:
        raise SchemaError(
            f"header Type {header.cert_type.value} does not match body <{bodies[0].tag}>"
        )
    body = _READERS[bodies[0].tag](bodies[0])
    try:
        sig_text = _one_text(root, "Signature")
        signature = b64decode_strict(sig_text) if sig_text else b""
    except ValueError as exc:
        raise SchemaError(f"<Signature>: {exc}") from None
    try:
        canonicalize(header, body)
    except (InvalidBody, MalformedTimestamp) as exc:
        raise SchemaError(f"<{bodies[0].tag}>: {exc}") from None
    return AkentiCertificate(header, body, signature)


def read_certificate(path: str | Path) -> AkentiCertificate:
    return parse_certificate(Path(path).read_bytes())
