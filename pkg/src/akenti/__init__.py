"""Certificate-based authorization engine with a simulated grid job manager."""

from .certs import (
    AkentiCertificate,
    AttributeCert,
    CapabilityCert,
    CertType,
    IdentityCert,
    PolicyCert,
    Principal,
    UseConditionCert,
    canonicalize,
    make_header,
    sign_certificate,
    verify_signature,
)
from .constraints import evaluate, parse_constraint, pretty_print
from .engine import AuthorizationDecision, PolicyEngine, SystemFailure, verify_capability
from .keys import KeyPair
from .store import CertStore
from .xmlcodec import parse_certificate, read_certificate, serialize_certificate, write_certificate

__version__ = "0.1.0"

__all__ = [
    "AkentiCertificate",
    "AttributeCert",
    "AuthorizationDecision",
    "CapabilityCert",
    "CertStore",
    "CertType",
    "IdentityCert",
    "KeyPair",
    "PolicyCert",
    "PolicyEngine",
    "Principal",
    "SystemFailure",
    "UseConditionCert",
    "canonicalize",
    "evaluate",
    "make_header",
    "parse_certificate",
    "parse_constraint",
    "pretty_print",
    "read_certificate",
    "serialize_certificate",
    "sign_certificate",
    "verify_capability",
    "verify_signature",
    "write_certificate",
]
