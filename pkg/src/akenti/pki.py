"""A small self-contained PKI standing in for X.509 identity certificates.

Identities are ordinary Akenti envelopes with an ``IdentityCert`` body,
signed by a CA whose public key is distributed through ``CAInfo`` records.
Revocation lists are ``RevocationList`` envelopes signed by the same CA.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta

from .certs import (
    AkentiCertificate,
    CAInfo,
    CertType,
    IdentityCert,
    Principal,
    RevocationList,
    Validity,
    make_header,
    sign_certificate,
    validate_period,
    verify_signature,
)
from .keys import KeyPair, UnsupportedAlgorithm, decode_public_key

log = logging.getLogger(__name__)


class UnknownCA(Exception):
    pass


@dataclass
class CertificateAuthority:
    dn: str
    keypair: KeyPair
    root: AkentiCertificate | None = field(default=None, init=False)

    @property
    def principal(self) -> Principal:
        return Principal(user_dn=self.dn, ca_dn=self.dn)

    def info(self, id_dirs=(), crl_dirs=()) -> CAInfo:
        return CAInfo(
            ca_dn=self.dn,
            ca_public_key=self.keypair.public_text,
            id_dirs=tuple(id_dirs),
            crl_dirs=tuple(crl_dirs),
        )

    def issue_crl(
        self,
        begin: datetime,
        end: datetime,
        *,
        uids=(),
        dns=(),
        uid: str | None = None,
    ) -> AkentiCertificate:
        body = RevocationList(revoked_uids=tuple(uids), revoked_dns=tuple(dns))
        return sign_certificate(body, make_header(body, self.principal, begin, end, uid=uid), self.keypair)


class MiniPKI:
    """Registry of CA roots able to issue identities."""

    def __init__(self):
        self.cas: dict[str, CertificateAuthority] = {}

    def create_ca(
        self, dn: str, begin: datetime, end: datetime, keypair: KeyPair | None = None
    ) -> CertificateAuthority:
        ca = CertificateAuthority(dn, keypair or KeyPair.generate())
        body = IdentityCert(subject=ca.principal, public_key=ca.keypair.public_text)
        ca.root = sign_certificate(body, make_header(body, ca.principal, begin, end), ca.keypair)
        self.cas[dn] = ca
        return ca

    def issue(
        self,
        ca_dn: str,
        subject_dn: str,
        subject_public_key: str,
        begin: datetime,
        end: datetime,
    ) -> AkentiCertificate:
        if ca_dn not in self.cas:
            raise UnknownCA(f"{ca_dn} is not a registered CA root")
        return pki_issue(self.cas[ca_dn], subject_dn, subject_public_key, begin, end)


def pki_issue(
    ca: CertificateAuthority,
    subject_dn: str,
    subject_public_key: str,
    begin: datetime,
    end: datetime | None = None,
    *,
    lifetime: timedelta | None = None,
) -> AkentiCertificate:
    if ca.root is None:
        raise UnknownCA(f"{ca.dn} has no self-signed root; register it first")
    subject = Principal(user_dn=subject_dn, ca_dn=ca.dn)
    body = IdentityCert(subject=subject, public_key=subject_public_key)
    header = make_header(body, ca.principal, begin, end, lifetime=lifetime)
    return sign_certificate(body, header, ca.keypair)


def _safe_verify(cert: AkentiCertificate, key) -> bool:
    try:
        return verify_signature(cert, key)
    except UnsupportedAlgorithm:
        return False


def revoked_by(
    cert_or_principal, crls, trusted: dict[str, object], now: datetime
) -> bool:
    """True if a valid CRL signed by a trusted CA lists the UID or subject DN."""
    if isinstance(cert_or_principal, AkentiCertificate):
        uid = cert_or_principal.uid
        dn = getattr(cert_or_principal.body, "subject", cert_or_principal.issuer).user_dn
    elif isinstance(cert_or_principal, Principal):
        uid, dn = None, cert_or_principal.user_dn
    else:
        uid, dn = str(cert_or_principal), None
    for crl in crls:
        if crl.cert_type is not CertType.REVOCATION:
            continue
        key = trusted.get(crl.issuer.user_dn)
        if key is None or not _safe_verify(crl, key):
            log.warning("ignoring revocation list %s: not signed by a trusted CA", crl.uid)
            continue
        if validate_period(crl, now) is not Validity.VALID:
            log.warning("ignoring revocation list %s: outside its validity period", crl.uid)
            continue
        if (uid and uid in crl.body.revoked_uids) or (dn and dn in crl.body.revoked_dns):
            return True
    return False


def pki_verify(
    identity: AkentiCertificate, trusted_cas, crls, now: datetime
) -> bool:
    """Check an identity against trusted CAs (CAInfo records), CRLs and its period."""
    if identity.cert_type is not CertType.IDENTITY:
        return False
    trusted = {}
    for ca in trusted_cas:
        try:
            trusted[ca.ca_dn] = decode_public_key(ca.ca_public_key)
        except ValueError:
            log.warning("CA %s carries an undecodable key", ca.ca_dn)
    subject = identity.body.subject
    issuer = identity.issuer
    if issuer.user_dn not in trusted or subject.ca_dn != issuer.user_dn:
        return False
    if not _safe_verify(identity, trusted[issuer.user_dn]):
        return False
    if validate_period(identity, now) is not Validity.VALID:
        return False
    return not revoked_by(identity, crls, trusted, now)


def identity_public_key(identity: AkentiCertificate):
    return decode_public_key(identity.body.public_key)
