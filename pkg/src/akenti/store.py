"""Certificate retrieval from ``file:`` and ``http:`` directories, with caching.

A directory fetch is cached per URL for the governing policy's CacheTime.
``http:`` directories answer ``GET <url>/`` with newline-separated file names
and ``GET <url>/<name>`` with certificate text.
"""

from __future__ import annotations

import enum
import logging
import threading
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from .certs import (
    AkentiCertificate,
    CertType,
    CertificateError,
    Principal,
    Scope,
    Validity,
    validate_period,
    verify_signature,
)
from .keys import UnsupportedAlgorithm, decode_public_key
from .pki import identity_public_key, pki_verify, revoked_by
from .xmlcodec import parse_certificate

log = logging.getLogger(__name__)


class SourceUnavailable(Exception):
    """A certificate directory could not be read (as opposed to being empty)."""


class SourceKind(str, enum.Enum):
    USE_CONDITION_DIR = "UseConditionDir"
    ATTR_DIR = "AttrDir"
    ID_DIR = "IdDir"
    CRL_DIR = "CrlDir"
    TRUSTED_ROOT = "TrustedRoot"


@dataclass(frozen=True)
class CertSource:
    url: str
    kind: SourceKind

    @property
    def scheme(self) -> str:
        return urllib.parse.urlparse(self.url).scheme


@dataclass(frozen=True)
class CacheEntry:
    key: tuple
    certs: tuple[AkentiCertificate, ...]
    fetched_at: datetime
    ttl: float

    def fresh(self, now: datetime, ttl: float | None = None) -> bool:
        """Younger than `ttl` (default: the ttl at fetch time); a clock that went back means stale."""
        age = (now - self.fetched_at).total_seconds()
        return 0 <= age < (self.ttl if ttl is None else ttl)


def file_url(path: str | Path) -> str:
    return "file:" + str(Path(path).resolve())


class FileFetcher:
    def read(self, url: str) -> list[tuple[str, bytes]]:
        path = Path(urllib.parse.unquote(urllib.parse.urlparse(url).path))
        if not path.is_dir():
            raise SourceUnavailable(f"{url}: no such directory")
        try:
            return [(p.name, p.read_bytes()) for p in sorted(path.glob("*.xml")) if p.is_file()]
        except OSError as exc:
            raise SourceUnavailable(f"{url}: {exc}") from None


class HttpFetcher:
    def __init__(self, timeout: float = 5.0):
        self.timeout = timeout

    def _get(self, url: str) -> bytes:
        try:
            with urllib.request.urlopen(url, timeout=self.timeout) as resp:
                return resp.read()
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise SourceUnavailable(f"{url}: {exc}") from None

    def read(self, url: str) -> list[tuple[str, bytes]]:
        base = url.rstrip("/") + "/"
        names = [n.strip() for n in self._get(base).decode("utf-8").splitlines() if n.strip()]
        return [(n, self._get(base + urllib.parse.quote(n))) for n in names]


class CertStore:
    """Shared, thread-safe certificate cache keyed by directory URL.

    `fetch_count` counts real directory reads; cache hits don't touch it.
    """

    def __init__(self, fetchers: dict | None = None):
        self.fetchers = fetchers or {"file": FileFetcher(), "http": HttpFetcher()}
        self._cache: dict[tuple, CacheEntry] = {}
        self._lock = threading.Lock()
        self.fetch_count = 0

    def clear(self) -> None:
        with self._lock:
            self._cache.clear()

    def fetch_directory(
        self, source: CertSource, now: datetime, ttl: float = 0
    ) -> list[AkentiCertificate]:
        key = (source.url,)
        with self._lock:
            entry = self._cache.get(key)
        if entry is not None and entry.fresh(now, ttl):
            return list(entry.certs)
        fetcher = self.fetchers.get(source.scheme)
        if fetcher is None:
            raise SourceUnavailable(f"{source.url}: unsupported scheme {source.scheme!r}")
        files = fetcher.read(source.url)
        certs = []
        for name, data in files:
            try:
                certs.append(parse_certificate(data))
            except CertificateError as exc:
                log.warning("skipping %s in %s: %s", name, source.url, exc)
        entry = CacheEntry(key, tuple(certs), now, ttl)
        with self._lock:
            self.fetch_count += 1
            self._cache[key] = entry
        return certs

    # -- trust helpers -------------------------------------------------------------

    def crls_for(self, ca, now: datetime, ttl: float) -> list[AkentiCertificate]:
        crls = []
        for url in ca.crl_dirs:
            try:
                crls.extend(self.fetch_directory(CertSource(url, SourceKind.CRL_DIR), now, ttl))
            except SourceUnavailable as exc:
                log.warning("revocation list source unavailable, continuing: %s", exc)
        return [c for c in crls if c.cert_type is CertType.REVOCATION]

    def principal_key(self, principal: Principal, policy, now: datetime):
        """Public key of `principal`, taken from a verified identity under `policy`'s CAs."""
        ca = policy.ca_info(principal.ca_dn)
        if ca is None:
            return None
        ttl = policy.cache_time
        crls = self.crls_for(ca, now, ttl)
        for url in ca.id_dirs:
            for cert in self.fetch_directory(CertSource(url, SourceKind.ID_DIR), now, ttl):
                if (
                    cert.cert_type is CertType.IDENTITY
                    and cert.body.subject == principal
                    and pki_verify(cert, [ca], crls, now)
                ):
                    return identity_public_key(cert)
        return None

    def verify_issued_by(self, cert: AkentiCertificate, allowed, policy, now: datetime) -> str | None:
        """None if `cert` is in period and signed by one of `allowed`, else a reason."""
        if cert.issuer not in allowed:
            return f"issuer {cert.issuer.user_dn} is not an accepted issuer"
        key = self.principal_key(cert.issuer, policy, now)
        if key is None:
            return f"no verifiable identity for issuer {cert.issuer.user_dn}"
        try:
            if not verify_signature(cert, key):
                return "signature does not verify"
        except UnsupportedAlgorithm as exc:
            return str(exc)
        period = validate_period(cert, now)
        if period is not Validity.VALID:
            return f"validity period: {period.value}"
        return None

    # -- queries --------------------------------------------------------------------

    def find_use_conditions(self, resource_path: str, chain, now: datetime) -> list[AkentiCertificate]:
        """Verified use-conditions applying to `resource_path`, gathered along `chain`."""
        found: dict[str, AkentiCertificate] = {}
        for level in chain.levels:
            policy = level.effective
            for url in policy.uc_dirs:
                source = CertSource(url, SourceKind.USE_CONDITION_DIR)
                for cert in self.fetch_directory(source, now, policy.cache_time):
                    if cert.cert_type is not CertType.USE_CONDITION:
                        continue
                    uc = cert.body
                    if uc.resource_name != level.resource:
                        continue
                    applies = level.resource == resource_path or (
                        uc.scope is Scope.SUBTREE and resource_path.startswith(level.resource + "/")
                    )
                    if not applies or cert.uid in found:
                        continue
                    reason = self.verify_issued_by(cert, policy.uc_issuers, policy, now)
                    if reason:
                        log.info("excluding use-condition %s: %s", cert.uid, reason)
                        continue
                    found[cert.uid] = cert
        return list(found.values())

    def find_attribute_cert(
        self,
        subject: Principal,
        attr_name: str,
        attr_value: str,
        attr_dirs,
        authorities,
        now: datetime,
        policy,
    ) -> AkentiCertificate | None:
        want = attr_value.casefold()
        for url in dict.fromkeys(attr_dirs):
            for cert in self.fetch_directory(CertSource(url, SourceKind.ATTR_DIR), now, policy.cache_time):
                if cert.cert_type is not CertType.ATTRIBUTE:
                    continue
                body = cert.body
                if (
                    body.subject != subject
                    or body.attr_name != attr_name
                    or body.attr_value.casefold() != want
                ):
                    continue
                reason = self.verify_issued_by(cert, authorities, policy, now)
                if reason:
                    log.info("rejecting attribute certificate %s: %s", cert.uid, reason)
                    continue
                return cert
        return None

    def find_attribute_certs(
        self, subject, attr_name, attr_value, attr_dirs, authorities, now, policy
    ) -> bool:
        return (
            self.find_attribute_cert(subject, attr_name, attr_value, attr_dirs, authorities, now, policy)
            is not None
        )

    def check_revocation(self, principal_or_uid, crl_dirs, trusted_cas, now: datetime, ttl: float = 0) -> bool:
        crls = []
        for url in crl_dirs:
            try:
                crls.extend(self.fetch_directory(CertSource(url, SourceKind.CRL_DIR), now, ttl))
            except SourceUnavailable as exc:
                log.warning("revocation list source unavailable, continuing: %s", exc)
        trusted = {ca.ca_dn: decode_public_key(ca.ca_public_key) for ca in trusted_cas}
        return revoked_by(principal_or_uid, crls, trusted, now)
