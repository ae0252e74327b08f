"""Gatekeeper admission: identity verification plus the grid-mapfile."""

from __future__ import annotations

import shlex
from datetime import datetime
from pathlib import Path

from ..certs import AkentiCertificate, CertType
from ..pki import pki_verify
from ..store import CertStore


class NotInMapfile(PermissionError):
    pass


class IdentityRejected(PermissionError):
    pass


def parse_grid_mapfile(text: str) -> dict[str, str]:
    """``"<DN>" <localuser>`` per line; ``#`` starts a comment."""
    table = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        try:
            cols = shlex.split(raw, comments=True)
        except ValueError as exc:
            raise ValueError(f"grid-mapfile line {lineno}: {exc}") from None
        if len(cols) != 2:
            raise ValueError(f"grid-mapfile line {lineno}: expected a DN and a user")
        table[cols[0]] = cols[1]
    return table


def load_grid_mapfile(path: str | Path) -> dict[str, str]:
    return parse_grid_mapfile(Path(path).read_text())


class Gatekeeper:
    def __init__(self, trusted_cas, grid_mapfile: dict[str, str], store: CertStore | None = None):
        self.trusted_cas = list(trusted_cas)
        self.grid_mapfile = grid_mapfile
        self.store = store or CertStore()

    def verify_identity(self, identity: AkentiCertificate, now: datetime) -> None:
        crls = []
        for ca in self.trusted_cas:
            crls.extend(self.store.crls_for(ca, now, 0))
        if identity is None or identity.cert_type is not CertType.IDENTITY:
            raise IdentityRejected("no identity certificate presented")
        if not pki_verify(identity, self.trusted_cas, crls, now):
            raise IdentityRejected(f"identity of {identity.body.subject.user_dn} did not verify")

    def admit(self, identity: AkentiCertificate, now: datetime) -> str:
        self.verify_identity(identity, now)
        dn = identity.body.subject.user_dn
        try:
            return self.grid_mapfile[dn]
        except KeyError:
            raise NotInMapfile(f"{dn} is not in the grid-mapfile") from None


def gatekeeper_admit(identity, grid_mapfile, now, trusted_cas, store=None) -> str:
    return Gatekeeper(trusted_cas, grid_mapfile, store).admit(identity, now)
