"""Authorization callouts: the seam between the job manager and a decision function.

Callouts are configured by abstract name in a text file::

    callout gram_authorization builtin:akenti
    callout gram_authorization remote:127.0.0.1:7468
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from ..certs import AkentiCertificate, Principal
from ..engine import AuthorizationDecision, SystemFailure
from ..service import DecisionClient, decision_from_wire
from ..xmlcodec import serialize_certificate
from .rsl import RSLRequest

GRAM_AUTHORIZATION = "gram_authorization"
ACTIONS = ("start", "cancel", "query", "signal", "suspend", "resume")


class CalloutNotConfigured(LookupError):
    pass


class AuthzSystemError(RuntimeError):
    """The authorization system failed; the request is refused, never allowed."""


@dataclass(frozen=True)
class CalloutRequest:
    requesting_user: Principal
    requesting_identity: AkentiCertificate
    job_owner: Principal
    action: str
    job_id: str
    rsl: RSLRequest | None
    resource: str
    system: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ValueError(f"unknown job action {self.action!r}")

    def to_wire(self) -> dict:
        return {
            "subject_dn": self.requesting_user.user_dn,
            "subject_ca_dn": self.requesting_user.ca_dn,
            "identity_cert": serialize_certificate(self.requesting_identity),
            "resource": self.resource,
            "actions": [self.action],
            "system": dict(self.system),
            "want_capability": False,
        }


class CalloutRegistry:
    """Abstract callout names mapped to ``builtin:<id>`` or ``remote:<host>:<port>``.

    `calls` counts dispatched callouts.
    """

    def __init__(self, entries: dict[str, str] | None = None, builtins: dict | None = None):
        self.entries = dict(entries or {})
        self.builtins = dict(builtins or {})
        self.calls = 0
        self._lock = threading.Lock()
        for name, desc in self.entries.items():
            _split_descriptor(desc)

    @classmethod
    def parse(cls, text: str, builtins: dict | None = None) -> "CalloutRegistry":
        entries: dict[str, str] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            cols = line.split()
            if len(cols) != 3 or cols[0] != "callout":
                raise ValueError(f"callout config line {lineno}: expected 'callout <name> <descriptor>'")
            if cols[1] in entries:
                raise ValueError(f"callout {cols[1]!r} configured twice")
            entries[cols[1]] = cols[2]
        return cls(entries, builtins)

    @classmethod
    def load(cls, path: str | Path, builtins: dict | None = None) -> "CalloutRegistry":
        return cls.parse(Path(path).read_text(), builtins)

    def register(self, name: str, descriptor: str) -> None:
        _split_descriptor(descriptor)
        self.entries[name] = descriptor


def _split_descriptor(desc: str) -> tuple[str, str]:
    kind, sep, rest = desc.partition(":")
    if kind == "builtin" and rest:
        return kind, rest
    if kind == "remote" and rest.rpartition(":")[2].isdigit():
        return kind, rest
    raise ValueError(f"bad callout descriptor {desc!r}")


def dispatch_callout(
    registry: CalloutRegistry, name: str, request: CalloutRequest, now: datetime, timeout: float = 5.0
) -> AuthorizationDecision:
    """Run the named callout and return its decision.

    Any failure to obtain a decision surfaces as AuthzSystemError.
    """
    if name not in registry.entries:
        raise CalloutNotConfigured(f"no callout named {name!r}")
    kind, target = _split_descriptor(registry.entries[name])
    with registry._lock:
        registry.calls += 1
    if kind == "builtin":
        engine = registry.builtins.get(target)
        if engine is None:
            raise CalloutNotConfigured(f"builtin decision function {target!r} is not available")
        try:
            return engine.authorize(
                request.requesting_user,
                request.requesting_identity,
                request.resource,
                [request.action],
                request.system,
                now,
            )
        except SystemFailure as exc:
            raise AuthzSystemError(str(exc)) from exc
    host, _, port = target.rpartition(":")
    try:
        payload = DecisionClient(host, int(port), timeout).request(request.to_wire())
        return decision_from_wire(request.requesting_user, request.resource, payload)
    except SystemFailure as exc:
        raise AuthzSystemError(str(exc)) from exc
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise AuthzSystemError(f"decision service {target} unreachable: {exc}") from exc
