"""Decision service speaking newline-delimited JSON over a plain TCP stream.

Request line::

    {"subject_dn": ..., "subject_ca_dn": ..., "identity_cert": "<xml>",
     "resource": ..., "actions": [...] | "all", "system": {...},
     "want_capability": false}

Response line::

    {"granted": [...], "conditional": {action: residual}, "denied_reason": ...,
     "evidence": [...], "capability": "<xml>" | null,
     "error": null | {"kind": "denial" | "system", "detail": ...}}
"""

from __future__ import annotations

import json
import logging
import os
import socket
import socketserver
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from .certs import DEFAULT_CAPABILITY_LIFETIME, CertificateError, CertType, Principal, parse_timestamp
from .engine import AuthorizationDecision, PolicyEngine, SystemFailure
from .keys import KeyPair
from .constraints import parse_constraint, pretty_print
from .store import CertStore
from .xmlcodec import parse_certificate, serialize_certificate

log = logging.getLogger(__name__)

REQUEST_FIELDS = ("subject_dn", "subject_ca_dn", "identity_cert", "resource")


class ProtocolError(Exception):
    pass


def _response(decision: AuthorizationDecision | None = None, capability=None, error=None) -> dict:
    if decision is None:
        return {
            "granted": [],
            "conditional": {},
            "denied_reason": None,
            "evidence": [],
            "capability": None,
            "error": error,
        }
    if error is None and decision.denied_reason:
        error = {"kind": "denial", "detail": decision.denied_reason}
    return {
        "granted": sorted(decision.granted),
        "conditional": {a: pretty_print(r) for a, r in sorted(decision.conditional.items())},
        "denied_reason": decision.denied_reason,
        "evidence": list(decision.evidence),
        "capability": capability,
        "error": error,
    }


def system_error(detail: str) -> dict:
    return _response(error={"kind": "system", "detail": detail})


def decision_to_wire(decision: AuthorizationDecision, capability: str | None = None) -> dict:
    return _response(decision, capability)


def decision_from_wire(subject: Principal, resource: str, payload: dict) -> AuthorizationDecision:
    """Rebuild a decision from a response; raises SystemFailure for system errors."""
    error = payload.get("error")
    if error and error.get("kind") == "system":
        raise SystemFailure(error.get("detail", ""))
    return AuthorizationDecision(
        subject,
        resource,
        granted=frozenset(payload.get("granted", [])),
        conditional={a: parse_constraint(t) for a, t in payload.get("conditional", {}).items()},
        denied_reason=payload.get("denied_reason"),
        evidence=tuple(payload.get("evidence", [])),
    )


def _parse_request(line: str) -> dict:
    try:
        req = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise ProtocolError("parse") from None
    if not isinstance(req, dict):
        raise ProtocolError("parse")
    for name in REQUEST_FIELDS:
        if not isinstance(req.get(name), str):
            raise ProtocolError(f"bad request: {name} must be a string")
    actions = req.get("actions", "all")
    if actions != "all" and not (
        isinstance(actions, list) and all(isinstance(a, str) for a in actions)
    ):
        raise ProtocolError('bad request: actions must be a list of strings or "all"')
    system = req.get("system", {}) or {}
    if not isinstance(system, dict):
        raise ProtocolError("bad request: system must be an object")
    return req


def handle_request(
    engine: PolicyEngine,
    line: str | bytes,
    now: datetime,
    capability_lifetime: int = DEFAULT_CAPABILITY_LIFETIME,
) -> dict:
    """Answer one request line; never raises."""
    try:
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        req = _parse_request(line)
    except (ProtocolError, UnicodeDecodeError) as exc:
        return system_error(str(exc) if isinstance(exc, ProtocolError) else "parse")

    subject = Principal(user_dn=req["subject_dn"], ca_dn=req["subject_ca_dn"])
    try:
        identity = parse_certificate(req["identity_cert"])
    except CertificateError:
        identity = None
    actions = req.get("actions", "all")
    try:
        decision = engine.authorize(
            subject,
            identity,
            req["resource"],
            None if actions == "all" else actions,
            {str(k): str(v) for k, v in (req.get("system") or {}).items()},
            now,
        )
    except SystemFailure as exc:
        return system_error(str(exc))
    except Exception as exc:  # noqa: BLE001 - a request must never kill the service
        log.exception("decision failed")
        return system_error(f"internal: {exc}")

    capability = None
    if req.get("want_capability") and decision.allowed and identity is not None:
        if identity.cert_type is CertType.IDENTITY:
            cap = engine.issue_capability(
                decision, identity.body.public_key, capability_lifetime, now
            )
            capability = serialize_certificate(cap)
    return decision_to_wire(decision, capability)


def encode_line(payload: dict) -> bytes:
    return (json.dumps(payload, separators=(",", ":")) + "\n").encode("utf-8")


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        service: DecisionService = self.server.service
        while True:
            try:
                line = self.rfile.readline()
            except OSError:
                return
            if not line:
                return
            if not line.strip():
                continue
            response = handle_request(
                service.engine, line.rstrip(b"\r\n"), service.clock(), service.capability_lifetime
            )
            try:
                self.wfile.write(encode_line(response))
                self.wfile.flush()
            except OSError:
                return


class _Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


def _wall_clock() -> datetime:
    return datetime.now(timezone.utc)


class DecisionService:
    """Threaded decision daemon; every connection may carry many request lines."""

    def __init__(
        self,
        engine: PolicyEngine,
        host: str = "127.0.0.1",
        port: int = 0,
        clock: Callable[[], datetime] = _wall_clock,
        capability_lifetime: int = DEFAULT_CAPABILITY_LIFETIME,
    ):
        self.engine = engine
        self.clock = clock
        self.capability_lifetime = capability_lifetime
        self._server = _Server((host, port), _Handler)
        self._server.service = self
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self) -> "DecisionService":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


class DecisionClient:
    """Blocking client for the decision service."""

    def __init__(self, host: str, port: int, timeout: float = 5.0):
        self.host, self.port, self.timeout = host, port, timeout

    def request(self, payload: dict) -> dict:
        return self.request_many([payload])[0]

    def request_many(self, payloads) -> list[dict]:
        with socket.create_connection((self.host, self.port), timeout=self.timeout) as sock:
            stream = sock.makefile("rwb")
            out = []
            for payload in payloads:
                data = payload if isinstance(payload, (bytes, str)) else None
                if data is None:
                    stream.write(encode_line(payload))
                else:
                    raw = data.encode("utf-8") if isinstance(data, str) else data
                    stream.write(raw.rstrip(b"\n") + b"\n")
                stream.flush()
                line = stream.readline()
                if not line:
                    raise ConnectionError("decision service closed the connection")
                out.append(json.loads(line))
            return out


# -- configuration -----------------------------------------------------------------------


@dataclass
class ServiceConfig:
    listen: str = "127.0.0.1:7468"
    trusted_root_dir: str = ""
    engine_key: str = ""
    capability_lifetime: int = DEFAULT_CAPABILITY_LIFETIME
    log_level: str = "INFO"
    engine_dn: str = ""
    clock: str = ""

    @property
    def host(self) -> str:
        return self.listen.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.listen.rsplit(":", 1)[1])

    @classmethod
    def parse(cls, text: str, base: Path | None = None) -> "ServiceConfig":
        cfg = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or not hasattr(cfg, key):
                raise ValueError(f"config line {lineno}: unknown setting {raw!r}")
            if key == "capability_lifetime":
                value = int(value)
            setattr(cfg, key, value)
        if os.environ.get("AKENTI_TRUSTED_ROOT"):
            cfg.trusted_root_dir = os.environ["AKENTI_TRUSTED_ROOT"]
        if base is not None:
            for name in ("trusted_root_dir", "engine_key"):
                value = getattr(cfg, name)
                if value and not Path(value).is_absolute():
                    setattr(cfg, name, str(base / value))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ServiceConfig":
        path = Path(path)
        return cls.parse(path.read_text(), base=path.parent)

    def validate(self) -> None:
        root = Path(self.trusted_root_dir)
        if not self.trusted_root_dir or not root.is_dir():
            raise ValueError(f"trusted_root_dir {self.trusted_root_dir!r} does not exist")
        for path in root.glob("*.xml"):
            try:
                if parse_certificate(path.read_bytes()).cert_type is CertType.POLICY:
                    break
            except CertificateError:
                continue
        else:
            raise ValueError(f"trusted_root_dir {root} holds no policy certificate")
        host, sep, port = self.listen.rpartition(":")
        if not sep or not port.isdigit():
            raise ValueError(f"listen {self.listen!r} is not host:port")

    def fixed_clock(self) -> Callable[[], datetime]:
        if not self.clock:
            return _wall_clock
        when = parse_timestamp(self.clock)
        return lambda: when

    def build_engine(self, store: CertStore | None = None) -> PolicyEngine:
        key = KeyPair.load(self.engine_key) if self.engine_key else None
        principal = Principal(user_dn=self.engine_dn, ca_dn=self.engine_dn) if self.engine_dn else None
        return PolicyEngine(self.trusted_root_dir, store=store, signing_key=key, principal=principal)
