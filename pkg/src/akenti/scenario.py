"""Run the scripted FusionGrid scenario against an in-process gatekeeper."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .certs import CAInfo, CertType
from .clock import VirtualClock
from .engine import PolicyEngine
from .gram.callout import GRAM_AUTHORIZATION, AuthzSystemError, CalloutRegistry
from .gram.gatekeeper import Gatekeeper, IdentityRejected, NotInMapfile, load_grid_mapfile
from .gram.jobs import AuthzDenied, InvalidTransition, JobManager, UnknownHandle
from .gram.rsl import MappingTable, NoMapping, RslSyntaxError
from .keys import KeyPair
from .store import CertStore, file_url
from .xmlcodec import read_certificate

REQUIRED = ("trusted", "cas", "idCerts", "grid-mapfile", "executables.map", "callouts.conf", "scenario.json")
DENIALS = (AuthzDenied, NotInMapfile, IdentityRejected, NoMapping, RslSyntaxError,
           UnknownHandle, InvalidTransition)


class MissingFixture(FileNotFoundError):
    pass


@dataclass
class Harness:
    root: Path
    engine: PolicyEngine
    registry: CalloutRegistry
    manager: JobManager
    clock: VirtualClock

    def identity(self, actor: str):
        return read_certificate(self.root / "idCerts" / f"{actor}.xml")


def _check_fixture(root: Path) -> None:
    if not root.is_dir():
        raise MissingFixture(f"{root} is not a directory")
    missing = [name for name in REQUIRED if not (root / name).exists()]
    if missing:
        raise MissingFixture(f"{root} lacks {', '.join(missing)}")


def load_harness(fixture_dir: str | Path, remote: str | None = None, store: CertStore | None = None) -> Harness:
    """Assemble engine, gatekeeper and job manager from a fixture directory.

    `remote` ("host:port") routes the callout through a decision service.
    """
    root = Path(fixture_dir).resolve()
    _check_fixture(root)
    date = json.loads((root / "scenario.json").read_text()).get("date", "2003-01-01")
    clock = VirtualClock(datetime.fromisoformat(date).replace(tzinfo=timezone.utc))
    store = store or CertStore()
    key_path = root / "keys" / "engine.key"
    engine = PolicyEngine(
        root / "trusted", store, signing_key=KeyPair.load(key_path) if key_path.exists() else None
    )
    registry = CalloutRegistry.load(root / "callouts.conf", builtins={"akenti": engine})
    if remote:
        registry.register(GRAM_AUTHORIZATION, f"remote:{remote}")
    cas = []
    for path in sorted((root / "cas").glob("*.xml")):
        cert = read_certificate(path)
        if cert.cert_type is CertType.IDENTITY:
            cas.append(_ca_info(cert, root))
    gatekeeper = Gatekeeper(cas, load_grid_mapfile(root / "grid-mapfile"), store)
    manager = JobManager(gatekeeper, registry, MappingTable.load(root / "executables.map"), clock,
                         host="transp.pppl.gov")
    return Harness(root, engine, registry, manager, clock)


def _ca_info(root_cert, root: Path):
    crl_dirs = [file_url(root / "crl")] if (root / "crl").is_dir() else []
    return CAInfo(
        ca_dn=root_cert.body.subject.user_dn,
        ca_public_key=root_cert.body.public_key,
        crl_dirs=crl_dirs,
    )


@dataclass
class StepResult:
    step_id: str
    expected: str
    actual: str
    detail: str
    callouts: int
    passed: bool

    @property
    def verdict(self) -> str:
        if self.passed:
            return "PASS"
        if self.expected != self.actual:
            return f"FAIL (expected {self.expected}, got {self.actual})"
        return "FAIL (outcome matched, details did not)"


@dataclass
class ScenarioReport:
    results: list[StepResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.results)

    def by_id(self) -> dict[str, StepResult]:
        return {r.step_id: r for r in self.results}

    def format_table(self) -> str:
        width = max([len(r.step_id) for r in self.results] + [4])
        lines = [f"{'step':<{width}}  {'expected':<8}  {'actual':<8}  callouts  verdict"]
        for r in self.results:
            lines.append(
                f"{r.step_id:<{width}}  {r.expected:<8}  {r.actual:<8}  {r.callouts:>8}  {r.verdict}"
            )
            if not r.passed or r.actual == "DENIED":
                lines.append(f"{'':<{width}}    {r.detail}")
        passed = sum(r.passed for r in self.results)
        lines.append(f"{passed}/{len(self.results)} steps passed")
        return "\n".join(lines)


def run_step(harness: Harness, step: dict, date: str, jobs: dict[str, str]) -> StepResult:
    if "time" in step:
        harness.clock.set(datetime.fromisoformat(f"{date}T{step['time']}").replace(tzinfo=timezone.utc))
    before = harness.registry.calls
    identity = harness.identity(step["actor"])
    try:
        if step["op"] == "submit":
            handle = harness.manager.submit_job(identity, step["rsl"])
            if step.get("save"):
                jobs[step["save"]] = handle
            actual, detail = "ALLOWED", handle
        elif step["op"] == "manage":
            handle = jobs.get(step["job"])
            if handle is None:
                raise UnknownHandle(f"job {step['job']!r} was never started")
            state = harness.manager.manage_job(identity, handle, step["action"])
            actual, detail = "ALLOWED", state.value
        else:
            raise ValueError(f"unknown step op {step['op']!r}")
    except DENIALS as exc:
        actual, detail = "DENIED", f"{type(exc).__name__}: {exc}"
    except AuthzSystemError as exc:
        actual, detail = "ERROR", f"AuthzSystemError: {exc}"
    callouts = harness.registry.calls - before
    passed = actual == step["expect"]
    if passed and step.get("reason") and step["reason"] not in detail:
        passed = False
    if passed and "callouts" in step and callouts != step["callouts"]:
        passed = False
    return StepResult(step["id"], step["expect"], actual, detail, callouts, passed)


def run_scenario(fixture_dir: str | Path, remote: str | None = None) -> ScenarioReport:
    harness = load_harness(fixture_dir, remote)
    script = json.loads((harness.root / "scenario.json").read_text())
    jobs: dict[str, str] = {}
    report = ScenarioReport()
    for step in script["steps"]:
        report.results.append(run_step(harness, step, script["date"], jobs))
    return report
