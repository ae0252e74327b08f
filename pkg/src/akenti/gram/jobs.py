"""Simulated GRAM job manager enforcing decisions on job start and management."""

from __future__ import annotations

import enum
import itertools
import logging
import threading
from dataclasses import dataclass, field
from datetime import datetime

from ..certs import AkentiCertificate, Principal
from ..clock import time_of_day
from ..constraints import AttributeContext, ConstraintExpr, evaluate, pretty_print
from .callout import (
    GRAM_AUTHORIZATION,
    AuthzSystemError,
    CalloutRegistry,
    CalloutRequest,
    dispatch_callout,
)
from .gatekeeper import Gatekeeper
from .rsl import MappingTable, RSLRequest, RslSyntaxError, map_executable, parse_rsl

log = logging.getLogger(__name__)

UNSATISFIABLE_CONDITION = "UnsatisfiableCondition"


class JobState(str, enum.Enum):
    PENDING = "Pending"
    ACTIVE = "Active"
    SUSPENDED = "Suspended"
    DONE = "Done"
    FAILED = "Failed"
    CANCELED = "Canceled"


TRANSITIONS = {
    ("cancel", JobState.ACTIVE): JobState.CANCELED,
    ("cancel", JobState.SUSPENDED): JobState.CANCELED,
    ("cancel", JobState.PENDING): JobState.CANCELED,
    ("suspend", JobState.ACTIVE): JobState.SUSPENDED,
    ("resume", JobState.SUSPENDED): JobState.ACTIVE,
    ("signal", JobState.ACTIVE): JobState.ACTIVE,
}
MANAGEMENT_ACTIONS = ("cancel", "query", "signal", "suspend", "resume")


class AuthzDenied(PermissionError):
    def __init__(self, reason: str, evidence=(), residual: str | None = None):
        message = reason if residual is None or residual in reason else f"{reason}: {residual}"
        super().__init__(message)
        self.reason = reason
        self.evidence = tuple(evidence)
        self.residual = residual


class UnknownHandle(KeyError):
    pass


class InvalidTransition(RuntimeError):
    pass


def next_state(state: JobState, action: str) -> JobState:
    if action == "query":
        return state
    try:
        return TRANSITIONS[(action, state)]
    except KeyError:
        raise InvalidTransition(f"cannot {action} a job that is {state.value}") from None


@dataclass
class HistoryEntry:
    at: datetime
    action: str
    actor: Principal | None
    outcome: str


@dataclass
class JobRecord:
    handle: str
    owner: Principal
    local_userid: str
    jobtag: str
    rsl: RSLRequest
    state: JobState
    started_at: datetime
    history: list[HistoryEntry] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)


def evaluate_residuals(residual: ConstraintExpr, system_ctx: dict, clock) -> tuple[bool, str | None]:
    """Settle a conditional grant on the enforcement side.

    `time` comes from the clock unless already supplied.  Anything still
    unknown afterwards fails with UnsatisfiableCondition.
    """
    system = {k: str(v) for k, v in (system_ctx or {}).items()}
    system.setdefault("time", time_of_day(clock.now()))
    try:
        outcome = evaluate(residual, AttributeContext(system=system))
    except TypeError as exc:
        return False, f"{UNSATISFIABLE_CONDITION}: {exc}"
    if outcome is True:
        return True, None
    if outcome is False:
        return False, f"condition not met: {pretty_print(residual)}"
    return False, f"{UNSATISFIABLE_CONDITION}: {pretty_print(outcome.expr)}"


class JobManager:
    """Gatekeeper plus job manager: admits, authorizes and tracks simulated jobs."""

    def __init__(
        self,
        gatekeeper: Gatekeeper,
        registry: CalloutRegistry,
        mapping: MappingTable,
        clock,
        host: str = "localhost",
        callout_name: str = GRAM_AUTHORIZATION,
        job_duration: float | None = None,
    ):
        self.gatekeeper = gatekeeper
        self.registry = registry
        self.mapping = mapping
        self.clock = clock
        self.host = host
        self.callout_name = callout_name
        self.job_duration = job_duration
        self.jobs: dict[str, JobRecord] = {}
        self._table_lock = threading.Lock()
        self._counter = itertools.count(1)

    def _authorize(self, request: CalloutRequest, now: datetime) -> None:
        decision = dispatch_callout(self.registry, self.callout_name, request, now)
        if request.action in decision.granted:
            return
        residual = decision.conditional.get(request.action)
        if residual is not None:
            ok, reason = evaluate_residuals(residual, request.system, self.clock)
            if ok:
                return
            raise AuthzDenied(reason, decision.evidence, pretty_print(residual))
        raise AuthzDenied(decision.denied_reason or "NotAuthorized", decision.evidence)

    def submit_job(self, identity: AkentiCertificate, rsl_text: str) -> str:
        """Admit, authorize and start a job; returns its handle."""
        now = self.clock.now()
        userid = self.gatekeeper.admit(identity, now)
        rsl = parse_rsl(rsl_text)
        if not rsl.executable:
            raise RslSyntaxError("a start request needs an executable")
        rsl = RSLRequest({**rsl.attributes, "jobtag": rsl.jobtag})
        resource = map_executable(rsl.executable, self.mapping)
        subject = identity.body.subject
        with self._table_lock:
            handle = f"job://{self.host}/{next(self._counter)}"
        system = rsl.system_attributes()
        targets = [resource]
        jobclass = self.mapping.jobclass_resource(rsl.jobtag)
        if jobclass:
            targets.append(jobclass)
        for target in targets:
            self._authorize(
                CalloutRequest(subject, identity, subject, "start", handle, rsl, target, system), now
            )
        job = JobRecord(handle, subject, userid, rsl.jobtag, rsl, JobState.ACTIVE, now)
        with self._table_lock:
            self.jobs[handle] = job
        log.info("started %s for %s as %s", handle, subject.user_dn, userid)
        return handle

    def _refresh(self, job: JobRecord, now: datetime) -> None:
        if (
            job.state is JobState.ACTIVE
            and self.job_duration is not None
            and (now - job.started_at).total_seconds() >= self.job_duration
        ):
            job.state = JobState.DONE

    def manage_job(self, identity: AkentiCertificate, handle: str, action: str) -> JobState:
        """Apply a management action; the job owner needs no callout."""
        if action not in MANAGEMENT_ACTIONS:
            raise ValueError(f"unknown management action {action!r}")
        with self._table_lock:
            job = self.jobs.get(handle)
        if job is None:
            raise UnknownHandle(handle)
        now = self.clock.now()
        actor = getattr(getattr(identity, "body", None), "subject", None)
        with job.lock:
            self._refresh(job, now)
            try:
                self.gatekeeper.verify_identity(identity, now)
                if actor != job.owner:
                    resource = self.mapping.jobclass_resource(job.jobtag)
                    if resource is None:
                        raise AuthzDenied("OwnerOnly")
                    request = CalloutRequest(
                        actor, identity, job.owner, action, handle, job.rsl, resource,
                        job.rsl.system_attributes(),
                    )
                    self._authorize(request, now)
                new = next_state(job.state, action)
            except (AuthzDenied, AuthzSystemError, InvalidTransition, PermissionError) as exc:
                job.history.append(HistoryEntry(now, action, actor, f"refused: {exc}"))
                raise
            job.state = new
            job.history.append(HistoryEntry(now, action, actor, f"ok: {new.value}"))
            return new
