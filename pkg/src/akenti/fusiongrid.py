"""Generator for the FusionGrid TRANSP corpus used by the scenario runner.

Layout written under the target directory::

    keys/         private keys (PEM), one per principal plus the engine
    cas/          self-signed CA root identity
    trusted/      the TRANSP root policy
    certs/        use-conditions and attribute certificates
    idCerts/      identity certificates
    crl/          revocation lists
    grid-mapfile, executables.map, callouts.conf, akenti.conf, scenario.json

Everything is derived from `seed`, so the same seed gives byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import shutil
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .certs import (
    AkentiCertificate,
    AttrType,
    AttributeCert,
    AttributeInfo,
    IdentityCert,
    PolicyCert,
    Principal,
    Scope,
    UseConditionCert,
    make_header,
    sign_certificate,
)
from .keys import KeyPair
from .pki import CertificateAuthority
from .store import file_url
from .xmlcodec import write_certificate

CA_DN = "/DC=net/DC=es/OU=Certificate Authorities/OU=DOE Science Grid/CN=pk1"
ROOT_UID = '"rocky.lbl.gov#104b8965#Thu May 03 17:15:30 PDT 2001"'
ROOT_BEGIN = datetime(2001, 5, 4, 0, 15, 29, tzinfo=timezone.utc)
ROOT_END = datetime(2005, 5, 4, 0, 15, 29, tzinfo=timezone.utc)
CERT_BEGIN = datetime(2001, 5, 1, tzinfo=timezone.utc)
CERT_END = datetime(2006, 1, 1, tzinfo=timezone.utc)
SCENARIO_DATE = "2003-01-01"
JOBCLASS_ROOT = "TRANSP/jobs"
MANAGEMENT_RIGHTS = ("cancel", "query", "signal", "suspend", "resume")


def _dn(cn: str) -> str:
    return f"/O=doesciencegrid.org/OU=People/CN={cn}"


# name -> (common name, local userid, attributes)
USERS = {
    "mary": ("Mary R. Thompson", "mrt", [("group", "Clients")]),
    "lew": ("Lew Randerson", "lew", []),
    "dana": ("Dana Developer", "dana", [("role", "developer"), ("group", "developers")]),
    "alex": ("Alex Administrator", "alex", [("group", "administrators")]),
    "terry": ("Terry Tester", "terry", [("group", "general")]),
    "sam": ("Sam Stranger", "sam", []),
    "riley": ("Riley Revoked", "riley", [("group", "clients")]),
}
REVOKED = ("riley",)

MAPPING = """\
# executable              resource
/bin/date                 TRANSP/test
/bin/sleep                TRANSP/test
/p/fusiongrid/trpstart    TRANSP/production
/p/fusiongrid/trspkill    TRANSP/production
/p/fusiongrid/new/trpstart TRANSP/development
jobclass                  TRANSP/jobs
"""

PRODUCTION = "&(executable=/p/fusiongrid/trpstart)(jobtag=transp)"
DEVELOPMENT = "&(executable=/p/fusiongrid/new/trpstart)(jobtag=transp)"

SCRIPT = [
    {"id": "mary-start-production", "actor": "mary", "op": "submit", "rsl": PRODUCTION,
     "time": "10:00", "expect": "ALLOWED", "save": "mary_job"},
    {"id": "mary-start-second", "actor": "mary", "op": "submit", "rsl": PRODUCTION,
     "time": "10:05", "expect": "ALLOWED", "save": "mary_job2"},
    {"id": "stranger-start-production", "actor": "sam", "op": "submit", "rsl": PRODUCTION,
     "time": "10:10", "expect": "DENIED"},
    {"id": "revoked-start-production", "actor": "riley", "op": "submit", "rsl": PRODUCTION,
     "time": "10:15", "expect": "DENIED", "reason": "IdentityRejected"},
    {"id": "tester-start-date", "actor": "terry", "op": "submit", "rsl": "&(executable=/bin/date)",
     "time": "10:20", "expect": "ALLOWED"},
    {"id": "stranger-start-date", "actor": "sam", "op": "submit", "rsl": "&(executable=/bin/date)",
     "time": "10:25", "expect": "DENIED"},
    {"id": "client-start-unmapped", "actor": "mary", "op": "submit", "rsl": "&(executable=/bin/ls)",
     "time": "10:30", "expect": "DENIED", "reason": "NoMapping"},
    {"id": "client-start-development", "actor": "mary", "op": "submit", "rsl": DEVELOPMENT,
     "time": "18:30", "expect": "DENIED"},
    {"id": "developer-start-development-evening", "actor": "dana", "op": "submit",
     "rsl": DEVELOPMENT, "time": "18:30", "expect": "ALLOWED", "save": "dana_job"},
    {"id": "developer-start-development-noon", "actor": "dana", "op": "submit",
     "rsl": DEVELOPMENT, "time": "12:00", "expect": "DENIED", "reason": "(time>5pm || time<8am)"},
    {"id": "developer-cancel-mary", "actor": "dana", "op": "manage", "job": "mary_job",
     "action": "cancel", "time": "12:10", "expect": "DENIED"},
    {"id": "developer-query-mary", "actor": "dana", "op": "manage", "job": "mary_job",
     "action": "query", "time": "12:15", "expect": "DENIED"},
    {"id": "admin-suspend-developer", "actor": "alex", "op": "manage", "job": "dana_job",
     "action": "suspend", "time": "12:20", "expect": "ALLOWED"},
    {"id": "admin-resume-developer", "actor": "alex", "op": "manage", "job": "dana_job",
     "action": "resume", "time": "12:25", "expect": "ALLOWED"},
    {"id": "admin-cancel-mary", "actor": "alex", "op": "manage", "job": "mary_job",
     "action": "cancel", "time": "12:30", "expect": "ALLOWED"},
    {"id": "mary-query-own", "actor": "mary", "op": "manage", "job": "mary_job2",
     "action": "query", "time": "12:35", "expect": "ALLOWED", "callouts": 0},
    {"id": "mary-cancel-own", "actor": "mary", "op": "manage", "job": "mary_job2",
     "action": "cancel", "time": "12:40", "expect": "ALLOWED", "callouts": 0},
]


def scenario_steps(critical: bool = False) -> list[dict]:
    """The scripted steps; under a failing critical use-condition nothing is allowed."""
    if not critical:
        return [dict(step) for step in SCRIPT]
    steps = []
    for step in SCRIPT:
        step = {**step, "expect": "DENIED"}
        if step.get("reason", "").startswith("("):
            del step["reason"]
        steps.append(step)
    return steps


@dataclass
class Fixtures:
    root: Path
    keys: dict[str, KeyPair]
    principals: dict[str, Principal]
    identities: dict[str, AkentiCertificate]
    ca: CertificateAuthority
    certs: dict[str, AkentiCertificate] = field(default_factory=dict)

    @property
    def trusted_dir(self) -> Path:
        return self.root / "trusted"

    def path(self, name: str) -> Path:
        return self.root / name


def _keypair(seed: bytes, name: str) -> KeyPair:
    return KeyPair.from_seed(seed + b"/" + name.encode())


def _uid(seed: bytes, name: str, when: datetime) -> str:
    digest = hashlib.sha256(seed + b"#" + name.encode()).hexdigest()[:8]
    return f"fusiongrid.example#{digest}#{when.strftime('%a %b %d %H:%M:%S UTC %Y')}"


def transp_root_policy(ca: CertificateAuthority, mary: Principal, lew: Principal, root: Path,
                   cache_time: int = 3600) -> PolicyCert:
    """The site-wide TRANSP policy, pointing at the corpus directories under `root`."""
    certs_url = file_url(root / "certs")
    return PolicyCert(
        resource_name="TRANSP",
        ca_infos=(ca.info(id_dirs=[file_url(root / "idCerts")], crl_dirs=[file_url(root / "crl")]),),
        uc_issuers=(mary, lew),
        uc_dirs=(certs_url,),
        attr_dirs=(certs_url,),
        cache_time=cache_time,
    )


def _group_info(name: str, authority: Principal) -> AttributeInfo:
    return AttributeInfo(attr_type=AttrType.AKENTI, attr_name=name, authorities=(authority,))


def use_conditions(lew: Principal, critical: bool = False) -> dict[str, UseConditionCert]:
    group = _group_info("group", lew)
    ucs = {
        "uc-test": UseConditionCert(
            resource_name="TRANSP/test",
            constraint_text="group=general || group=clients",
            attribute_infos=(group,),
            rights=("start",),
        ),
        "uc-production": UseConditionCert(
            critical=False,
            scope=Scope.SUBTREE,
            resource_name="TRANSP/production",
            constraint_text="group = clients",
            attribute_infos=(
                AttributeInfo(
                    attr_type=AttrType.AKENTI, attr_name="group", attr_value="clients",
                    authorities=(lew,),
                ),
            ),
            rights=("start",),
        ),
        "uc-development": UseConditionCert(
            resource_name="TRANSP/development",
            constraint_text="role=developer && (time>5pm || time<8am)",
            attribute_infos=(
                _group_info("role", lew),
                AttributeInfo(attr_type=AttrType.SYSTEM, attr_name="time"),
            ),
            rights=("start",),
        ),
        "uc-jobclass-admin": UseConditionCert(
            resource_name=JOBCLASS_ROOT,
            constraint_text="group=administrators",
            attribute_infos=(group,),
            rights=MANAGEMENT_RIGHTS,
        ),
        # job categories must also let members start jobs in them
        "uc-jobclass-start": UseConditionCert(
            resource_name=JOBCLASS_ROOT,
            constraint_text=(
                "group=general || group=clients || group=developers || group=administrators"
            ),
            attribute_infos=(group,),
            rights=("start",),
        ),
    }
    if critical:
        ucs["uc-critical-staff"] = UseConditionCert(
            critical=True,
            resource_name="TRANSP",
            constraint_text="group=staff",
            attribute_infos=(group,),
            rights=("start",) + MANAGEMENT_RIGHTS,
        )
    return ucs


def build_fixtures(
    target: str | Path,
    *,
    critical: bool = False,
    cache_time: int = 3600,
    seed: bytes = b"fusiongrid",
    overwrite: bool = True,
) -> Fixtures:
    """Write the corpus into `target` and return handles to what was written."""
    root = Path(target).resolve()
    if root.exists() and overwrite:
        for sub in ("keys", "cas", "trusted", "certs", "idCerts", "crl"):
            shutil.rmtree(root / sub, ignore_errors=True)
    for sub in ("keys", "cas", "trusted", "certs", "idCerts", "crl"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    ca = CertificateAuthority(CA_DN, _keypair(seed, "ca"))
    ca_body = IdentityCert(subject=ca.principal, public_key=ca.keypair.public_text)
    ca.root = sign_certificate(
        ca_body,
        make_header(ca_body, ca.principal, CERT_BEGIN, CERT_END, uid=_uid(seed, "ca", CERT_BEGIN)),
        ca.keypair,
    )
    write_certificate(ca.root, root / "cas" / "pk1.xml")
    ca.keypair.save(root / "keys" / "ca.key")

    keys, principals, identities = {}, {}, {}
    for name, (cn, _userid, _attrs) in USERS.items():
        keys[name] = _keypair(seed, name)
        keys[name].save(root / "keys" / f"{name}.key")
        principals[name] = Principal(user_dn=_dn(cn), ca_dn=CA_DN)
        body = IdentityCert(subject=principals[name], public_key=keys[name].public_text)
        header = make_header(body, ca.principal, CERT_BEGIN, CERT_END,
                             uid=_uid(seed, f"id-{name}", CERT_BEGIN))
        identities[name] = sign_certificate(body, header, ca.keypair)
        write_certificate(identities[name], root / "idCerts" / f"{name}.xml")
    _keypair(seed, "engine").save(root / "keys" / "engine.key")

    fx = Fixtures(root, keys, principals, identities, ca)
    mary, lew = principals["mary"], principals["lew"]

    policy = transp_root_policy(ca, mary, lew, root, cache_time)
    header = make_header(policy, mary, ROOT_BEGIN, ROOT_END, uid=ROOT_UID)
    fx.certs["policy"] = sign_certificate(policy, header, keys["mary"])
    write_certificate(fx.certs["policy"], root / "trusted" / "transp-policy.xml")

    for name, uc in use_conditions(lew, critical).items():
        header = make_header(uc, mary, CERT_BEGIN, CERT_END, uid=_uid(seed, name, CERT_BEGIN))
        fx.certs[name] = sign_certificate(uc, header, keys["mary"])
        write_certificate(fx.certs[name], root / "certs" / f"{name}.xml")

    for user, (_cn, _userid, attrs) in USERS.items():
        for attr, value in attrs:
            name = f"attr-{user}-{attr}"
            body = AttributeCert(subject=principals[user], attr_name=attr, attr_value=value)
            header = make_header(body, lew, CERT_BEGIN, CERT_END, uid=_uid(seed, name, CERT_BEGIN))
            fx.certs[name] = sign_certificate(body, header, keys["lew"])
            write_certificate(fx.certs[name], root / "certs" / f"{name}.xml")

    crl = ca.issue_crl(CERT_BEGIN, CERT_END, dns=[principals[u].user_dn for u in REVOKED],
                       uid=_uid(seed, "crl", CERT_BEGIN))
    write_certificate(crl, root / "crl" / "pk1-crl.xml")

    mapfile = "".join(
        f'"{principals[name].user_dn}" {userid}\n'
        for name, (_cn, userid, _a) in USERS.items()
        if name != "lew"
    )
    (root / "grid-mapfile").write_text("# grid identity -> local account\n" + mapfile)
    (root / "executables.map").write_text(MAPPING)
    (root / "callouts.conf").write_text("callout gram_authorization builtin:akenti\n")
    (root / "akenti.conf").write_text(
        "listen = 127.0.0.1:7468\n"
        "trusted_root_dir = trusted\n"
        "engine_key = keys/engine.key\n"
        "capability_lifetime = 300\n"
        "log_level = INFO\n"
        f"clock = {SCENARIO_DATE[2:4]}{SCENARIO_DATE[5:7]}{SCENARIO_DATE[8:10]}120000Z\n"
    )
    scenario = {"date": SCENARIO_DATE, "critical": critical, "steps": scenario_steps(critical)}
    (root / "scenario.json").write_text(json.dumps(scenario, indent=2) + "\n")
    return fx
