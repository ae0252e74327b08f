"""Command line entry point: ``akenti <command> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .certs import (
    AkentiCertificate,
    AttrType,
    AttributeCert,
    AttributeInfo,
    CAInfo,
    CertificateError,
    CertType,
    IdentityCert,
    PolicyCert,
    Principal,
    Scope,
    UseConditionCert,
    Validity,
    canonicalize,
    format_timestamp,
    make_header,
    parse_timestamp,
    sign_certificate,
    validate_period,
    verify_signature,
)
from .constraints import pretty_print
from .engine import PolicyEngine, SystemFailure
from .keys import KeyPair, UnsupportedAlgorithm, decode_public_key, encode_public_key, load_public_key_file
from .xmlcodec import read_certificate, serialize_certificate, write_certificate

EXIT_OK, EXIT_ERROR, EXIT_DENIED, EXIT_SYSTEM = 0, 1, 2, 3


class UsageError(Exception):
    pass


def parse_when(text: str | None) -> datetime:
    """YYMMDDHHMMSSZ or ISO 8601 (naive means UTC); None means now."""
    if not text:
        return datetime.now(timezone.utc)
    if text.endswith("Z") and text[:-1].isdigit():
        return parse_timestamp(text)
    iso = text[:-1] + "+00:00" if text.endswith("Z") else text
    try:
        when = datetime.fromisoformat(iso)
    except ValueError:
        raise UsageError(f"cannot read time {text!r}") from None
    return when if when.tzinfo else when.replace(tzinfo=timezone.utc)


def _principal(spec: str) -> Principal:
    user, sep, ca = spec.partition("|")
    if not sep:
        raise UsageError(f"principal {spec!r} must be 'USER_DN|CA_DN'")
    return Principal(user_dn=user.strip(), ca_dn=ca.strip())


# -- cert ------------------------------------------------------------------------------


def _header_args(p: argparse.ArgumentParser, issuer_required: bool = True) -> None:
    p.add_argument("--issuer-dn", required=issuer_required, help="DN of the signer")
    p.add_argument("--issuer-ca-dn", help="CA of the signer (defaults to --ca-dn)")
    p.add_argument("--begin", help="validity start (default now)")
    p.add_argument("--end", help="validity end")
    p.add_argument("--days", type=float, default=365.0, help="lifetime when --end is absent")
    p.add_argument("--uid")
    p.add_argument("--issuer-key", help="sign with this private key; unsigned otherwise")
    p.add_argument("-o", "--output", help="write here instead of stdout")


def _emit_cert(args, body) -> int:
    issuer_ca = args.issuer_ca_dn or getattr(args, "ca_dn", None) or args.issuer_dn
    issuer = Principal(user_dn=args.issuer_dn, ca_dn=issuer_ca)
    begin = parse_when(args.begin)
    end = parse_when(args.end) if args.end else None
    header = make_header(body, issuer, begin, end, lifetime=timedelta(days=args.days), uid=args.uid)
    if args.issuer_key:
        cert = sign_certificate(body, header, KeyPair.load(args.issuer_key))
    else:
        canonicalize(header, body)  # validates
        cert = AkentiCertificate(header, body, b"")
    _write(cert, args.output)
    return EXIT_OK


def _write(cert: AkentiCertificate, output: str | None) -> None:
    if output:
        write_certificate(cert, output)
    else:
        sys.stdout.write(serialize_certificate(cert))


def cmd_create_policy(args) -> int:
    key = encode_public_key(load_public_key_file(args.ca_key))
    ca = CAInfo(ca_dn=args.ca_dn, ca_public_key=key, id_dirs=args.id_dir, crl_dirs=args.crl_dir)
    body = PolicyCert(
        resource_name=args.resource,
        ca_infos=(ca,),
        uc_issuers=tuple(_principal(s) for s in args.stakeholder),
        uc_dirs=args.uc_dir,
        attr_dirs=args.attr_dir,
        cache_time=args.cache_time,
    )
    return _emit_cert(args, body)


def cmd_create_usecond(args) -> int:
    authorities: dict[str, list[Principal]] = {}
    for spec in args.akenti_attr:
        name, sep, who = spec.partition("=")
        if not sep:
            raise UsageError(f"--akenti-attr {spec!r} must be NAME=USER_DN|CA_DN")
        authorities.setdefault(name.strip(), []).append(_principal(who))
    infos = [
        AttributeInfo(attr_type=AttrType.AKENTI, attr_name=name, authorities=tuple(who))
        for name, who in authorities.items()
    ]
    infos += [AttributeInfo(attr_type=AttrType.SYSTEM, attr_name=n) for n in args.system_attr]
    body = UseConditionCert(
        critical=args.critical,
        scope=Scope(args.scope),
        resource_name=args.resource,
        constraint_text=args.constraint,
        attribute_infos=tuple(infos),
        rights=tuple(r.strip() for r in args.rights.split(",") if r.strip()),
        attr_dirs=args.attr_dir,
    )
    return _emit_cert(args, body)


def cmd_create_attr(args) -> int:
    body = AttributeCert(
        subject=Principal(user_dn=args.subject_dn, ca_dn=args.ca_dn),
        attr_name=args.name,
        attr_value=args.value,
    )
    return _emit_cert(args, body)


def cmd_create_identity(args) -> int:
    if args.issuer_dn is None:
        args.issuer_dn = args.ca_dn
    body = IdentityCert(
        subject=Principal(user_dn=args.subject_dn, ca_dn=args.ca_dn),
        public_key=encode_public_key(load_public_key_file(args.public_key)),
    )
    return _emit_cert(args, body)


def cmd_sign(args) -> int:
    cert = read_certificate(args.file)
    signed = sign_certificate(cert.body, cert.header, KeyPair.load(args.key))
    _write(signed, args.output or args.file)
    return EXIT_OK


def describe(cert: AkentiCertificate) -> str:
    h = cert.header
    lines = [
        f"Type:       {h.cert_type.value}",
        f"UID:        {h.uid}",
        f"Issuer:     {h.issuer.user_dn}",
        f"Issuer CA:  {h.issuer.ca_dn}",
        f"Validity:   {format_timestamp(h.validity_begin)} .. {format_timestamp(h.validity_end)}",
        f"Signature:  {h.signature_alg}, {len(cert.signature)} bytes" if cert.signature
        else "Signature:  (unsigned)",
    ]
    b = cert.body
    if isinstance(b, PolicyCert):
        lines.append(f"Resource:   {b.resource_name}")
        for ca in b.ca_infos:
            lines.append(f"CA:         {ca.ca_dn}")
            lines += [f"  IdDir:    {u}" for u in ca.id_dirs]
            lines += [f"  CRLDir:   {u}" for u in ca.crl_dirs]
        lines += [f"Stakeholder: {p.user_dn}" for p in b.uc_issuers]
        lines += [f"UseCondDir: {u}" for u in b.uc_dirs]
        lines += [f"AttrDir:    {u}" for u in b.attr_dirs]
        lines.append(f"CacheTime:  {b.cache_time}")
    elif isinstance(b, UseConditionCert):
        lines += [
            f"Resource:   {b.resource_name}",
            f"Critical:   {'yes' if b.critical else 'no'}",
            f"Scope:      {b.scope.value}",
            f"Constraint: {pretty_print(b.constraint)}",
            f"Rights:     {', '.join(b.rights)}",
        ]
        for info in b.attribute_infos:
            who = "; ".join(p.user_dn for p in info.authorities)
            lines.append(f"Attribute:  {info.attr_name} ({info.attr_type.value}){' by ' + who if who else ''}")
    elif isinstance(b, AttributeCert):
        lines += [f"Subject:    {b.subject.user_dn}", f"Attribute:  {b.attr_name}={b.attr_value}"]
    elif isinstance(b, IdentityCert):
        lines += [f"Subject:    {b.subject.user_dn}", f"Public key: {b.public_key[:32]}..."]
    elif b is not None and cert.cert_type is CertType.CAPABILITY:
        lines += [
            f"Subject:    {b.subject.user_dn}",
            f"Resource:   {b.resource_name}",
            f"Granted:    {', '.join(b.granted_actions) or '-'}",
        ]
        lines += [f"Conditional: {c.action}: {c.constraint_text}" for c in b.conditional_actions]
    else:
        for f in dataclasses.fields(b):
            lines.append(f"{f.name}: {getattr(b, f.name)}")
    return "\n".join(lines)


def cmd_show(args) -> int:
    print(describe(read_certificate(args.file)))
    return EXIT_OK


def _issuer_key(cert: AkentiCertificate, args):
    if args.key:
        return load_public_key_file(args.key)
    if cert.cert_type is CertType.IDENTITY and cert.issuer == cert.body.subject:
        return decode_public_key(cert.body.public_key)
    if args.id_dir:
        for path in sorted(Path(args.id_dir).glob("*.xml")):
            try:
                ident = read_certificate(path)
            except CertificateError:
                continue
            if ident.cert_type is CertType.IDENTITY and ident.body.subject == cert.issuer:
                return decode_public_key(ident.body.public_key)
    raise UsageError(f"no key for issuer {cert.issuer.user_dn}; pass --key or --id-dir")


def cmd_verify(args) -> int:
    try:
        cert = read_certificate(args.file)
    except CertificateError as exc:
        print(f"INVALID: malformed ({exc})")
        return EXIT_ERROR
    key = _issuer_key(cert, args)
    try:
        ok = verify_signature(cert, key, allow_legacy=args.allow_legacy)
    except UnsupportedAlgorithm as exc:
        print(f"INVALID: algorithm ({exc})")
        return EXIT_ERROR
    if not ok:
        print("INVALID: signature")
        return EXIT_ERROR
    period = validate_period(cert, parse_when(args.at))
    if period is not Validity.VALID:
        print(f"INVALID: {period.value}")
        return EXIT_ERROR
    print("VALID")
    return EXIT_OK


# -- other commands ---------------------------------------------------------------------


def cmd_keygen(args) -> int:
    key = KeyPair.generate_legacy_rsa() if args.legacy_rsa else KeyPair.generate()
    key.save(args.output)
    print(key.public_text)
    return EXIT_OK


def _system_pairs(pairs) -> dict[str, str]:
    out = {}
    for item in pairs:
        name, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--system {item!r} must be NAME=VALUE")
        out[name.strip()] = value.strip()
    return out


def cmd_authz(args) -> int:
    root = args.trusted_root or os.environ.get("AKENTI_TRUSTED_ROOT")
    if not root:
        raise UsageError("--trusted-root or AKENTI_TRUSTED_ROOT is required")
    identity = read_certificate(args.subject_identity)
    if identity.cert_type is not CertType.IDENTITY:
        raise UsageError(f"{args.subject_identity} is not an identity certificate")
    engine = PolicyEngine(root)
    try:
        decision = engine.authorize(
            identity.body.subject,
            identity,
            args.resource,
            args.action or None,
            _system_pairs(args.system),
            parse_when(args.at),
        )
    except SystemFailure as exc:
        print(f"system failure: {exc.kind}")
        if exc.detail:
            print(exc.detail, file=sys.stderr)
        return EXIT_SYSTEM
    actions = args.action or sorted(set(decision.granted) | set(decision.conditional))
    for action in actions:
        if action in decision.granted:
            print(f"GRANTED {action}")
        elif action in decision.conditional:
            print(f"CONDITIONAL {action}: {pretty_print(decision.conditional[action])}")
        else:
            print(f"DENIED {action} ({decision.denied_reason or 'NotAuthorized'})")
    if not actions:
        print(f"DENIED ({decision.denied_reason})")
    for uid in decision.evidence:
        print(f"evidence: {uid}")
    return EXIT_OK if decision.allowed else EXIT_DENIED


def cmd_serve(args) -> int:
    from .service import DecisionService, ServiceConfig

    cfg = ServiceConfig.load(args.config)
    logging.basicConfig(level=cfg.log_level.upper(), format="%(asctime)s %(levelname)s %(message)s")
    service = DecisionService(
        cfg.build_engine(), cfg.host, cfg.port, cfg.fixed_clock(), cfg.capability_lifetime
    )
    host, port = service.address
    print(f"listening on {host}:{port}", flush=True)
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def cmd_scenario(args) -> int:
    from .scenario import MissingFixture, load_harness, run_scenario

    try:
        if args.via_service:
            from .service import DecisionService

            harness = load_harness(args.dir)
            with DecisionService(harness.engine, clock=harness.clock.now) as service:
                host, port = service.address
                report = run_scenario(args.dir, remote=f"{host}:{port}")
        else:
            report = run_scenario(args.dir)
    except MissingFixture as exc:
        print(f"missing fixture: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(report.format_table())
    return EXIT_OK if report.ok else EXIT_ERROR


def cmd_fixtures(args) -> int:
    from .fusiongrid import build_fixtures

    fx = build_fixtures(args.dir, critical=args.critical, cache_time=args.cache_time)
    print(f"wrote FusionGrid corpus to {fx.root}")
    return EXIT_OK


def cmd_lint(args) -> int:
    from .lint import has_errors, lint_corpus

    diagnostics = lint_corpus(args.dir)
    for d in diagnostics:
        print(d)
    if not diagnostics:
        print("no findings")
    return EXIT_ERROR if has_errors(diagnostics) else EXIT_OK


# -- parser -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="akenti", description="Certificate-based authorization tools")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    cert = sub.add_parser("cert", help="create, sign, show and verify certificates")
    csub = cert.add_subparsers(dest="cert_command", required=True)

    p = csub.add_parser("create-policy")
    p.add_argument("--resource", required=True)
    p.add_argument("--ca-dn", required=True)
    p.add_argument("--ca-key", required=True, help="CA public (or private) key PEM")
    p.add_argument("--id-dir", action="append", default=[])
    p.add_argument("--crl-dir", action="append", default=[])
    p.add_argument("--stakeholder", action="append", required=True, help="USER_DN|CA_DN")
    p.add_argument("--uc-dir", action="append", default=[])
    p.add_argument("--attr-dir", action="append", default=[])
    p.add_argument("--cache-time", type=int, default=3600)
    _header_args(p)
    p.set_defaults(func=cmd_create_policy)

    p = csub.add_parser("create-usecond")
    p.add_argument("--resource", required=True)
    p.add_argument("--constraint", required=True)
    p.add_argument("--rights", required=True, help="comma separated actions")
    p.add_argument("--critical", action="store_true")
    p.add_argument("--scope", choices=[s.value for s in Scope], default=Scope.SUBTREE.value)
    p.add_argument("--akenti-attr", action="append", default=[], help="NAME=USER_DN|CA_DN")
    p.add_argument("--system-attr", action="append", default=[])
    p.add_argument("--attr-dir", action="append", default=[])
    _header_args(p)
    p.set_defaults(func=cmd_create_usecond)

    p = csub.add_parser("create-attr")
    p.add_argument("--subject-dn", required=True)
    p.add_argument("--ca-dn", required=True, help="CA of the subject")
    p.add_argument("--name", required=True)
    p.add_argument("--value", required=True)
    _header_args(p)
    p.set_defaults(func=cmd_create_attr)

    p = csub.add_parser("create-identity")
    p.add_argument("--subject-dn", required=True)
    p.add_argument("--ca-dn", required=True)
    p.add_argument("--public-key", required=True, help="subject key PEM (public or private)")
    _header_args(p, issuer_required=False)
    p.set_defaults(func=cmd_create_identity)

    p = csub.add_parser("sign")
    p.add_argument("file")
    p.add_argument("--key", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_sign)

    p = csub.add_parser("show")
    p.add_argument("file")
    p.set_defaults(func=cmd_show)

    p = csub.add_parser("verify")
    p.add_argument("file")
    p.add_argument("--key", help="issuer public or private key PEM")
    p.add_argument("--id-dir", help="directory of identity certificates to find the issuer key")
    p.add_argument("--at", help="check validity at this time (default now)")
    p.add_argument("--allow-legacy", action="store_true", help="accept RSA-MD5 signatures")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("keygen", help="write a new private key")
    p.add_argument("output")
    p.add_argument("--legacy-rsa", action="store_true")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("authz", help="ask for a decision")
    p.add_argument("--trusted-root", help="directory holding root policies")
    p.add_argument("--subject-identity", required=True)
    p.add_argument("--resource", required=True)
    p.add_argument("--action", action="append", default=[])
    p.add_argument("--system", action="append", default=[], help="NAME=VALUE")
    p.add_argument("--at", help="decision time (default now)")
    p.set_defaults(func=cmd_authz)

    p = sub.add_parser("serve", help="run the decision service")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("scenario", help="run the scripted FusionGrid scenario")
    p.add_argument("dir")
    p.add_argument("--via-service", action="store_true", help="route callouts over the wire protocol")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("fixtures", help="generate the FusionGrid corpus")
    p.add_argument("dir")
    p.add_argument("--critical", action="store_true", help="add a failing critical use-condition")
    p.add_argument("--cache-time", type=int, default=3600)
    p.set_defaults(func=cmd_fixtures)

    p = sub.add_parser("lint", help="check a certificate corpus")
    p.add_argument("dir")
    p.set_defaults(func=cmd_lint)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO)
    try:
        return args.func(args)
    except (UsageError, CertificateError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
