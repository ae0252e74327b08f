import subprocess
import sys

import pytest

from akenti.cli import UsageError, main, parse_when
from akenti.fusiongrid import CA_DN
from akenti.service import DecisionClient
from akenti.xmlcodec import read_certificate, serialize_certificate

AT = "030101120000Z"
MARY_DN = "/O=doesciencegrid.org/OU=People/CN=Mary R. Thompson"
LEW_DN = "/O=doesciencegrid.org/OU=People/CN=Lew Randerson"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def create_attr(fg, out, capsys):
    return run(capsys, "cert", "create-attr", "--subject-dn", MARY_DN, "--ca-dn", CA_DN,
               "--name", "group", "--value", "clients", "--issuer-dn", LEW_DN,
               "--issuer-key", fg.path("keys/lew.key"), "--begin", "2002-06-01", "--days", "30", "-o", out)


class TestCert:
    def test_create_attr_then_verify(self, fg, tmp_path, capsys):
        out = tmp_path / "a.xml"
        assert create_attr(fg, out, capsys)[0] == 0
        code, text, _ = run(capsys, "cert", "verify", out, "--id-dir", fg.path("idCerts"), "--at", "2002-06-15")
        assert (code, text.strip()) == (0, "VALID")

    def test_tampered(self, fg, tmp_path, capsys):
        out = tmp_path / "a.xml"
        create_attr(fg, out, capsys)
        out.write_text(out.read_text().replace("clients", "administrators"))
        code, text, _ = run(capsys, "cert", "verify", out, "--id-dir", fg.path("idCerts"), "--at", "2002-06-15")
        assert (code, text.strip()) == (1, "INVALID: signature")

    def test_expired(self, fg, tmp_path, capsys):
        out = tmp_path / "a.xml"
        create_attr(fg, out, capsys)
        code, text, _ = run(capsys, "cert", "verify", out, "--key", fg.path("keys/lew.key"), "--at", "2003-01-01")
        assert code == 1 and text.startswith("INVALID: Expired")

    def test_malformed(self, tmp_path, capsys):
        bad = tmp_path / "bad.xml"
        bad.write_text("<AkentiCertificate>")
        code, text, _ = run(capsys, "cert", "verify", bad)
        assert code == 1 and text.startswith("INVALID: malformed")

    def test_unsigned_then_sign(self, fg, tmp_path, capsys):
        out = tmp_path / "uc.xml"
        code, _, _ = run(capsys, "cert", "create-usecond", "--resource", "TRANSP/test",
                         "--constraint", "group=general", "--rights", "start,query",
                         "--akenti-attr", f"group={LEW_DN}|{CA_DN}", "--issuer-dn", MARY_DN,
                         "--issuer-ca-dn", CA_DN, "--begin", "2002-01-01", "-o", out)
        assert code == 0 and read_certificate(out).signature == b""
        assert run(capsys, "cert", "sign", out, "--key", fg.path("keys/mary.key"))[0] == 0
        code, text, _ = run(capsys, "cert", "verify", out, "--id-dir", fg.path("idCerts"), "--at", "2002-06-01")
        assert text.strip() == "VALID"

    def test_show_policy(self, fg, capsys):
        code, text, _ = run(capsys, "cert", "show", fg.path("trusted/transp-policy.xml"))
        assert code == 0
        assert "Resource:   TRANSP" in text and "CacheTime:  3600" in text

    def test_create_policy_and_identity(self, fg, tmp_path, capsys):
        policy = tmp_path / "p.xml"
        code, _, err = run(capsys, "cert", "create-policy", "--resource", "LAB", "--ca-dn", CA_DN,
                           "--ca-key", fg.path("keys/ca.key"), "--stakeholder", f"{MARY_DN}|{CA_DN}",
                           "--uc-dir", "file:/tmp/x", "--cache-time", "60", "--issuer-dn", MARY_DN,
                           "--issuer-key", fg.path("keys/mary.key"), "-o", policy)
        assert code == 0, err
        assert read_certificate(policy).body.cache_time == 60
        ident = tmp_path / "id.xml"
        code, _, err = run(capsys, "cert", "create-identity", "--subject-dn", "/O=x/CN=new", "--ca-dn", CA_DN,
                           "--public-key", fg.path("keys/sam.key"), "--issuer-key", fg.path("keys/ca.key"), "-o", ident)
        assert code == 0, err
        code, text, _ = run(capsys, "cert", "verify", ident, "--id-dir", fg.path("cas"))
        assert text.strip() == "VALID"

    def test_bad_constraint_exit_1(self, capsys):
        code, _, err = run(capsys, "cert", "create-usecond", "--resource", "R", "--constraint", "a=1 &&",
                           "--rights", "start", "--issuer-dn", "/CN=x")
        assert code == 1 and err.startswith("error:")

    def test_keygen(self, tmp_path, capsys):
        code, text, _ = run(capsys, "keygen", tmp_path / "k.pem")
        assert code == 0 and (tmp_path / "k.pem").exists() and text.strip()


class TestAuthz:
    def test_grant(self, fg, capsys):
        code, text, _ = run(capsys, "authz", "--trusted-root", fg.trusted_dir,
                            "--subject-identity", fg.path("idCerts/mary.xml"),
                            "--resource", "TRANSP/production", "--action", "start", "--at", AT)
        assert code == 0
        assert text.splitlines()[0] == "GRANTED start"
        assert f"evidence: {fg.certs['uc-production'].uid}" in text

    def test_conditional(self, fg, capsys):
        code, text, _ = run(capsys, "authz", "--trusted-root", fg.trusted_dir,
                            "--subject-identity", fg.path("idCerts/dana.xml"),
                            "--resource", "TRANSP/development", "--action", "start", "--at", AT)
        assert text.splitlines()[0] == "CONDITIONAL start: (time>5pm || time<8am)"

    def test_system_time(self, fg, capsys):
        code, text, _ = run(capsys, "authz", "--trusted-root", fg.trusted_dir,
                            "--subject-identity", fg.path("idCerts/dana.xml"), "--resource", "TRANSP/development",
                            "--action", "start", "--system", "time=12:00", "--at", AT)
        assert code == 2 and text.startswith("DENIED start")

    def test_denied(self, fg, capsys):
        code, text, _ = run(capsys, "authz", "--trusted-root", fg.trusted_dir,
                            "--subject-identity", fg.path("idCerts/sam.xml"),
                            "--resource", "TRANSP/production", "--action", "start", "--at", AT)
        assert code == 2 and text.startswith("DENIED start (ConstraintsUnsatisfied)")

    def test_system_failure(self, fg, capsys):
        code, text, _ = run(capsys, "authz", "--trusted-root", fg.trusted_dir,
                            "--subject-identity", fg.path("idCerts/mary.xml"), "--resource", "ELSEWHERE", "--at", AT)
        assert code == 3 and text.strip() == "system failure: NoRootPolicy"

    def test_env_root(self, fg, capsys, monkeypatch):
        monkeypatch.setenv("AKENTI_TRUSTED_ROOT", str(fg.trusted_dir))
        code, _, _ = run(capsys, "authz", "--subject-identity", fg.path("idCerts/mary.xml"),
                         "--resource", "TRANSP/production", "--at", AT)
        assert code == 0

    def test_missing_root(self, fg, capsys, monkeypatch):
        monkeypatch.delenv("AKENTI_TRUSTED_ROOT", raising=False)
        code, _, err = run(capsys, "authz", "--subject-identity", fg.path("idCerts/mary.xml"), "--resource", "X")
        assert code == 1 and "AKENTI_TRUSTED_ROOT" in err


class TestOther:
    def test_fixtures_scenario_lint(self, tmp_path, capsys):
        assert run(capsys, "fixtures", tmp_path / "fg")[0] == 0
        code, text, _ = run(capsys, "scenario", tmp_path / "fg")
        assert code == 0 and "17/17 steps passed" in text
        code, text, _ = run(capsys, "lint", tmp_path / "fg")
        assert code == 0

    def test_scenario_via_service(self, fg, capsys):
        code, text, _ = run(capsys, "scenario", fg.root, "--via-service")
        assert code == 0, text

    def test_scenario_missing(self, tmp_path, capsys):
        code, _, err = run(capsys, "scenario", tmp_path)
        assert code == 1 and "missing fixture" in err

    def test_parse_when(self):
        assert parse_when("030101120000Z") == parse_when("2003-01-01T12:00:00")
        assert parse_when("2003-01-01T12:00:00Z") == parse_when("2003-01-01T12:00:00")
        with pytest.raises(UsageError):
            parse_when("tomorrow")

    def test_serve_subprocess(self, fg, tmp_path):
        conf = tmp_path / "akenti.conf"
        conf.write_text(f"listen = 127.0.0.1:0\ntrusted_root_dir = {fg.trusted_dir}\nclock = {AT}\n")
        proc = subprocess.Popen([sys.executable, "-m", "akenti", "serve", "--config", str(conf)],
                                stdout=subprocess.PIPE, text=True)
        try:
            line = proc.stdout.readline()
            assert line.startswith("listening on 127.0.0.1:")
            port = int(line.rsplit(":", 1)[1])
            answer = DecisionClient("127.0.0.1", port).request({
                "subject_dn": MARY_DN, "subject_ca_dn": CA_DN,
                "identity_cert": serialize_certificate(fg.identities["mary"]),
                "resource": "TRANSP/production", "actions": ["start"],
            })
            assert answer["granted"] == ["start"]
        finally:
            proc.terminate()
            proc.wait(timeout=10)
