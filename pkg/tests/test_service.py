import json
import random

import pytest

from akenti.engine import PolicyEngine, verify_capability
from akenti.service import (
    DecisionClient,
    DecisionService,
    ServiceConfig,
    decision_from_wire,
    decision_to_wire,
    handle_request,
)
from akenti.xmlcodec import parse_certificate, serialize_certificate

from conftest import NOW


def request(fg, who, resource="TRANSP/production", **extra):
    p = fg.principals[who]
    return {
        "subject_dn": p.user_dn,
        "subject_ca_dn": p.ca_dn,
        "identity_cert": serialize_certificate(fg.identities[who]),
        "resource": resource,
        **extra,
    }


@pytest.fixture(scope="module")
def engine(fg):
    return PolicyEngine(fg.trusted_dir)


@pytest.fixture(scope="module")
def service(engine):
    with DecisionService(engine, clock=lambda: NOW) as svc:
        yield svc


def test_grant(engine, fg):
    out = handle_request(engine, json.dumps(request(fg, "mary")), NOW)
    assert out["granted"] == ["start"] and out["error"] is None


def test_denial_is_not_system_error(engine, fg):
    out = handle_request(engine, json.dumps(request(fg, "sam")), NOW)
    assert out["granted"] == [] and out["error"]["kind"] == "denial"


def test_conditional_text(engine, fg):
    out = handle_request(engine, json.dumps(request(fg, "dana", "TRANSP/development")), NOW)
    assert out["conditional"] == {"start": "(time>5pm || time<8am)"}


def test_system_failure(engine, fg):
    out = handle_request(engine, json.dumps(request(fg, "mary", "NOPE")), NOW)
    assert out["error"]["kind"] == "system" and out["granted"] == []


@pytest.mark.parametrize("line", [b"", b"{not json", b"[]", b"\xff\xfe", b'{"subject_dn": 3}', b"null",
                                  b'{"subject_dn":"a","subject_ca_dn":"b","identity_cert":"c","resource":"R","actions":5}',
                                  b'{"subject_dn":"a","subject_ca_dn":"b","identity_cert":"c","resource":"R","system":[]}'])
def test_malformed(engine, line):
    out = handle_request(engine, line, NOW)
    assert out["error"]["kind"] == "system" and out["granted"] == []


def test_not_json_detail(engine):
    assert handle_request(engine, "{not json", NOW)["error"] == {"kind": "system", "detail": "parse"}


def test_garbage_identity_is_denied(engine, fg):
    out = handle_request(engine, json.dumps(request(fg, "mary") | {"identity_cert": "<x/>"}), NOW)
    assert out["denied_reason"] == "IdentityRejected"


def test_wire_round_trip(engine, fg):
    d = engine.authorize(fg.principals["dana"], fg.identities["dana"], "TRANSP/development", None, None, NOW)
    back = decision_from_wire(d.subject, d.resource, json.loads(json.dumps(decision_to_wire(d))))
    assert back == d


def test_capability_over_the_wire(service, fg, engine):
    client = DecisionClient(*service.address)
    out = client.request(request(fg, "mary", want_capability=True))
    cap = parse_certificate(out["capability"])
    check = verify_capability(cap, [engine.signing_key.public_key], fg.principals["mary"], NOW)
    assert check.granted == {"start"}


def test_malformed_lines_interleaved(service, fg):
    rng = random.Random(7)
    junk = [b"{", b"not json", b"[1,2]", b'{"resource": 1}', b"\xc3\x28", b'"str"', b"{}" * 3]
    good = request(fg, "mary")
    payloads, expect = [], []
    for i in range(1000):
        payloads.append(rng.choice(junk) + str(i).encode())
        expect.append(None)
        if i % 50 == 0:
            payloads.append(good)
            expect.append(["start"])
    answers = DecisionClient(*service.address).request_many(payloads)
    assert len(answers) == len(payloads)
    for got, want in zip(answers, expect):
        if want is None:
            assert got["error"]["kind"] == "system"
        else:
            assert got["granted"] == want
    # still serving afterwards
    assert DecisionClient(*service.address).request(good)["granted"] == ["start"]


class TestConfig:
    def test_load(self, fg):
        cfg = ServiceConfig.load(fg.path("akenti.conf"))
        assert cfg.port == 7468 and cfg.trusted_root_dir == str(fg.trusted_dir)
        assert cfg.fixed_clock()().year == 2003
        assert cfg.build_engine().trusted_root_dir == fg.trusted_dir

    def test_env_override(self, fg, tmp_path, monkeypatch):
        monkeypatch.setenv("AKENTI_TRUSTED_ROOT", str(fg.trusted_dir))
        cfg = ServiceConfig.parse("trusted_root_dir = /does/not/exist\n")
        assert cfg.trusted_root_dir == str(fg.trusted_dir)

    @pytest.mark.parametrize("text", ["bogus = 1\n", "listen = nope\ntrusted_root_dir = {t}\n",
                                      "trusted_root_dir = /does/not/exist\n", "trusted_root_dir = {e}\n"])
    def test_invalid(self, fg, tmp_path, monkeypatch, text):
        monkeypatch.delenv("AKENTI_TRUSTED_ROOT", raising=False)
        with pytest.raises(ValueError):
            ServiceConfig.parse(text.format(t=fg.trusted_dir, e=tmp_path))
