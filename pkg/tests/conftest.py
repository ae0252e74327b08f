from __future__ import annotations

from datetime import datetime, timezone

import pytest

from akenti.fusiongrid import build_fixtures
from akenti.keys import KeyPair
from akenti.pki import MiniPKI

NOW = datetime(2003, 1, 1, 12, 0, tzinfo=timezone.utc)
CA_DN = "/O=Test/CN=Test CA"


@pytest.fixture(scope="session")
def fg(tmp_path_factory):
    """Read-only FusionGrid corpus shared by the whole session."""
    return build_fixtures(tmp_path_factory.mktemp("fusiongrid"))


@pytest.fixture
def fresh_fg(tmp_path):
    """A private corpus the test may modify."""
    return build_fixtures(tmp_path / "fusiongrid")


@pytest.fixture(scope="session")
def pki():
    p = MiniPKI()
    p.create_ca(CA_DN, datetime(2000, 1, 1, tzinfo=timezone.utc), datetime(2010, 1, 1, tzinfo=timezone.utc))
    return p


@pytest.fixture(scope="session")
def alice_key():
    return KeyPair.from_seed(b"alice")


@pytest.fixture(scope="session")
def bob_key():
    return KeyPair.from_seed(b"bob")


# -- acceptance criteria reporting ------------------------------------------------------

CRITERIA: dict[int, tuple[bool, str]] = {}
CRITERION_NAMES = {
    1: "FusionGrid scenario",
    2: "critical use-condition semantics",
    3: "additivity over random corpora",
    4: "constraint evaluation vs Kleene oracle",
    5: "tamper and trust",
    6: "capability round trip",
    7: "cache contract",
    8: "fail-closed",
    9: "transport transparency",
    10: "lint detection",
}


@pytest.fixture
def criterion():
    """Record one acceptance verdict; the test still fails on a False result."""

    def record(number: int, ok: bool, detail: str = "") -> None:
        CRITERIA[number] = (bool(ok), detail)
        assert ok, f"criterion {number} failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, name in CRITERION_NAMES.items():
        ok, detail = CRITERIA.get(number, (False, "not run to completion"))
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {name}"
        terminalreporter.write_line(f"{line}: {detail}" if detail else line)
