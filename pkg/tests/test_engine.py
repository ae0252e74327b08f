from dataclasses import replace
from datetime import timedelta

import pytest
from hypothesis import given
from hypothesis import strategies as st

from akenti.certs import CapabilityCert, Scope
from akenti.constraints import Residual, parse_constraint, pretty_print
from akenti.engine import (
    CRITICAL_UNSATISFIED,
    IDENTITY_REJECTED,
    NO_APPLICABLE_POLICY,
    NOT_AUTHORIZED,
    EmptyDecision,
    LifetimeTooLong,
    NoRootPolicy,
    PolicyEngine,
    StoreFailure,
    SystemFailure,
    UntrustedPolicy,
    aggregate,
    verify_capability,
)
from akenti.scenario import load_harness

from conftest import NOW
from corpus import Corpus, url


def fg_authorize(fg, who, resource, actions=None, system=None):
    engine = PolicyEngine(fg.trusted_dir)
    return engine.authorize(fg.principals[who], fg.identities[who], resource, actions, system, NOW)


class TestFusionGrid:
    def test_client_starts_production(self, fg):
        d = fg_authorize(fg, "mary", "TRANSP/production")
        assert d.granted == {"start"}
        assert fg.certs["policy"].uid in d.evidence
        assert fg.certs["uc-production"].uid in d.evidence
        assert fg.certs["attr-mary-group"].uid in d.evidence

    def test_stranger_denied(self, fg):
        d = fg_authorize(fg, "sam", "TRANSP/production")
        assert not d.allowed and d.denied_reason == NOT_AUTHORIZED

    def test_revoked_identity(self, fg):
        assert fg_authorize(fg, "riley", "TRANSP/production").denied_reason == IDENTITY_REJECTED

    def test_developer_conditional(self, fg):
        d = fg_authorize(fg, "dana", "TRANSP/development")
        assert not d.granted
        assert pretty_print(d.conditional["start"]) == "(time>5pm || time<8am)"

    def test_developer_with_time(self, fg):
        assert fg_authorize(fg, "dana", "TRANSP/development", system={"time": "18:30"}).granted == {"start"}
        assert fg_authorize(fg, "dana", "TRANSP/development", system={"time": "12:00"}).denied_reason

    def test_admin_management_rights(self, fg):
        d = fg_authorize(fg, "alex", "TRANSP/jobs/transp")
        assert {"cancel", "query", "suspend", "resume", "signal", "start"} <= d.granted

    def test_requested_actions_filter(self, fg):
        d = fg_authorize(fg, "alex", "TRANSP/jobs/transp", actions=["cancel"])
        assert d.granted == {"cancel"}

    def test_unknown_root(self, fg):
        with pytest.raises(NoRootPolicy):
            fg_authorize(fg, "mary", "NOPE/x")

    @pytest.mark.parametrize("path", ["", "TRANSP//x", "/TRANSP"])
    def test_bad_path(self, fg, path):
        with pytest.raises(SystemFailure):
            fg_authorize(fg, "mary", path)

    def test_default_deny_without_use_conditions(self, fg):
        assert fg_authorize(fg, "mary", "TRANSP").denied_reason == NO_APPLICABLE_POLICY


class TestTrust:
    def test_attribute_from_non_authority_ignored(self):
        c = Corpus()
        c.use_condition("group=clients", ["start"])
        forged = c.attribute("group", "clients", issuer="owner")
        d = c.authorize()
        assert not d.allowed and forged.uid not in d.evidence

    def test_use_condition_from_non_stakeholder_excluded(self):
        c = Corpus()
        rogue = c.use_condition("CN=subject", ["start"], issuer="outsider")
        d = c.authorize()
        assert d.denied_reason == NO_APPLICABLE_POLICY and rogue.uid not in d.evidence

    def test_tampered_use_condition_excluded(self):
        c = Corpus()
        good = c.use_condition("CN=nobody", ["start"])
        text = c.mem.dirs[url("ucs")][f"{good.uid}.xml"].replace(b"CN=nobody", b"CN=subject")
        c.mem.dirs[url("ucs")][f"{good.uid}.xml"] = text
        assert c.authorize().denied_reason == NO_APPLICABLE_POLICY

    def test_expired_attribute_ignored(self):
        c = Corpus()
        c.use_condition("group=clients", ["start"])
        cert = c.sign(c.attribute("group", "clients").body, c.people["authority"], c.keys["authority"],
                      end=NOW - timedelta(days=1))
        c.mem.dirs[url("attrs")] = {}
        c.put("attrs", cert)
        assert not c.authorize().allowed

    def test_revoked_by_uid(self):
        c = Corpus()
        c.use_condition("CN=subject", ["start"])
        crl = c.ca.issue_crl(NOW - timedelta(days=1), NOW + timedelta(days=1), uids=[c.identities["subject"].uid])
        c.put("crl", crl)
        assert c.authorize().denied_reason == IDENTITY_REJECTED

    def test_crl_from_other_ca_ignored(self):
        c = Corpus()
        c.use_condition("CN=subject", ["start"])
        other = Corpus(seed="other")
        c.put("crl", other.ca.issue_crl(NOW - timedelta(days=1), NOW + timedelta(days=1),
                                        dns=[c.people["subject"].user_dn]))
        assert c.authorize().allowed

    def test_identity_for_someone_else(self):
        c = Corpus()
        c.use_condition("CN=subject", ["start"])
        engine = c.engine()
        d = engine.authorize(c.people["subject"], c.identities["outsider"], "R", None, None, NOW)
        assert d.denied_reason == IDENTITY_REJECTED

    def test_root_policy_signed_by_stranger(self):
        c = Corpus()
        c.mem.dirs[url("trusted")].clear()
        c.put("trusted", c.sign(c.policy_body("R"), c.people["outsider"], c.keys["owner"]))
        with pytest.raises(UntrustedPolicy):
            c.authorize()

    def test_unreachable_use_condition_dir_fails_closed(self):
        c = Corpus()
        c.use_condition("CN=subject", ["start"])
        c.mem.down.add(url("ucs"))
        with pytest.raises(StoreFailure):
            c.authorize()


class TestChain:
    def test_inherited_levels(self):
        c = Corpus()
        chain = c.engine().load_policy_chain("R/a/b", NOW)
        assert [lvl.resource for lvl in chain.levels] == ["R", "R/a", "R/a/b"]
        assert all(lvl.inherited for lvl in chain.levels[1:])

    def test_explicit_child_policy(self):
        c = Corpus()
        child = c.sign(replace(c.policy_body("R/a"), cache_time=5), c.people["owner"], c.keys["owner"])
        c.put("ucs", child)
        chain = c.engine().load_policy_chain("R/a/b", NOW)
        assert chain.levels[1].uid == child.uid
        assert chain.target.effective.cache_time == 5

    def test_child_policy_from_non_stakeholder(self):
        c = Corpus()
        c.put("ucs", c.sign(c.policy_body("R/a"), c.people["outsider"], c.keys["outsider"]))
        with pytest.raises(UntrustedPolicy):
            c.engine().load_policy_chain("R/a", NOW)

    def test_subtree_and_local_scope(self):
        c = Corpus()
        c.use_condition("CN=subject", ["start"], scope=Scope.LOCAL)
        c.use_condition("CN=subject", ["query"], scope=Scope.SUBTREE)
        assert c.authorize().granted == {"start", "query"}
        assert c.authorize(resource="R/child").granted == {"query"}


class TestAggregation:
    def test_additive(self):
        c = Corpus()
        c.use_condition("group=a", ["start"])
        c.use_condition("group=b", ["query"])
        c.attribute("group", "a")
        c.attribute("group", "b")
        assert c.authorize().granted == {"start", "query"}

    def test_unsatisfied_critical_denies_everything(self):
        c = Corpus()
        c.use_condition("CN=subject", ["start", "query"])
        c.use_condition("group=staff", ["start"], critical=True)
        d = c.authorize()
        assert not d.allowed and d.denied_reason == CRITICAL_UNSATISFIED

    def test_satisfied_critical_is_neutral(self):
        c = Corpus()
        c.use_condition("CN=subject", ["start", "query"])
        c.use_condition("O=Test", ["start"], critical=True)
        assert c.authorize().granted == {"start", "query"}

    def test_critical_residual_guards_every_action(self):
        c = Corpus()
        c.use_condition("CN=subject", ["start", "query"])
        c.use_condition("time<5pm", ["start"], critical=True, attrs=(), system=("time",))
        d = c.authorize()
        assert not d.granted
        assert {a: pretty_print(r) for a, r in d.conditional.items()} == {"query": "time<5pm", "start": "time<5pm"}
        assert c.authorize(system={"time": "10:00"}).granted == {"start", "query"}
        assert c.authorize(system={"time": "18:00"}).denied_reason == CRITICAL_UNSATISFIED

    def test_empty_window_stays_conditional(self):
        c = Corpus()
        c.use_condition("role=developer && time>5pm && time<8am", ["start"],
                        attrs=("role",), system=("time",))
        c.attribute("role", "developer")
        d = c.authorize()
        assert not d.granted
        assert pretty_print(d.conditional["start"]) == "(time>5pm && time<8am)"
        for hour in ("03:00", "12:00", "20:00"):
            assert c.authorize(system={"time": hour}).granted == set()

    def test_residuals_from_two_use_conditions_or_together(self):
        t1, t2 = Residual(parse_constraint("time<8am")), Residual(parse_constraint("time>5pm"))
        granted, conditional, reason = aggregate([(("start",), False, t1), (("start",), False, t2)])
        assert pretty_print(conditional["start"]) == "(time<8am || time>5pm)"
        assert reason is None and not granted

    def test_grant_beats_residual(self):
        t = Residual(parse_constraint("time<8am"))
        granted, conditional, _ = aggregate([(("start",), False, t), (("start",), False, True)])
        assert granted == {"start"} and not conditional

    def test_type_error_counts_as_false(self):
        c = Corpus()
        c.use_condition("group > 3", ["start"])
        c.use_condition("CN=subject", ["query"])
        assert c.authorize().granted == {"query"}

    @given(st.lists(st.tuples(st.sets(st.sampled_from("abcd"), min_size=1), st.booleans()), max_size=6))
    def test_non_critical_grants_are_union(self, ucs):
        outcomes = [(tuple(r), False, ok) for r, ok in ucs]
        granted, _, _ = aggregate(outcomes)
        assert granted == set().union(*[r for r, ok in ucs if ok])


class TestCapability:
    def decision(self, c):
        c.use_condition("CN=subject", ["query"])
        c.use_condition("CN=subject && time>5pm", ["start"], system=("time",))
        return c.authorize()

    def test_round_trip(self):
        c = Corpus()
        engine = c.engine()
        d = self.decision(c)
        cap = engine.issue_capability(d, c.keys["subject"].public_text, 300, NOW)
        assert isinstance(cap.body, CapabilityCert)
        check = verify_capability(cap, [engine.signing_key.public_key], c.people["subject"], NOW)
        assert check.granted == d.granted
        assert check.conditional == {"start": "time>5pm"}

    @pytest.mark.parametrize("offset,reason", [(301, "Expired"), (-1, "NotYetValid")])
    def test_period(self, offset, reason):
        c = Corpus()
        engine = c.engine()
        cap = engine.issue_capability(self.decision(c), c.keys["subject"].public_text, 300, NOW)
        check = verify_capability(cap, [engine.signing_key.public_key], c.people["subject"],
                                  NOW + timedelta(seconds=offset))
        assert not check.granted and check.reason == reason

    def test_untrusted_and_mismatch(self):
        c = Corpus()
        engine = c.engine()
        cap = engine.issue_capability(self.decision(c), c.keys["subject"].public_text, 300, NOW)
        assert verify_capability(cap, [c.keys["owner"].public_key], c.people["subject"], NOW).reason == "UntrustedSignature"
        assert verify_capability(cap, [engine.signing_key.public_key], c.people["outsider"], NOW).reason == "SubjectMismatch"
        assert verify_capability(c.identities["subject"], [], c.people["subject"], NOW).reason == "NotACapability"

    def test_refuses_empty_and_long(self):
        c = Corpus()
        engine = c.engine()
        with pytest.raises(EmptyDecision):
            engine.issue_capability(c.authorize(), c.keys["subject"].public_text, 300, NOW)
        with pytest.raises(LifetimeTooLong):
            engine.issue_capability(self.decision(c), c.keys["subject"].public_text, 10**9, NOW)


class TestCache:
    def test_cache_time_respected(self):
        c = Corpus(cache_time=2)
        c.use_condition("CN=subject", ["start"])
        engine = c.engine()
        c.authorize(engine=engine)
        first = engine.store.fetch_count
        c.authorize(engine=engine, now=NOW + timedelta(seconds=1))
        assert engine.store.fetch_count == first
        c.authorize(engine=engine, now=NOW + timedelta(seconds=3))
        assert engine.store.fetch_count > first

    def test_new_use_condition_seen_after_expiry(self):
        c = Corpus(cache_time=2)
        c.use_condition("CN=subject", ["start"])
        engine = c.engine()
        assert c.authorize(engine=engine).granted == {"start"}
        c.use_condition("CN=subject", ["query"])
        assert c.authorize(engine=engine, now=NOW + timedelta(seconds=1)).granted == {"start"}
        assert c.authorize(engine=engine, now=NOW + timedelta(seconds=3)).granted == {"start", "query"}

    def test_clock_going_back_refetches(self):
        c = Corpus(cache_time=100)
        c.use_condition("CN=subject", ["start"])
        engine = c.engine()
        c.authorize(engine=engine)
        first = engine.store.fetch_count
        c.authorize(engine=engine, now=NOW - timedelta(seconds=1))
        assert engine.store.fetch_count > first


def test_harness_engine_matches_direct(fg):
    h = load_harness(fg.root)
    d = h.engine.authorize(fg.principals["mary"], fg.identities["mary"], "TRANSP/production", None, None, NOW)
    assert d.granted == {"start"}
