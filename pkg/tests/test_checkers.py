"""Whole-system checks: trace-quantified verdicts, purge comparisons,
policy-shape checks, and the state-level certifier."""

import pytest

from nifcheck import (
    BOUNDED_SECURE,
    CERTIFIED_SECURE,
    INCONCLUSIVE,
    INSECURE,
    InputError,
    PolicyEnhancedSystem,
    Signature,
    check_globally_known,
    check_i_security,
    check_locality,
    check_lpurge_security,
    check_static,
    check_ta_may_security,
    check_ta_must_security,
    check_ta_static_security,
    check_unwinding_security,
    dipurge,
    dsrc,
    lpurge,
    permits,
    policy_leq,
    restrict_to_local,
    run,
    state_unwinding_check,
    strip_inactive_edges,
    ta_may_partitions,
    traces_upto,
    unwinding_partition,
)

from oracles import (
    naive_dipurge,
    naive_dsrc,
    naive_lpurge,
    random_systems,
)


def admin_system(admin_changes_policy: bool = True) -> PolicyEnhancedSystem:
    """D administers the policy; everyone may always see D."""
    sig = Signature(
        domains=("D", "L"), actions=("d", "l"), dom={"d": "D", "l": "L"}
    )
    states = ("s0", "s1")
    mover = "d" if admin_changes_policy else "l"
    trans = {(s, a): ("s1" if a == mover else s) for s in states for a in sig.actions}
    obs = {(u, s): 0 for u in sig.domains for s in states}
    edges = {
        "s0": frozenset({("D", "L")}),
        "s1": frozenset({("D", "L"), ("L", "D")}),
    }
    return PolicyEnhancedSystem(
        signature=sig,
        states=states,
        initial="s0",
        transitions=trans,
        obs=obs,
        edges=edges,
    )


class TestCorpusVerdicts:
    """Frozen outcomes and witnesses for the bundled example systems."""

    def test_figure1_separates_the_two_readings(self, figure1):
        may = check_ta_may_security(figure1, 6)
        assert may.outcome == BOUNDED_SECURE
        unw = check_unwinding_security(figure1, 6)
        assert unw.outcome == INSECURE
        assert unw.witness == (("p", "a"), ("a",), "B")
        assert unw.details["rule_applications"]["sweeps"] >= 1

    def test_figure1_purge_comparison(self, figure1):
        v = check_lpurge_security(figure1, 6)
        assert v.outcome == INSECURE
        assert v.witness == (("p", "a"), "B")
        assert v.details["purged"] == ("a",)

    def test_figure1_locality_fails(self, figure1):
        v = check_locality(figure1, 6)
        assert v.outcome == INSECURE
        assert v.witness == ((), ("p",), "A", "B")

    def test_figure2_base_accepted_permissively_rejected_prohibitively(
        self, figure2_doc
    ):
        base = figure2_doc.base
        assert check_ta_may_security(base, 6).outcome == BOUNDED_SECURE
        assert check_lpurge_security(base, 6).outcome == BOUNDED_SECURE
        unw = check_unwinding_security(base, 6)
        assert unw.outcome == INSECURE
        assert unw.witness == ((), ("d",), "L")

    def test_figure2_dotted_edge_rejected_everywhere(self, figure2_doc):
        dotted = figure2_doc.select("dotted")
        v = check_lpurge_security(dotted, 6)
        assert v.outcome == INSECURE
        assert v.witness == (("h", "d"), "L")
        assert v.details["purged"] == ("d",)
        assert check_ta_may_security(dotted, 6).witness == (("h", "d"), ("d",), "L")

    def test_figure3_secure_but_purge_incomparable(self, figure3):
        assert check_unwinding_security(figure3, 6).outcome == BOUNDED_SECURE
        assert check_lpurge_security(figure3, 6).outcome == BOUNDED_SECURE
        v = check_i_security(figure3, 6)
        assert v.outcome == INSECURE
        assert v.witness == ("s0", ("h", "d"), ("d",), "L")
        assert v.details["common_purge"] == ("d",)

    def test_figure4_policy_local_only_after_strengthening(self, figure4_doc):
        base = figure4_doc.base
        primed = figure4_doc.select("primed")
        assert check_ta_may_security(base, 8).outcome == BOUNDED_SECURE
        loc = check_locality(base, 8)
        assert loc.outcome == INSECURE
        assert loc.witness == (("a", "b"), ("b", "a"), "A", "B")
        v = check_ta_may_security(primed, 8)
        assert v.outcome == INSECURE
        assert v.witness == (("a", "b", "a"), ("b", "a", "a"), "B")

    def test_figure4_variants_ordered_by_permissiveness(self, figure4_doc):
        base = figure4_doc.base
        primed = figure4_doc.select("primed")
        assert policy_leq(base, primed, 8)
        assert not policy_leq(primed, base, 8)
        assert policy_leq(base, base, 8)


class TestProhibitiveRoutesAgree:
    def test_corpus(self, figure1, figure2_doc, figure3):
        for system in (figure1, figure2_doc.base, figure2_doc.select("dotted"), figure3):
            unw = check_unwinding_security(system, 5)
            must = check_ta_must_security(system, 5)
            assert unw.outcome == must.outcome
            assert unw.witness == must.witness

    def test_random_systems(self):
        for system in random_systems(1313, 10):
            unw = check_unwinding_security(system, 3)
            must = check_ta_must_security(system, 3)
            assert unw.outcome == must.outcome
            assert unw.witness == must.witness


class TestPurgeFunctions:
    def test_dsrc_of_empty_trace_is_the_observer(self, figure1):
        assert dsrc(figure1, (), "B") == frozenset({"B"})

    def test_dsrc_matches_oracle(self):
        for system in random_systems(1111, 10):
            sig = system.signature
            for trace in traces_upto(sig, 4):
                for u in sig.domains:
                    assert dsrc(system, trace, u) == naive_dsrc(system, trace, u)

    def test_lpurge_matches_oracle(self):
        for system in random_systems(2222, 10):
            sig = system.signature
            for trace in traces_upto(sig, 4):
                for u in sig.domains:
                    assert lpurge(system, trace, u) == naive_lpurge(system, trace, u)

    def test_dipurge_matches_oracle(self):
        for system in random_systems(3333, 10):
            sig = system.signature
            for trace in traces_upto(sig, 4):
                for u in sig.domains:
                    assert dipurge(system, trace, u) == naive_dipurge(
                        system, trace, u
                    )

    def test_dipurge_result_is_a_run_of_the_system(self):
        for system in random_systems(4444, 6):
            sig = system.signature
            for trace in traces_upto(sig, 4):
                for u in sig.domains:
                    run(system, dipurge(system, trace, u))

    def test_purges_are_subsequences(self):
        for system in random_systems(5555, 6):
            sig = system.signature
            for trace in traces_upto(sig, 4):
                for u in sig.domains:
                    for purged in (
                        lpurge(system, trace, u),
                        dipurge(system, trace, u),
                    ):
                        it = iter(trace)
                        assert all(a in it for a in purged)

    def test_unknown_domain_rejected(self, figure1):
        with pytest.raises(InputError):
            lpurge(figure1, (), "Z")
        with pytest.raises(InputError):
            dipurge(figure1, (), "Z")
        with pytest.raises(InputError):
            dsrc(figure1, (), "Z")

    def test_purge_from_arbitrary_start_state(self, figure3):
        # from s1, H may reach D, so an h prefix survives for D
        assert lpurge(figure3, ("h",), "D", state="s0") == ("h",)
        assert lpurge(figure3, ("h",), "L", state="s0") == ()


class TestPolicyShape:
    def test_check_static_on_corpus(self, figure1, figure3):
        assert not check_static(figure1)
        assert not check_static(figure3)

    def test_check_static_true_when_edges_never_change(self):
        system = admin_system()
        frozen = PolicyEnhancedSystem(
            signature=system.signature,
            states=system.states,
            initial=system.initial,
            transitions=system.transitions,
            obs=system.obs,
            edges={s: system.edges["s0"] for s in system.states},
        )
        assert check_static(frozen)
        assert not check_static(system)

    def test_static_reading_notes_state_dependence(self, figure1):
        v = check_ta_static_security(figure1, 6)
        assert v.outcome == INSECURE
        assert v.witness == (("p", "a"), ("a",), "B")
        assert any("state-dependent" in n for n in v.notes)

    def test_globally_known_policy_accepted(self):
        v = check_globally_known(admin_system(), "D", 5)
        assert v.outcome == BOUNDED_SECURE
        assert any("locality cross-check passed" in n for n in v.notes)

    def test_globally_known_rejects_non_admin_changes(self):
        v = check_globally_known(admin_system(admin_changes_policy=False), "D", 5)
        assert v.outcome == INSECURE
        assert v.witness == ((), ("l",))
        assert any("not a function" in n for n in v.notes)

    def test_globally_known_requires_total_visibility(self, figure3):
        v = check_globally_known(figure3, "D", 5)
        assert v.outcome == INSECURE
        assert v.witness == ("s0", "H")

    def test_globally_known_unknown_domain(self, figure1):
        with pytest.raises(InputError):
            check_globally_known(figure1, "Z", 3)

    def test_policy_leq_requires_matching_signatures(self, figure1, figure3):
        with pytest.raises(InputError):
            policy_leq(figure1, figure3, 3)


class TestRestrictToLocal:
    def test_never_grants_more_than_the_original(self):
        for system in random_systems(6666, 10):
            depth = 3
            restricted = restrict_to_local(system, depth)
            sig = system.signature
            for trace in traces_upto(sig, depth):
                end = run(system, trace)
                assert restricted.edges[trace] <= system.edges[end]

    def test_localized_policy_passes_locality_inside_the_bound(self, figure4_doc):
        base = figure4_doc.base
        assert check_locality(base, 6).outcome == INSECURE
        restricted = restrict_to_local(base, 6)
        inner = check_locality(restricted, 4)
        assert inner.outcome == BOUNDED_SECURE

    def test_local_policy_is_unchanged(self, figure3):
        depth = 4
        assert check_locality(figure3, depth).outcome == BOUNDED_SECURE
        restricted = restrict_to_local(figure3, depth)
        for trace in traces_upto(figure3.signature, depth):
            assert restricted.edges[trace] == figure3.edges[run(figure3, trace)]

    def test_result_is_a_trace_tree(self, figure1):
        restricted = restrict_to_local(figure1, 3)
        assert restricted.initial == ()
        assert all(isinstance(s, tuple) for s in restricted.states)
        assert restricted.truncated == frozenset(
            s for s in restricted.states if len(s) == 3
        )


class TestStateCertifier:
    def test_certifies_figure3_at_every_depth(self, figure3):
        v = state_unwinding_check(figure3, mode="box")
        assert v.outcome == CERTIFIED_SECURE
        assert v.details["states_checked"] == 3
        assert any("certifies" in n for n in v.notes)

    def test_box_is_inconclusive_on_figure1(self, figure1):
        v = state_unwinding_check(figure1, mode="box")
        assert v.outcome == INCONCLUSIVE
        assert v.witness == ("s0", "s2", "B")
        assert any("not a counterexample" in n for n in v.notes)

    def test_diamond_matches_the_permissive_verdict_on_figure1(self, figure1):
        # box tracks the prohibitive reading, diamond the permissive one
        assert state_unwinding_check(figure1, mode="diamond").outcome == CERTIFIED_SECURE

    def test_unknown_mode_rejected(self, figure1):
        with pytest.raises(InputError):
            state_unwinding_check(figure1, mode="circle")

    def test_certification_is_sound_on_random_systems(self):
        for system in random_systems(7777, 15):
            boxed = state_unwinding_check(system, mode="box")
            if boxed.outcome == CERTIFIED_SECURE:
                assert check_unwinding_security(system, 4).outcome == BOUNDED_SECURE
            diamond = state_unwinding_check(system, mode="diamond")
            if diamond.outcome == CERTIFIED_SECURE:
                assert check_ta_may_security(system, 4).outcome == BOUNDED_SECURE


class TestInactiveEdges:
    def build(self):
        sig = Signature(
            domains=("A", "G"), actions=("a",), dom={"a": "A"}
        )
        states = ("s0",)
        return PolicyEnhancedSystem(
            signature=sig,
            states=states,
            initial="s0",
            transitions={("s0", "a"): "s0"},
            obs={("A", "s0"): 0, ("G", "s0"): 0},
            edges={"s0": frozenset({("G", "A")})},
        )

    def test_strips_edges_from_actionless_domains(self):
        system = self.build()
        stripped, notes = strip_inactive_edges(system)
        assert stripped.edges["s0"] == frozenset()
        assert len(notes) == 1 and "G" in notes[0]

    def test_identity_when_nothing_to_strip(self, figure1):
        stripped, notes = strip_inactive_edges(figure1)
        assert stripped is figure1
        assert notes == ()

    def test_checkers_note_the_stripping(self):
        v = check_ta_may_security(self.build(), 3)
        assert v.outcome == BOUNDED_SECURE
        assert any("inactive" in n for n in v.notes)


class TestBulkPartitions:
    def test_bulk_labels_match_single_trace_walks(self):
        from nifcheck import TreeArena, partition_by, ta_may

        for system in random_systems(8888, 8):
            sig = system.signature
            depth = 3
            bulk = ta_may_partitions(system, depth)
            arena = TreeArena()
            traces = list(traces_upto(sig, depth))
            for u in sig.domains:
                labels = {t: ta_may(system, t, u, arena) for t in traces}
                single = partition_by(sig, labels, depth, domain=u)
                got = {frozenset(c) for c in bulk[u].classes()}
                want = {frozenset(c) for c in single.classes()}
                assert got == want
