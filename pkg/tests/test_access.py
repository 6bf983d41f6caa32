"""Structured states, the monitor conditions, and the completeness construction."""

import pytest

from nifcheck import (
    ALL_CONDITIONS,
    BOUNDED_SECURE,
    CERTIFIED_SECURE,
    INCONCLUSIVE,
    DrmReport,
    InputError,
    PolicyEnhancedSystem,
    Signature,
    StructuredSystem,
    ac_complete_construct,
    check_drm,
    check_ta_may_security,
    derive_security_from_drm,
    dynacrel,
    run,
    traces_upto,
)

OSET_U = ("oset", "U")
OSET_V = ("oset", "V")


def build_case(
    n_states: int = 2,
    trans: dict = None,
    obs: dict = None,
    edges: dict = None,
    watch: dict = None,
    alters: dict = None,
    values: dict = None,
    plain: tuple = ("x",),
) -> StructuredSystem:
    """Two-domain scaffold with the oset bookkeeping filled in.

    ``watch``/``alters`` give per (domain, state) extra objects; contents of
    plain objects default to 0 and transitions to self-loops.
    """
    trans = trans or {}
    obs = obs or {}
    edges = edges or {}
    watch = watch or {}
    alters = alters or {}
    values = values or {}
    states = tuple(f"s{i}" for i in range(n_states))
    sig = Signature(domains=("U", "V"), actions=("u", "v"), dom={"u": "U", "v": "V"})
    base = PolicyEnhancedSystem(
        signature=sig,
        states=states,
        initial="s0",
        transitions={
            (s, a): trans.get((s, a), s) for s in states for a in sig.actions
        },
        obs={(d, s): obs.get((d, s), 0) for d in sig.domains for s in states},
        edges={s: frozenset(edges.get(s, ())) for s in states},
    )
    osets = {"U": OSET_U, "V": OSET_V}
    objects = tuple(plain) + (OSET_U, OSET_V)
    observe = {}
    alter = {}
    contents = {}
    for s in states:
        for d in sig.domains:
            observe[(d, s)] = frozenset({osets[d], *watch.get((d, s), ())})
            alter[(d, s)] = frozenset(alters.get((d, s), ()))
            contents[(osets[d], s)] = observe[(d, s)]
        for o in plain:
            contents[(o, s)] = values.get((o, s), 0)
    return StructuredSystem(
        base=base,
        objects=objects,
        osets=osets,
        contents=contents,
        observe=observe,
        alter=alter,
    )


class TestDynacrel:
    def test_reflexive(self):
        system = build_case()
        assert dynacrel(system, "U", "s0", "s0")

    def test_separates_on_watched_contents(self):
        system = build_case(
            watch={("U", "s0"): ("x",), ("U", "s1"): ("x",)},
            values={("x", "s0"): 0, ("x", "s1"): 1},
        )
        assert not dynacrel(system, "U", "s0", "s1")
        # V does not watch x, so the states look alike to it
        assert dynacrel(system, "V", "s0", "s1")

    def test_symmetric_thanks_to_the_oset_object(self):
        # observe sets differ, so the oset contents differ, both directions
        system = build_case(watch={("U", "s1"): ("x",)})
        assert not dynacrel(system, "U", "s0", "s1")
        assert not dynacrel(system, "U", "s1", "s0")

    def test_unknown_domain_rejected(self):
        with pytest.raises(InputError):
            dynacrel(build_case(), "W", "s0", "s0")

    def test_uncovered_state_rejected(self):
        with pytest.raises(InputError):
            dynacrel(build_case(), "U", "s9", "s0")


class TestTableValidation:
    def test_duplicate_object_rejected(self):
        good = build_case()
        with pytest.raises(InputError):
            StructuredSystem(
                base=good.base,
                objects=("x", "x", OSET_U, OSET_V),
                osets=good.osets,
                contents=good.contents,
                observe=good.observe,
                alter=good.alter,
            )

    def test_missing_oset_rejected(self):
        good = build_case()
        with pytest.raises(InputError):
            StructuredSystem(
                base=good.base,
                objects=good.objects,
                osets={"U": OSET_U},
                contents=good.contents,
                observe=good.observe,
                alter=good.alter,
            )

    def test_missing_observe_row_rejected(self):
        good = build_case(trans={("s0", "u"): "s1"})
        observe = dict(good.observe)
        del observe[("V", "s1")]
        broken = StructuredSystem(
            base=good.base,
            objects=good.objects,
            osets=good.osets,
            contents=good.contents,
            observe=observe,
            alter=good.alter,
        )
        with pytest.raises(InputError, match="observe set missing"):
            check_drm(broken, 3)

    def test_oset_contents_must_equal_the_observe_set(self):
        good = build_case()
        contents = dict(good.contents)
        contents[(OSET_U, "s0")] = frozenset({OSET_U, "x"})
        broken = StructuredSystem(
            base=good.base,
            objects=good.objects,
            osets=good.osets,
            contents=contents,
            observe=good.observe,
            alter=good.alter,
        )
        with pytest.raises(InputError, match="do not equal"):
            check_drm(broken, 3)

    def test_negative_depth_rejected(self):
        with pytest.raises(InputError):
            check_drm(build_case(), -1)


class TestEachCondition:
    """One crafted system per condition, failing it and nothing else."""

    def assert_only_fails(self, report: DrmReport, *names: str):
        failed = tuple(c.name for c in report.conditions if not c.holds)
        assert failed == names, failed

    def test_drm1_equal_looking_states_must_agree_on_obs(self):
        system = build_case(
            trans={("s0", "u"): "s1"},
            obs={("U", "s1"): 1},
        )
        report = check_drm(system, 3)
        self.assert_only_fails(report, "DRM-1")
        assert report.condition("DRM-1").witness == ("s0", "s1", "U")

    def test_drm2_joint_updates_must_agree(self):
        system = build_case(
            n_states=4,
            trans={("s0", "u"): "s1", ("s0", "v"): "s2", ("s1", "v"): "s3"},
            alters={(("V"), s): ("x",) for s in ("s0", "s1", "s2", "s3")},
            values={("x", "s2"): 1, ("x", "s3"): 2},
        )
        report = check_drm(system, 3)
        self.assert_only_fails(report, "DRM-2")
        assert report.condition("DRM-2").witness == ("s0", "s1", "v", "x")

    def test_drm3_changes_require_alter_rights(self):
        system = build_case(
            trans={("s0", "v"): "s1"},
            values={("x", "s1"): 1},
        )
        report = check_drm(system, 3)
        self.assert_only_fails(report, "DRM-3")
        assert report.condition("DRM-3").witness == ("s0", "v", "x")

    def test_drm4_observe_growth_is_bounded_by_the_actor(self):
        system = build_case(
            trans={("s0", "v"): "s1"},
            watch={("U", "s1"): ("x",)},
            alters={("V", "s0"): (OSET_U,), ("V", "s1"): (OSET_U,)},
            edges={"s0": {("V", "U")}, "s1": {("V", "U")}},
        )
        report = check_drm(system, 3)
        self.assert_only_fails(report, "DRM-4")
        assert report.condition("DRM-4").witness == ("s0", "v", "U", "x")

    def test_drm5_channel_width_fixed_while_the_flow_lasts(self):
        system = build_case(
            trans={("s0", "u"): "s1"},
            watch={("U", "s0"): ("x",), ("U", "s1"): ("x",)},
            alters={("V", "s0"): ("x",)},
            edges={"s0": {("V", "U")}, "s1": {("V", "U")}},
        )
        report = check_drm(system, 3)
        self.assert_only_fails(report, "DRM-5", "DRM-5'")
        assert report.condition("DRM-5").witness == ("s0", "s1", "U", "V")

    def test_strong_five_drops_the_edge_condition(self):
        system = build_case(
            trans={("s0", "u"): "s1"},
            watch={("U", "s0"): ("x",), ("U", "s1"): ("x",)},
            alters={("V", "s0"): ("x",)},
            edges={"s0": {("V", "U")}},
        )
        report = check_drm(system, 3)
        self.assert_only_fails(report, "DRM-5'")
        assert report.condition("DRM-5'").witness == ("s0", "s1", "U", "V")
        assert report.holds
        assert not check_drm(system, 3, strong_five=True).holds

    def test_drm6_overlap_requires_the_edge(self):
        system = build_case(
            n_states=1,
            watch={("V", "s0"): ("x",)},
            alters={("U", "s0"): ("x",)},
        )
        report = check_drm(system, 3)
        self.assert_only_fails(report, "DRM-6")
        assert report.condition("DRM-6").witness == ("s0", "U", "V")

    def test_clean_system_passes_everything(self):
        report = check_drm(build_case(), 3)
        self.assert_only_fails(report)
        assert report.holds
        assert check_drm(build_case(), 3, strong_five=True).holds


class TestReportShape:
    def test_conditions_come_in_fixed_order(self):
        report = check_drm(build_case(), 2)
        names = tuple(c.name for c in report.conditions)
        assert names == ("DRM-1", "DRM-2", "DRM-3", "DRM-4", "DRM-5", "DRM-5'", "DRM-6")
        assert set(names) == set(ALL_CONDITIONS)

    def test_unknown_condition_lookup_rejected(self):
        report = check_drm(build_case(), 2)
        with pytest.raises(InputError):
            report.condition("DRM-9")

    def test_json_round_trip_fields(self):
        report = check_drm(build_case(), 2)
        blob = report.to_json()
        assert blob["holds"] is True
        assert blob["depth"] == 2
        assert blob["strong_five"] is False
        assert [c["name"] for c in blob["conditions"]] == [
            c.name for c in report.conditions
        ]
        assert all(set(c) == {"name", "holds", "witness", "scope"} for c in blob["conditions"])

    def test_every_condition_records_a_scope(self):
        report = check_drm(build_case(), 2)
        assert all(c.scope for c in report.conditions)


class TestDeriveSecurity:
    def test_base_conditions_certify_the_permissive_reading(self):
        system = build_case(
            trans={("s0", "u"): "s1"},
            watch={("U", "s0"): ("x",), ("U", "s1"): ("x",)},
            alters={("V", "s0"): ("x",)},
            edges={"s0": {("V", "U")}},
        )
        verdict = derive_security_from_drm(check_drm(system, 3), system)
        assert verdict.outcome == CERTIFIED_SECURE
        assert verdict.details["certified"] == ["ta-permissive"]
        assert verdict.details["failed"] == ["DRM-5'"]

    def test_strong_five_extends_to_the_prohibitive_reading(self):
        system = build_case()
        verdict = derive_security_from_drm(check_drm(system, 3), system)
        assert verdict.outcome == CERTIFIED_SECURE
        assert verdict.details["certified"] == ["ta-permissive", "unwinding"]

    def test_failed_conditions_certify_nothing(self):
        system = build_case(trans={("s0", "u"): "s1"}, obs={("U", "s1"): 1})
        verdict = derive_security_from_drm(check_drm(system, 3), system)
        assert verdict.outcome == INCONCLUSIVE
        assert verdict.details["certified"] == []
        assert "DRM-1" in verdict.details["failed"]
        assert any("not necessary" in n for n in verdict.notes)


class TestCompletenessConstruction:
    def test_secure_system_yields_all_base_conditions(self, figure3):
        structured = ac_complete_construct(figure3, 4)
        report = check_drm(structured, 4, strong_five=True)
        assert report.holds
        assert all(c.holds for c in report.conditions)

    def test_figure1_passes_base_but_not_strong_five(self, figure1):
        structured = ac_complete_construct(figure1, 4)
        report = check_drm(structured, 4)
        assert report.holds
        strong = report.condition("DRM-5'")
        assert not strong.holds
        assert strong.witness == ((), ("p",), "B", "A")

    def test_tables_follow_the_policy(self, figure3):
        depth = 3
        structured = ac_complete_construct(figure3, depth)
        sig = figure3.signature
        for trace in traces_upto(sig, depth):
            granted = figure3.edges[run(figure3, trace)]
            for u in sig.domains:
                assert structured.observe[(u, trace)] == frozenset(
                    {u, ("oset", u)}
                )
                assert structured.alter[(u, trace)] == frozenset(
                    {u} | {v for (w, v) in granted if w == u}
                )

    def test_insecure_system_warns(self, figure4_doc):
        primed = figure4_doc.select("primed")
        assert check_ta_may_security(primed, 4).outcome == "INSECURE"
        with pytest.warns(UserWarning, match="failed the permissive"):
            structured = ac_complete_construct(primed, 4)
        assert not check_drm(structured, 4).holds

    def test_certificate_round_trip(self, figure3):
        # bounded check passes, construction certifies, derivation agrees
        assert check_ta_may_security(figure3, 4).outcome == BOUNDED_SECURE
        structured = ac_complete_construct(figure3, 4)
        verdict = derive_security_from_drm(check_drm(structured, 4), structured)
        assert verdict.outcome == CERTIFIED_SECURE
