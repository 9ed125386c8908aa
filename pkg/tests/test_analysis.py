from __future__ import annotations

from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from raum import analysis, lp, models
from raum.analysis import NoRepresentation, RaumProblem, irregular_triples, restrict_orders, test_raum
from raum.core import ChoiceDataset, PreferenceOrder, Universe, enumerate_orders, validate_rule

U2, U3, U4 = (Universe.letters(n) for n in (2, 3, 4))
PAD = analysis.BOUND_PAD


def ram_dataset(universe, seed, menus=None):
    rng = np.random.default_rng(seed)
    rule = models.gen_ram_mixture(universe, models.random_marginal(universe, rng, 0.3),
                                  models.random_monotone_attention(universe, rng))
    return rule, rule.induced_dataset(menus)


def vertex_range(system, coefs, tol=1e-10):
    """Min and max of a linear objective over all basic feasible solutions."""
    G, g = system.dense(), system.g
    c = np.zeros(system.n_cols)
    for j, w in coefs.items():
        c[j] = w
    r = np.linalg.matrix_rank(G)
    vals = []
    for S in combinations(range(G.shape[1]), r):
        B = G[:, S]
        if np.linalg.matrix_rank(B) < r:
            continue
        x, *_ = np.linalg.lstsq(B, g, rcond=None)
        if np.abs(B @ x - g).max() <= tol and x.min() >= -tol:
            vals.append(c[list(S)] @ x)
    return min(vals), max(vals)


class TestCounterexample:
    def test_rejected_with_both(self, counterexample):
        v = test_raum(counterexample)
        assert not v.admits and v.certificate is None
        assert lp.verify_farkas(v.system.matrix(), v.system.g, v.farkas)
        assert v.distance > 1e-4

    @pytest.mark.parametrize("flags", [(False, True), (True, False)])
    def test_accepted_when_relaxed(self, counterexample, flags):
        v = test_raum(counterexample, *flags)
        assert v.admits and v.relaxation == dict(zip(("stability", "monotonicity"), flags))
        report = validate_rule(v.certificate, counterexample, check_stability=flags[0], check_monotonicity=flags[1])
        assert report.ok, list(report)

    def test_full_mode_agrees(self, counterexample):
        assert not test_raum(counterexample, mode="full", compute_distance=False).admits

    def test_bounds_refuse_rejected_data(self, counterexample):
        with pytest.raises(NoRepresentation, match="no RAUM representation"):
            analysis.preference_bounds(counterexample, enumerate_orders(U4)[0])


class TestAcceptance:
    @settings(max_examples=20, deadline=None)
    @given(p=st.floats(0.0, 1.0))
    def test_complete_two_alternative_data(self, p):
        ds = ChoiceDataset.from_labels("ab", [("a", {"a": 1.0}), ("b", {"b": 1.0}),
                                              ("ab", {"a": p, "b": 1.0 - p})])
        v = test_raum(ds)
        assert v.admits and validate_rule(v.certificate, ds).ok

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_relaxation_monotone(self, seed):
        rng = np.random.default_rng(seed)
        probs = []
        menus = (3, 5, 6, 7, 11, 13, 14, 15)
        for m in menus:
            alts = [a for a in range(4) if m >> a & 1]
            probs.append(dict(zip(alts, rng.dirichlet(np.full(len(alts), 0.2)))))
        problem = RaumProblem(ChoiceDataset(U4, menus, tuple(probs)))
        both = problem.test(compute_distance=False).admits
        if both:
            assert problem.test(False, True, False).admits
            assert problem.test(True, False, False).admits
        assert problem.test(False, False, False).admits


class TestRegularity:
    def test_restricted_fixture(self, restricted):
        m = U4.mask
        assert irregular_triples(restricted) == [(1, m("ab"), m("abd")), (2, m("ac"), m("acd"))]
        assert analysis.flagged_alternatives(restricted) == [1, 2]

    def test_regular_data(self, ri_data):
        assert irregular_triples(ri_data) == []
        assert analysis.check_prop2(ri_data) == []

    def test_flagged_alternatives_are_never_worst(self, restricted):
        out = analysis.check_prop2(restricted)
        assert [a for a, _ in out] == [1, 2]
        assert all(hi <= PAD + 1e-12 for _, hi in out)


class TestPreferenceBounds:
    def test_singleton_menus_leave_everything_open(self):
        ds = ChoiceDataset.from_labels("abc", [(x, {x: 1.0}) for x in "abc"])
        for o, b in RaumProblem(ds).all_preference_bounds():
            assert b.lo == 0.0 and b.hi == 1.0, o

    def test_degenerate_rum_attains_one(self):
        p = np.zeros(6)
        top = PreferenceOrder.parse("a>b>c", U3)
        p[top.rank] = 1.0
        ds = models.gen_rum(U3, p).induced_dataset()
        b = analysis.preference_bounds(ds, top)
        assert b.hi == 1.0 and b.raw_hi == pytest.approx(1.0, abs=1e-8)

    def test_witnesses_are_valid_and_attain(self):
        _, ds = ram_dataset(U3, 4, menus=[3, 6, 7])
        problem = RaumProblem(ds)
        o = enumerate_orders(U3)[2]
        b = problem.preference_bounds(o)
        for rule, value in ((b.attained_lo, b.raw_lo), (b.attained_hi, b.raw_hi)):
            assert validate_rule(rule, ds, tol=2e-8).ok
            assert rule.marginal(U3.grand)[o.rank] == pytest.approx(value, abs=1e-9)
        assert b.lo <= b.raw_lo and b.raw_hi <= b.hi

    def test_menu_invariance(self):
        _, ds = ram_dataset(U3, 8, menus=[3, 5, 7])
        problem = RaumProblem(ds)
        grand = problem.all_preference_bounds()
        for menu in (1, 3, 6):
            other = problem.all_preference_bounds(menu=menu)
            for (_, x), (_, y) in zip(grand, other):
                assert abs(x.raw_lo - y.raw_lo) <= 2e-7 and abs(x.raw_hi - y.raw_hi) <= 2e-7

    def test_threads_match_serial(self):
        _, ds = ram_dataset(U3, 2)
        problem = RaumProblem(ds)
        serial = [b.as_dict() for _, b in problem.all_preference_bounds()]
        threaded = [b.as_dict() for _, b in problem.all_preference_bounds(jobs=3)]
        assert serial == pytest.approx(threaded)

    def test_bounds_contain_truth(self):
        rule, ds = ram_dataset(U3, 12, menus=[3, 5, 6, 7])
        truth = rule.marginal(U3.grand)
        for o, b in RaumProblem(ds).all_preference_bounds():
            assert b.lo <= truth[o.rank] <= b.hi


class TestPrediction:
    def test_singletons_only_against_vertices(self):
        ds = ChoiceDataset.from_labels("ab", [("a", {"a": 1.0}), ("b", {"b": 1.0})])
        problem = RaumProblem(ds)
        b = problem.predict_bounds(3, 0)
        assert (b.lo, b.hi) == (0.0, 1.0)
        lo, hi = vertex_range(problem.system(), problem.prediction_objective(3, 0))
        assert b.raw_lo == pytest.approx(lo, abs=1e-9) and b.raw_hi == pytest.approx(hi, abs=1e-9)

    def test_interior_against_vertices(self):
        ds = ChoiceDataset.from_labels("ab", [("a", {"a": 1.0}), ("ab", {"a": 0.3, "b": 0.7})])
        problem = RaumProblem(ds)
        b = problem.predict_bounds(2, 1)
        lo, hi = vertex_range(problem.system(), problem.prediction_objective(2, 1))
        assert b.raw_lo == pytest.approx(lo, abs=1e-9) and b.raw_hi == pytest.approx(hi, abs=1e-9)

    def test_observed_menu_is_a_point(self, ri_data):
        b = analysis.predict_bounds(ri_data, 7, 0)
        assert b.raw_lo == pytest.approx(2 / 3, abs=2e-8)
        assert b.raw_hi == pytest.approx(2 / 3, abs=2e-8)

    def test_rum_prediction_contains_truth(self):
        rule = models.gen_rum(U3, models.logit_marginal(np.array([3.0, 2.0, 1.0])))
        ds = rule.induced_dataset(menus=[3, 5, 7])
        b = analysis.predict_bounds(ds, 6, 1)
        assert b.lo <= rule.choice_probs(6)[1] <= b.hi

    def test_alternative_outside_menu(self, ri_data):
        with pytest.raises(ValueError, match="not in menu"):
            analysis.predict_bounds(ri_data, 3, 2)


class TestWelfare:
    def test_dependent_attention_rule(self):
        assert analysis.welfare_of_rule(models.dependent_attention_rule(), 3) == pytest.approx(1 / 3)
        assert analysis.welfare_of_rule(models.dependent_attention_rule(), 3, literal=True) == 0.0

    def test_full_attention_has_no_loss(self):
        rule = models.gen_rum(U3, np.full(6, 1 / 6))
        assert all(analysis.welfare_of_rule(rule, m) == 0.0 for m in range(1, 8))

    def test_rum_data_lower_bound_zero(self):
        ds = models.gen_rum(U3, models.logit_marginal(np.array([1.0, 0.5, 0.2]))).induced_dataset()
        b = analysis.welfare_bounds(ds, 7)
        assert b.lo == 0.0 and b.hi > 0.0

    def test_dependent_attention_contains_rule_value(self, dependent_data):
        b = analysis.welfare_bounds(dependent_data, 3)
        assert b.lo <= 1 / 3 <= b.hi

    def test_literal_is_zero(self, dependent_data):
        b = analysis.welfare_bounds(dependent_data, 3, literal=True)
        assert (b.lo, b.hi) == (0.0, 0.0)

    def test_restricted_total(self, restricted):
        # a>b makes the abd choice a loss; b>a makes the ab choice one; likewise for c
        problem = RaumProblem(restricted)
        total = problem.welfare_bounds(total=True)
        assert total.raw_lo == pytest.approx(2.0, abs=1e-8)
        parts = [problem.welfare_bounds(m) for m in restricted.menus]
        assert sum(p.lo for p in parts) <= total.lo and total.hi <= sum(p.hi for p in parts)

    def test_unobserved_menu(self, restricted, dependent_data):
        with pytest.raises(ValueError, match="not observed"):
            analysis.welfare_bounds(restricted, U4.grand)
        with pytest.raises(ValueError, match="outside the universe"):
            analysis.welfare_bounds(dependent_data, 5)


class TestRestrictedDomain:
    def test_all_orders_identical(self):
        _, ds = ram_dataset(U3, 6, menus=[3, 5, 7])
        full = RaumProblem(ds).all_preference_bounds()
        same = restrict_orders(ds, enumerate_orders(U3)).all_preference_bounds()
        assert [b.as_dict() for _, b in full] == [b.as_dict() for _, b in same]

    def test_single_order_domain(self):
        ds = ChoiceDataset.from_labels("ab", [("ab", {"a": 1.0})])
        problem = restrict_orders(ds, [PreferenceOrder.parse("b>a", U2)])
        assert problem.test().admits
        b = problem.preference_bounds(PreferenceOrder.parse("b>a", U2))
        assert b.raw_lo == pytest.approx(1.0, abs=1e-9) and b.hi == 1.0

    def test_order_outside_domain(self):
        ds = ChoiceDataset.from_labels("ab", [("ab", {"a": 1.0})])
        problem = restrict_orders(ds, [PreferenceOrder.parse("b>a", U2)])
        with pytest.raises(ValueError, match="outside the preference domain"):
            problem.preference_bounds(PreferenceOrder.parse("a>b", U2))

    def test_empty_whitelist(self):
        ds = ChoiceDataset.from_labels("ab", [("ab", {"a": 1.0})])
        with pytest.raises(ValueError, match="empty"):
            restrict_orders(ds, [])
