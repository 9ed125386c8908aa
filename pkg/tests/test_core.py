from __future__ import annotations

from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from raum import models
from raum.core import (
    ChoiceDataset,
    PreferenceOrder,
    RaumRule,
    Universe,
    best,
    best_table,
    choice_prob,
    enumerate_orders,
    enumerate_sets,
    rank_permutation,
    ranks_from_utilities,
    submasks,
    unrank_permutation,
    validate_rule,
)

U2, U3 = Universe.letters(2), Universe.letters(3)


def order(text, universe=U3):
    return PreferenceOrder.parse(text, universe)


class TestUniverse:
    def test_labels_must_be_sorted(self):
        with pytest.raises(ValueError, match="sorted"):
            Universe(("b", "a"))

    def test_size_limits(self):
        with pytest.raises(ValueError):
            Universe(("a",))
        with pytest.raises(ValueError):
            Universe.of("abcdefghi")

    def test_masks(self):
        assert U3.grand == 7
        assert U3.mask("ac") == 0b101
        assert U3.format_set(0b110) == "{b,c}"


class TestOrders:
    @pytest.mark.parametrize("n", range(1, 7))
    def test_rank_round_trip_exhaustive(self, n):
        for k, perm in enumerate(permutations(range(n))):
            assert rank_permutation(perm) == k
            assert unrank_permutation(k, n) == perm

    def test_enumerations(self):
        assert len(enumerate_orders(U3)) == 6
        assert enumerate_sets(U3) == list(range(1, 8))
        assert [o.ranking for o in enumerate_orders(U2)] == [(0, 1), (1, 0)]
        assert enumerate_sets(U2) == [1, 2, 3]

    def test_parse_ignores_whitespace(self):
        assert order(" c > a>b ").ranking == (2, 0, 1)

    @pytest.mark.parametrize("bad", ["a>b", "a>b>b", "a>>b>c", "a>b>z"])
    def test_parse_rejects(self, bad):
        with pytest.raises((ValueError, KeyError)):
            order(bad)

    def test_ranks_from_utilities(self):
        u = np.array([[3.0, 2.0, 1.0], [0.0, 1.0, 2.0], [1.0, 3.0, 2.0]])
        assert ranks_from_utilities(u).tolist() == [0, 5, 3]


class TestBest:
    def test_examples(self):
        assert best(order("a>b>c"), U3.mask("bc")) == 1
        assert best(order("a>b>c"), U3.mask("abc")) == 0
        assert best(order("c>b>a"), U3.mask("ab")) == 1

    def test_empty_set(self):
        with pytest.raises(ValueError, match="empty consideration set"):
            best(order("a>b>c"), 0)

    @given(rank=st.integers(0, 119), A=st.integers(1, 31), B=st.integers(1, 31))
    def test_union_property(self, rank, A, B):
        o = PreferenceOrder.from_rank(rank, 5)
        assert best(o, A | B) in {best(o, A), best(o, B)}

    def test_table_matches_scalar(self):
        table = best_table(4)
        for o in enumerate_orders(Universe.letters(4)):
            for m in range(1, 16):
                assert table[o.rank, m] == best(o, m)


class TestDataset:
    def test_fills_missing_alternatives(self):
        ds = ChoiceDataset.from_labels("abc", {"ab": {"a": 1.0}})
        assert ds.probs[0] == {0: 1.0, 1: 0.0}

    def test_rejects_bad_sum(self):
        with pytest.raises(ValueError, match="sum"):
            ChoiceDataset.from_labels("ab", {"ab": {"a": 0.5, "b": 0.4}})

    def test_rejects_support_outside_menu(self):
        with pytest.raises(ValueError, match="not in the menu"):
            ChoiceDataset.from_labels("abc", {"ab": {"a": 0.5, "c": 0.5}})

    def test_rejects_duplicates(self):
        u = U2
        with pytest.raises(ValueError, match="duplicate"):
            ChoiceDataset(u, (3, 3), ({0: 1.0}, {0: 1.0}))

    def test_tolerance_is_1e9(self):
        ChoiceDataset.from_labels("ab", {"ab": {"a": 0.5, "b": 0.5 + 5e-10}})
        with pytest.raises(ValueError):
            ChoiceDataset.from_labels("ab", {"ab": {"a": 0.5, "b": 0.5 + 5e-9}})

    def test_pairs_order(self):
        ds = ChoiceDataset.from_labels("abc", [("bc", {"b": 1.0}), ("ab", {"a": 1.0})])
        assert ds.pairs() == [(1, 6), (2, 6), (0, 3), (1, 3)]


class TestChoiceProb:
    def test_dependent_attention_rule(self):
        rule = models.dependent_attention_rule()
        assert choice_prob(rule, 3, 0) == pytest.approx(0.5, abs=1e-15)
        assert choice_prob(rule, 1, 0) == 1.0

    def test_full_attention_degenerate(self):
        p = np.zeros(6)
        p[order("a>b>c").rank] = 1.0
        rule = models.gen_rum(U3, p)
        assert choice_prob(rule, U3.mask("bc"), 1) == 1.0

    def test_alternative_outside_menu(self):
        with pytest.raises(ValueError):
            choice_prob(models.dependent_attention_rule(), 1, 1)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10**6), n=st.integers(2, 4))
    def test_sums_to_one(self, seed, n):
        u = Universe.letters(n)
        rng = np.random.default_rng(seed)
        rule = models.gen_ram_mixture(u, models.random_marginal(u, rng),
                                      models.random_monotone_attention(u, rng))
        for A in range(1, u.grand + 1):
            assert sum(rule.choice_probs(A).values()) == pytest.approx(1.0, abs=1e-9)


class TestValidateRule:
    def test_dependent_attention_clean(self, dependent_data):
        assert validate_rule(models.dependent_attention_rule(), dependent_data).ok

    def test_perturbation_breaks_stability(self):
        v = models.dependent_attention_rule().values.copy()
        v[2, 0, 0] -= 0.1
        v[2, 1, 0] += 0.1
        rule = RaumRule(U2, v)
        report = validate_rule(rule, rule.induced_dataset(), check_monotonicity=False)
        stab = report.of_kind("stability")
        assert stab and report.max_magnitude("stability") == pytest.approx(0.1)

    def test_feasibility_violation(self):
        v = models.dependent_attention_rule().values.copy()
        v[1, 0, 0] = 0.5  # menu {b}, set {a}
        v[1, 0, 1] = 0.0
        rule = RaumRule(U2, v)
        report = validate_rule(rule, rule.induced_dataset(menus=[3]), check_stability=False,
                               check_monotonicity=False)
        assert [x.kind for x in report] == ["feasibility"]

    def test_fit_violation(self, dependent_data):
        p = np.zeros(2)
        p[0] = 1.0
        report = validate_rule(models.gen_rum(U2, p), dependent_data)
        assert report.of_kind("fit")

    def test_monotonicity_violation(self):
        a, ab, abc = 1, 3, 7
        lam = models.full_attention(U3)
        lam[:, ab - 1, ab - 1], lam[:, ab - 1, a - 1] = 0.8, 0.2
        lam[:, abc - 1, abc - 1], lam[:, abc - 1, a - 1] = 0.5, 0.5
        with pytest.raises(models.AttentionRuleError, match="monotonicity"):
            models.gen_ram_mixture(U3, np.full(6, 1 / 6), lam)
        rule = RaumRule(U3, np.transpose(lam / 6, (1, 0, 2)))
        report = validate_rule(rule, rule.induced_dataset())
        kinds = {x.kind for x in report}
        assert kinds == {"monotonicity"}
        hit = [x for x in report if x.where[0] == ("set", ab) and x.where[1] == ("set", abc)]
        assert len(hit) == 6 and all(x.magnitude == pytest.approx(0.3 / 6) for x in hit)

    def test_universe_mismatch(self, dependent_data):
        rule = models.gen_rum(U3, np.full(6, 1 / 6))
        with pytest.raises(ValueError, match="universe"):
            validate_rule(rule, dependent_data)

    def test_submasks_increasing(self):
        assert submasks(0b1011) == [1, 2, 3, 8, 9, 10, 11]
