from __future__ import annotations

import itertools
import math

import pytest
from hypothesis import given, settings, strategies as st

from theorykit.fixtures import FixtureResponders, fixture_data
from theorykit.gateway import CostLedger, Gateway, MockProvider
from theorykit.overlap import (
    DuplicateVerdict,
    PairCache,
    Series,
    expected_overlap,
    judge_duplicate,
    llm_duplicate_oracle,
    monte_carlo_curve,
    pair_key,
    theory_duplicates,
)
from theorykit.stats import (
    DOUBLE_MARK,
    LESS,
    SINGLE_MARK,
    bootstrap_one_sided,
    relative_delta_percent,
    round_half_away,
    significance_marks,
)
from tests.conftest import make_law, make_ref


def exhaustive_p(a, b) -> float:
    """Exact bootstrap p: share of all resample pairs where mean(a*) <= mean(b*)."""
    ma = [sum(c) for c in itertools.product(a, repeat=len(a))]
    mb = [sum(c) for c in itertools.product(b, repeat=len(b))]
    fails = sum(1 for x in ma for y in mb if x * len(b) <= y * len(a))
    return fails / (len(ma) * len(mb))


# -- stats -------------------------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 10), min_size=1, max_size=4), st.lists(st.integers(1, 10), min_size=1, max_size=4), st.integers(0, 1000))
def test_bootstrap_matches_enumeration(a, b, seed):
    p = bootstrap_one_sided(a, b, 20_000, seed=seed).p_value
    assert abs(p - exhaustive_p(a, b)) <= 0.02


def test_bootstrap_limits():
    assert bootstrap_one_sided([5] * 8, [5] * 8, 2000).p_value == 1.0
    assert bootstrap_one_sided([9, 8, 9], [1, 2, 1], 2000).p_value == 0.0
    assert bootstrap_one_sided([1, 2, 1], [9, 8, 9], 2000, direction=LESS).p_value == 0.0


def test_bootstrap_is_seeded():
    a, b = [3, 5, 7, 4], [4, 4, 6, 2]
    assert bootstrap_one_sided(a, b, 3000, seed=7) == bootstrap_one_sided(a, b, 3000, seed=7)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 10), min_size=2, max_size=6), st.integers(1, 3))
def test_bootstrap_monotone_in_shift(a, shift):
    # raising every literature score cannot make the one-sided p larger (same seed, same draws)
    b = [4, 5, 6]
    p0 = bootstrap_one_sided(a, b, 2000, seed=1).p_value
    p1 = bootstrap_one_sided([x + shift for x in a], b, 2000, seed=1).p_value
    assert p1 <= p0


def test_marks_and_deltas():
    assert significance_marks(0.005) == DOUBLE_MARK
    assert significance_marks(0.03) == SINGLE_MARK
    assert significance_marks(0.05) == ""
    assert round_half_away(2.5) == 3 and round_half_away(-2.5) == -3
    assert relative_delta_percent(0, 1) is None


@pytest.mark.parametrize(
    "param,lit,delta",
    [(5.3, 6.5, 23), (3.9, 5.8, 49), (2.0, 3.5, 75), (7.1, 7.9, 11), (5.0, 6.3, 26), (6.3, 6.1, -3)],
)
def test_relative_delta_examples(param, lit, delta):
    assert abs(relative_delta_percent(param, lit) - delta) <= 1


# -- overlap -------------------------------------------------------------------------


def hyper_at_least_one(pool: int, dups: int, n: int) -> float:
    n = min(n, pool)
    return 1 - math.comb(pool - dups, n) / math.comb(pool, n)


@pytest.mark.parametrize("dups,n", [(1, 1), (1, 3), (2, 2), (3, 4)])
def test_within_series_matches_hypergeometric(dups, n):
    # one probe family of size dups+1 in a pool of 10; every other law is distinct
    pool = [f"x{i}" for i in range(10)]
    family = set(pool[: dups + 1])
    dup = lambda a, b: a in family and b in family  # noqa: E731
    curve = monte_carlo_curve(pool, pool, [n], dup, samples_per_point=6000, seed=2, series=Series.WITHIN_LITERATURE)
    exact = (len(family) / 10) * hyper_at_least_one(9, dups, n)
    assert curve.points[0].mean == pytest.approx(exact, abs=0.025)


def test_identical_and_distinct_pools():
    a = [f"a{i}" for i in range(8)]
    b = [f"b{i}" for i in range(8)]
    every = monte_carlo_curve(a, b, [1, 5], lambda x, y: True, samples_per_point=20)
    never = monte_carlo_curve(a, b, [1, 5], lambda x, y: False, samples_per_point=20)
    assert [p.mean for p in every.points] == [1.0, 1.0]
    assert [p.mean for p in never.points] == [0.0, 0.0]


def test_effective_n_is_capped():
    pool = ["a", "b", "c"]
    curve = monte_carlo_curve(pool, pool, [10], lambda x, y: False, samples_per_point=5, series=Series.WITHIN_PARAMETRIC)
    assert curve.points[0].effective_n == 2 and curve.points[0].capped


def test_each_pair_judged_once():
    calls = []

    def dup(a, b):
        calls.append(frozenset((a, b)))
        return False

    a = [f"a{i}" for i in range(6)]
    b = [f"b{i}" for i in range(6)]
    curve = monte_carlo_curve(a, b, [1, 3, 5], dup, samples_per_point=40, seed=1)
    assert len(calls) == len(set(calls)) == curve.comparisons


def test_within_series_requires_same_pool():
    with pytest.raises(ValueError):
        monte_carlo_curve(["a"], ["b"], [1], lambda x, y: False, series=Series.WITHIN_LITERATURE)


def test_expected_overlap():
    assert expected_overlap(0.3, 1) == pytest.approx(0.3)
    assert expected_overlap(0.1, 20) == pytest.approx(1 - 0.9**20)


def _gw():
    return Gateway(MockProvider(FixtureResponders(fixture_data()).table()), CostLedger(), models={"default": "m"})


def test_duplicate_judgment_symmetric_and_cached():
    a = make_ref("t0.l0", make_law("A", "Feedback given sooner improves learning."))
    b = make_ref("t1.l0", make_law("B", "Feedback given sooner improves learning outcomes."))
    g = _gw()
    ab, ba = judge_duplicate(a, b, g), judge_duplicate(b, a, g)
    assert ab.verdict == ba.verdict == DuplicateVerdict.DUPLICATES
    assert g.calls["chat"] == 1
    assert pair_key("x", "y") == pair_key("y", "x")
    cache = PairCache()
    oracle = llm_duplicate_oracle({"t0.l0": a, "t1.l0": b}, g, cache)
    assert oracle("t1.l0", "t0.l0") and len(cache) == 1
    assert theory_duplicates(["t0.l0"], ["t1.l0"], cache) is True


def test_unparseable_duplicate_defaults_to_not_duplicates():
    g = Gateway(MockProvider({"judge_duplicate": lambda c: "{}"}), CostLedger(), models={"default": "m"})
    out = judge_duplicate(make_ref("a.l0"), make_ref("b.l0"), g)
    assert out.verdict is DuplicateVerdict.NOT_DUPLICATES and out.audit
