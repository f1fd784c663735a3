import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rppa.auction import MarketConfig, simulate_rppa_single_buyer
from rppa.distributions import LogNormal, Point, Uniform
from rppa.errors import DimensionError, DomainError
from rppa.optimizer import build_p1, enumerate_optimal
from rppa.reserve import ItemTypeProfile
from rppa.rng import make_rng
from rppa.scheduling import (
    NONE,
    POLICIES,
    Advertiser,
    demand_weights,
    probabilistic_throttle,
    run_policy,
    schedule_filtered,
    schedule_greedy_demand,
    schedule_hetero_hindsight,
    schedule_hindsight_max,
    schedule_lagrangian_boosted,
    schedule_randomized_max,
    schedule_round_robin,
    schedule_throttled,
    schedule_uniform_random,
    throttle_probabilities,
)

LN = LogNormal(0.0, 1.0)
DEMANDS = [400, 800, 4800, 400, 1600]


class TestHindsightMax:
    def test_direct_argmax(self):
        a = schedule_hindsight_max([[3, 1], [2, 4]], 2.0)
        np.testing.assert_array_equal(a.winners, [0, 1])
        np.testing.assert_array_equal(a.prices, [2.0, 2.0])

    def test_all_below_reserve(self):
        a = schedule_hindsight_max([[0.5, 1.0], [0.2, 0.9]], 1.0)
        assert not a.allocated.any() and a.seller_revenue == 0.0

    def test_ties_are_randomised_with_the_rng(self):
        values = np.full((3, 3000), 2.0)
        a = schedule_hindsight_max(values, 1.0, make_rng(0))
        counts = a.impressions()
        assert counts.sum() == 3000
        assert np.all(np.abs(counts - 1000) < 4 * math.sqrt(3000 * (1 / 3) * (2 / 3)))

    def test_ties_need_an_rng(self):
        with pytest.raises(DomainError):
            schedule_hindsight_max([[2.0], [2.0]], 1.0)

    def test_randomized_max_win_rate(self):
        advs = [Advertiser(LN)] * 5
        a = schedule_randomized_max(advs, 2.0, 10_000, make_rng(4))
        p = 1 - LN.cdf(2.0) ** 5
        assert abs(a.seller_revenue / 10_000 - 2 * p) < 0.05


class TestHetero:
    def test_direct_evaluation(self):
        v = np.zeros((2, 2, 2))
        v[:, 0, 0] = [1.5, 0.5]
        v[:, 1, 1] = [1.0, 3.0]
        a = schedule_hetero_hindsight(v, [0, 1], [1.0, 2.0])
        np.testing.assert_array_equal(a.winners, [0, 1])
        np.testing.assert_array_equal(a.prices, [1.0, 2.0])

    def test_k1_reduces(self):
        v = make_rng(1).lognormal(size=(3, 1, 50))
        a = schedule_hetero_hindsight(v, np.zeros(50, dtype=int), [1.0])
        b = schedule_hindsight_max(v[:, 0, :], 1.0)
        np.testing.assert_array_equal(a.winners, b.winners)

    def test_dimension_checks(self):
        with pytest.raises(DimensionError):
            schedule_hetero_hindsight(np.ones((2, 2, 3)), [0, 1], [1.0, 1.0])


class TestNomineePolicies:
    def test_round_robin_pointer_advances_regardless(self):
        v = np.array([[0.5, 2.0, 2.0, 2.0], [2.0, 0.5, 2.0, 2.0]])
        a = schedule_round_robin(v, 1.0)
        np.testing.assert_array_equal(a.winners, [NONE, NONE, 0, 1])

    def test_uniform_random_single_advertiser(self):
        v = np.array([[0.5, 2.0, 3.0]])
        a = schedule_uniform_random(v, 1.0, make_rng(0))
        np.testing.assert_array_equal(a.winners, [NONE, 0, 0])

    def test_demand_weights(self):
        np.testing.assert_allclose(demand_weights(DEMANDS), [0.05, 0.1, 0.6, 0.05, 0.2])
        with pytest.raises(DomainError):
            demand_weights([0, 0])

    def test_greedy_fixed_value(self):
        v = np.full((5, 10_000), 2.5)
        a = schedule_greedy_demand(v, 1.0, make_rng(3), demands=DEMANDS)
        assert a.seller_revenue / 10_000 == 1.0
        xi = demand_weights(DEMANDS)
        sd = np.sqrt(10_000 * xi * (1 - xi))
        assert np.all(np.abs(a.impressions() - 10_000 * xi) <= 3 * sd)


class TestFiltered:
    def test_empty_only_when_nobody_eligible(self):
        v = np.array([[0.5, 2.0, 0.1], [0.5, 0.1, 3.0]])
        a = schedule_filtered(v, 1.0, make_rng(0), "uniform")
        np.testing.assert_array_equal(a.winners, [NONE, 0, 1])

    def test_round_robin_pointer_moves_past_winner(self):
        v = np.full((3, 6), 2.0)
        a = schedule_filtered(v, 1.0, make_rng(0), "round_robin")
        np.testing.assert_array_equal(a.winners, [0, 1, 2, 0, 1, 2])

    def test_reserve_below_support_matches_unfiltered_rule(self):
        v = Uniform(1, 2).quantile(make_rng(0).random((3, 60)))
        a = schedule_filtered(v, 0.5, make_rng(0), "round_robin")
        b = schedule_round_robin(v, 0.5)
        np.testing.assert_array_equal(a.winners, b.winners)

    def test_zero_boost_equals_filtered_demand(self):
        v = make_rng(2).lognormal(size=(5, 500))
        w = demand_weights(DEMANDS)
        a = schedule_lagrangian_boosted(v, 1.0, make_rng(9), np.zeros(5), weights=w)
        b = schedule_filtered(v, 1.0, make_rng(9), "demand_weighted", weights=w)
        np.testing.assert_array_equal(a.winners, b.winners)

    def test_large_boost_makes_eligible_everywhere(self):
        v = make_rng(2).lognormal(size=(5, 500))
        a = schedule_lagrangian_boosted(v, 1.0, make_rng(9), [0, 0, 100.0, 0, 0], demands=DEMANDS)
        assert a.allocated.all()
        assert np.all(a.bids[a.winners == 2] > 1.0)
        # prices stay at the reserve
        assert np.all(a.prices[a.allocated] == 1.0)

    def test_unknown_rule(self):
        with pytest.raises(DomainError):
            schedule_filtered(np.ones((1, 1)), 0.5, make_rng(0), "lottery")


class TestThrottle:
    def test_values(self):
        assert probabilistic_throttle(50, 1.0, 100) == 0.5
        assert probabilistic_throttle(100, 1.0, 100) == 1.0
        assert probabilistic_throttle(50, 1.0, 100, safety=0.1) == pytest.approx(0.45)

    def test_zero_reserve(self):
        with pytest.raises(DomainError):
            probabilistic_throttle(10, 0.0, 100)

    def test_normalised_sum(self):
        xi = throttle_probabilities([10, 20, 30], 1.0, 100, normalize=True)
        assert xi.sum() == pytest.approx(1.0)

    def test_budgets_never_exceeded(self):
        v = make_rng(0).lognormal(size=(3, 2000))
        budgets = [50.0, 100.0, 150.0]
        a = schedule_throttled(v, 1.0, make_rng(1), budgets)
        assert np.all(a.spend() <= np.array(budgets) + 1e-9)


class TestRunPolicy:
    def test_n1_matches_single_buyer(self):
        for policy in ("hindsight-max", "round-robin", "uniform-random", "filtered-rr"):
            rep = run_policy(policy, [Advertiser(LN)], 1.0, 500, seed=21)
            sim = simulate_rppa_single_buyer(MarketConfig(500, ItemTypeProfile.homogeneous(LN), 21, 1.0))
            np.testing.assert_array_equal(rep.allocation.allocated, sim.accepted)
            assert rep.allocation.seller_revenue == pytest.approx(sim.seller_revenue_total)

    def test_unknown_policy(self):
        with pytest.raises(DomainError):
            run_policy("first-price", [Advertiser(LN)], 1.0, 10, seed=1)

    def test_report_csv(self):
        advs = [Advertiser(LN, demand=d) for d in DEMANDS]
        rep = run_policy("filtered-demand", advs, 1.0, 1000, seed=5)
        lines = rep.to_csv().splitlines()
        assert lines[0].startswith("# policy=filtered-demand seed=5")
        assert lines[1] == "adv_id,impressions,revenue_per_round,demand_met,budget_spent"
        assert len(lines) == 7

    def test_advertiser_round_trip(self):
        adv = Advertiser((LN, Point(2.0)), demand=3, budget=10.0, type_targets=(1, 2), throttle=0.3)
        assert Advertiser.from_dict(adv.to_dict()) == adv
        with pytest.raises(DomainError):
            Advertiser.from_dict({"dist": LN.to_dict(), "colour": "red"})


def _market(seed, N, T, with_budgets):
    rng = make_rng(seed)
    values = rng.lognormal(size=(N, T))
    budgets = list(rng.integers(0, 4, N) * 1.0) if with_budgets else None
    demands = list(rng.integers(1, 5, N))
    return values, budgets, demands


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), N=st.integers(1, 4), T=st.integers(1, 30), q=st.sampled_from([0.5, 1.0, 2.0]), with_budgets=st.booleans())
def test_every_policy_output_is_feasible(seed, N, T, q, with_budgets):
    values, budgets, demands = _market(seed, N, T, with_budgets)
    rng = make_rng(seed + 1)
    allocations = [
        schedule_hindsight_max(values, q, rng, budgets=budgets),
        schedule_round_robin(values, q, budgets=budgets),
        schedule_uniform_random(values, q, rng, budgets=budgets),
        schedule_greedy_demand(values, q, rng, demands=demands, budgets=budgets),
        schedule_filtered(values, q, rng, "round_robin", budgets=budgets),
        schedule_filtered(values, q, rng, "uniform", budgets=budgets),
        schedule_filtered(values, q, rng, "demand_weighted", weights=demand_weights(demands), budgets=budgets),
        schedule_lagrangian_boosted(values, q, rng, rng.random(N), demands=demands, budgets=budgets),
    ]
    if with_budgets:
        allocations.append(schedule_throttled(values, q, rng, budgets))
    for a in allocations:
        assert a.feasibility_violations() == []
        assert np.all(a.x.sum(axis=0) <= 1)
        assert a.seller_revenue == pytest.approx(q * a.allocated.sum())
        if budgets is not None:
            assert np.all(a.spend() <= np.array(budgets) + 1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), N=st.integers(1, 3), T=st.integers(1, 6))
def test_hindsight_max_is_optimal_without_demands(seed, N, T):
    values = make_rng(seed).lognormal(size=(N, T))
    a = schedule_hindsight_max(values, 1.0)
    oracle = enumerate_optimal(build_p1(values, 1.0))
    assert a.dsp_surplus == pytest.approx(oracle.value, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), policy=st.sampled_from([p for p in POLICIES if p not in ("hetero-hindsight", "throttled")]))
def test_per_round_accounting(seed, policy):
    advs = [Advertiser(LN, demand=d, budget=30.0) for d in (10, 20, 30)]
    rep = run_policy(policy, advs, 1.0, 200, seed=seed, boost=[0, 0, 0.3])
    a = rep.allocation
    assert rep.seller_revenue_per_round * 200 == pytest.approx(a.prices.sum())
    assert a.spend().sum() == pytest.approx(a.seller_revenue)
    assert np.all(a.spend() <= 30.0 + 1e-9)
    assert run_policy(policy, advs, 1.0, 200, seed=seed, boost=[0, 0, 0.3]).to_csv() == rep.to_csv()
