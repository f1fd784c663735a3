import csv
import io
import json
import math

import numpy as np
import pytest

from rppa.distributions import LogNormal, Point
from rppa.errors import DomainError
from rppa.experiments import (
    EXPERIMENTS,
    REPORT_COLUMNS,
    analytic_shares,
    demand_met_agreement,
    dominance_check,
    oracle_sandwich,
    reproduce_dsp_tables,
    reproduce_lognormal_tables,
    run_experiment,
    selection_shares,
    static_vs_dynamic_demo,
)
from rppa.reserve import ItemTypeProfile
from rppa.rng import make_rng
from rppa.scheduling import Advertiser, demand_weights, schedule_filtered

LN = LogNormal(0.0, 1.0)


class TestShares:
    def test_full_eligibility_is_the_weights(self):
        np.testing.assert_allclose(selection_shares([1, 1, 1], [1, 2, 7]), [0.1, 0.2, 0.7])

    def test_two_advertisers_by_hand(self):
        # only 0 eligible: 0.5*0.5; both: 0.25 * 1/4
        got = selection_shares([0.5, 0.5], [1.0, 3.0])
        np.testing.assert_allclose(got, [0.25 + 0.25 * 0.25, 0.25 + 0.25 * 0.75])

    def test_hindsight_target(self):
        s = analytic_shares("hindsight-max", LN, 1.0, 5)
        assert s.sum() == pytest.approx(1 - 0.5**5)

    def test_filtered_demand_matches_monte_carlo(self):
        w = demand_weights([400, 800, 4800, 400, 1600])
        s = analytic_shares("filtered-demand", LN, 1.0, 5, demands=[400, 800, 4800, 400, 1600])
        v = make_rng(3).lognormal(size=(5, 40_000))
        counts = schedule_filtered(v, 1.0, make_rng(4), "demand_weighted", weights=w).impressions()
        sd = np.sqrt(40_000 * s * (1 - s))
        assert np.all(np.abs(counts - 40_000 * s) <= 4 * sd)

    def test_zero_boost_equals_filtered(self):
        d = [400, 800, 4800, 400, 1600]
        np.testing.assert_allclose(
            analytic_shares("lagrangian-boost", LN, 1.0, 5, d, [0.0] * 5), analytic_shares("filtered-demand", LN, 1.0, 5, d)
        )


class TestLognormalTables:
    def test_closed_form_cells_pass(self):
        rep = reproduce_lognormal_tables()
        (q,) = [r for r in rep.select(metric="q_star") if r["case"].endswith("mu=0 sigma=1")][:1]
        assert 1.30 <= q["value"] <= 1.45 and q["pass"]
        assert {r["metric"] for r in rep.rows} == {"q_star", "seller_rev_per_round", "buyer_rev_per_round"}

    def test_every_buyer_cell_within_ten_percent(self):
        rep = reproduce_lognormal_tables()
        assert all(r["pass"] for r in rep.select(metric="buyer_rev_per_round"))


class TestDspTables:
    def test_hindsight_max_small(self):
        rep = reproduce_dsp_tables([1.0], "hindsight-max", seed=1, T=4000)
        (row,) = rep.select(metric="seller_rev_per_round")
        assert row["target"] == pytest.approx(0.96875)
        assert row["pass"]

    def test_greedy_fixed_value_is_exact(self):
        rep = reproduce_dsp_tables(policy="greedy-fixed-v", seed=2)
        (row,) = rep.select(metric="seller_rev_per_round")
        assert row["value"] == 1.0
        assert all(r["value"] for r in rep.select(metric="demand_met"))

    def test_one_matrix_across_reserves(self):
        rep = reproduce_dsp_tables([1.0, 2.0], "round-robin", seed=3, T=2000)
        imps = {r["case"]: r["value"] for r in rep.select(metric="impressions_total")}
        # raising the reserve on the same matrix can only shed impressions
        assert imps["q=2"] <= imps["q=1"]

    def test_unknown_policy(self):
        with pytest.raises(DomainError):
            reproduce_dsp_tables(policy="vickrey")

    def test_jobs_do_not_change_rows(self):
        a = reproduce_dsp_tables([1.0], "filtered-demand", seed=4, replications=3, T=1000)
        b = reproduce_dsp_tables([1.0], "filtered-demand", seed=4, replications=3, T=1000, jobs=2)
        assert a.to_csv() == b.to_csv()

    def test_demand_agreement_counts(self):
        rep = reproduce_dsp_tables(policy="filtered-demand", seed=5, replications=3)
        agree, reps = demand_met_agreement(rep)
        assert reps == 3 and 0 <= agree <= 3
        with pytest.raises(DomainError):
            demand_met_agreement(reproduce_dsp_tables([1.0], "round-robin", seed=1, T=100))


class TestStaticVsDynamic:
    def test_worked_example(self):
        rep = static_vs_dynamic_demo()
        vals = {r["metric"]: r["value"] for r in rep.rows}
        assert vals["dynamic_rev"] == pytest.approx(1.9)
        assert vals["static_high_rev"] == pytest.approx(1.45)
        assert vals["static_low_rev"] == pytest.approx(0.9)
        assert rep.passed

    def test_degenerate_mixture_is_non_strict(self):
        rep = static_vs_dynamic_demo(p=(1.0, 0.0), sim_T=200)
        vals = {r["metric"]: r["value"] for r in rep.rows}
        assert vals["dynamic_rev"] == pytest.approx(vals["static_low_rev"])
        assert rep.passed

    def test_precondition(self):
        with pytest.raises(DomainError):
            static_vs_dynamic_demo(q=(1.1, 2.9))

    def test_equal_supports_are_not_strict(self):
        prof = ItemTypeProfile((0.5, 0.5), (Point(2.0), Point(2.0)))
        res = dominance_check(prof, np.linspace(0, 2, 201))
        assert not res["strict"] and res["pass"]
        assert res["dynamic"] == pytest.approx(res["static"])


class TestReports:
    def test_csv_schema_and_header(self):
        rep = run_experiment("static-vs-dynamic", seed=9)
        lines = rep.to_csv().splitlines()
        assert lines[0].startswith("# experiment=static-vs-dynamic") and "seed=9" in lines[0]
        rows = list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))
        assert tuple(rows[0]) == REPORT_COLUMNS

    def test_json_round_trip(self):
        rep = run_experiment("lognormal-reserve")
        data = json.loads(rep.to_json())
        assert data["experiment"] == "lognormal-reserve" and len(data["rows"]) == len(rep.rows)

    def test_six_significant_digits(self):
        rep = run_experiment("lognormal-reserve")
        body = rep.to_csv().splitlines()[2]
        value = body.split(",")[6]
        assert len(value.replace(".", "").lstrip("0")) <= 6

    def test_registry_runs_are_deterministic(self):
        assert run_experiment("point-dominance", seed=3).to_csv() == run_experiment("point-dominance", seed=3).to_csv()

    def test_unknown_id(self):
        with pytest.raises(DomainError):
            run_experiment("table-4")

    def test_registry_ids_are_content_based(self):
        assert all(not k.startswith("table") for k in EXPERIMENTS)


class TestOracleSandwich:
    def test_small_battery(self):
        rep = oracle_sandwich(n=20, seed=1, iters=100)
        assert rep.passed
        assert rep.select(metric="gap_closed_fraction")[0]["value"] >= 0.9
