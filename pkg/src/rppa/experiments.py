"""Seeded reproductions of the published tables plus randomized test batteries.

Each experiment produces an :class:`ExperimentReport` in long format: one
row per (case, advertiser, metric) with the computed value, the analytic
target and tolerance used for pass/fail, and the printed value for
comparison.  Monte-Carlo tables key their verdict off analytic targets;
printed digits are single unseeded runs and are only shown alongside.

Replications use seeds derived from a seed base and the replication index,
so a report is a pure function of its :class:`ExperimentSpec`.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable, Sequence

import numpy as np

from .auction import MarketConfig, format_value, simulate_rppa_hetero
from .distributions import LogNormal, Point, ValuationDistribution
from .errors import DomainError, InfeasibleProgram
from .optimizer import ScheduleProgram, build_p1, build_p4, enumerate_optimal, solve_dual
from .reserve import (
    ItemTypeProfile,
    PerTypeReserve,
    StaticReserve,
    best_grid_reserve,
    best_static_reserve,
    buyer_expected_revenue,
    hetero_seller_revenue,
    optimal_reserve,
    seller_expected_revenue,
)
from .rng import derive_seed, make_rng, substreams
from .scheduling import (
    Advertiser,
    demand_weights,
    draw_valuations,
    run_policy,
    schedule_hetero_hindsight,
)

REPORT_COLUMNS = (
    "experiment",
    "replication",
    "seed",
    "case",
    "adv_id",
    "metric",
    "value",
    "target",
    "tolerance",
    "printed",
    "pass",
)

DEFAULT_SEED = 20240611
REFERENCE_DEMANDS = (400, 800, 4800, 400, 1600)
REFERENCE_BOOST = (0.0, 0.0, 0.25, 0.0, 0.0)


# ---------------------------------------------------------------------------
# printed values
# ---------------------------------------------------------------------------

#: (table, mu, sigma) -> (q*, seller R/T, buyer R/T)
PRINTED_LOGNORMAL = {
    (1, 0.0, 1.0): (1.4, 0.5156, 0.7512),
    (1, 0.25, 1.0): (1.8, 0.8380, 0.9175),
    (1, 0.5, 1.0): (2.3, 1.23, 1.18),
    (1, 2.0, 1.0): (10.1, 9.61, 5.37),
    (2, 0.0, 0.25): (0.76, 0.07, 0.28),
    (2, 0.0, 0.5): (0.78, 0.2, 0.41),
    (2, 0.0, 1.0): (1.36, 0.5, 0.73),
    (2, 0.0, 2.0): (23.2, 10.05, 3.57),
}

#: Interval used for q* at (mu, sigma) = (0, 1), where the two tables disagree.
LOGNORMAL_Q_INTERVAL_0_1 = (1.30, 1.45)

#: policy id -> q -> {"seller": per-round revenue, "impressions": [...], "revenue": [...]}
PRINTED_DSP: dict[str, dict[float, dict[str, Any]]] = {
    "hindsight-max": {
        1.0: {"seller": 0.9727, "impressions": [2004, 1906, 1882, 1950, 1985], "revenue": [0.6449, 0.5951, 0.5759, 0.6125, 0.6239]},
        2.0: {"seller": 1.5104, "impressions": [1551, 1484, 1457, 1517, 1543], "revenue": [0.4651, 0.4226, 0.4060, 0.4363, 0.4454]},
        4.0: {"seller": 1.3812, "impressions": [707, 683, 643, 735, 685], "revenue": [0.2506, 0.2137, 0.2050, 0.2221, 0.2316]},
    },
    "round-robin": {
        1.0: {"seller": 0.502, "impressions": [993, 1016, 994, 1003, 1014], "revenue": [0.1713, 0.1813, 0.1748, 0.1787, 0.1825]},
        2.0: {"seller": 0.4954, "impressions": [499, 483, 482, 514, 499], "revenue": [0.1011, 0.1104, 0.1062, 0.1073, 0.1115]},
        4.0: {"seller": 0.3324, "impressions": [164, 165, 154, 175, 173], "revenue": [0.0440, 0.0524, 0.0504, 0.0481, 0.0513]},
    },
    "uniform-random": {
        1.0: {"seller": 0.493, "impressions": [961, 1017, 960, 948, 1042], "revenue": [0.183, 0.18, 0.17, 0.16, 0.185]},
        2.0: {"seller": 0.482, "impressions": [489, 459, 476, 480, 506], "revenue": [0.1027, 0.0846, 0.1072, 0.1033, 0.1054]},
        4.0: {"seller": 0.3364, "impressions": [160, 189, 134, 192, 166], "revenue": [0.0528, 0.0543, 0.0432, 0.0577, 0.0442]},
    },
    "greedy-fixed-v": {1.0: {"seller": 1.0, "impressions": [485, 984, 6002, 498, 2031], "revenue": [0.07, 0.15, 0.91, 0.07, 0.3]}},
    "greedy-lognormal": {1.0: {"seller": 0.5, "impressions": [260, 519, 2981, 235, 1000], "revenue": [0.04, 0.09, 0.52, 0.04, 0.17]}},
    "filtered-demand": {1.0: {"seller": 0.97, "impressions": [1024, 1607, 3749, 1036, 2317], "revenue": [0.19, 0.28, 0.64, 0.19, 0.40]}},
    "lagrangian-boost": {1.0: {"seller": 0.98, "impressions": [814, 1177, 5046, 810, 1931], "revenue": [0.1557, 0.1972, 0.8235, 0.1534, 0.3342]}},
}

#: Demand-met pattern stated for the two filtered examples.
STATED_DEMAND_MET = {
    "filtered-demand": (True, True, False, True, True),
    "lagrangian-boost": (True, True, True, True, True),
}


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class ExperimentReport:
    experiment: str
    rows: list[dict[str, Any]]
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.get("pass") is not False for r in self.rows)

    def failures(self) -> list[dict[str, Any]]:
        return [r for r in self.rows if r.get("pass") is False]

    def select(self, **where) -> list[dict[str, Any]]:
        return [r for r in self.rows if all(r.get(k) == v for k, v in where.items())]

    def to_dict(self) -> dict[str, Any]:
        return {"experiment": self.experiment, "meta": self.meta, "passed": self.passed, "rows": self.rows}

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        header = " ".join(f"{k}={_meta_str(v)}" for k, v in sorted(self.meta.items()))
        buf.write(f"# experiment={self.experiment} {header}\n")
        writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for r in self.rows:
            writer.writerow({k: "" if r.get(k) is None else format_value(r.get(k)) for k in REPORT_COLUMNS})
        return buf.getvalue()


def _meta_str(v) -> str:
    if isinstance(v, (list, tuple)):
        return "[" + ",".join(_meta_str(x) for x in v) + "]"
    return format_value(v)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _row(experiment, case, metric, value, target=None, tolerance=None, printed=None, ok=None, adv_id=None, replication=0, seed=None):
    return {
        "experiment": experiment,
        "replication": replication,
        "seed": seed,
        "case": case,
        "adv_id": adv_id,
        "metric": metric,
        "value": value,
        "target": target,
        "tolerance": tolerance,
        "printed": printed,
        "pass": ok,
    }


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# single-buyer lognormal tables
# ---------------------------------------------------------------------------


def lognormal_q_check(mu: float, sigma: float, q: float, printed_q: float) -> tuple[bool, str]:
    """q* tolerance: the (0, 1) interval, else 0.05 absolute below 3 and 10% relative above."""
    if (mu, sigma) == (0.0, 1.0):
        lo, hi = LOGNORMAL_Q_INTERVAL_0_1
        return lo <= q <= hi, f"[{lo}, {hi}]"
    if printed_q < 3.0:
        return abs(q - printed_q) <= 0.05, "abs 0.05"
    return abs(q - printed_q) <= 0.10 * printed_q, "rel 0.1"


def reproduce_lognormal_tables() -> ExperimentReport:
    """q*, seller R/T and buyer R/T for every lognormal row, against the printed values."""
    rows = []
    for (table, mu, sigma), (pq, ps, pb) in PRINTED_LOGNORMAL.items():
        dist = LogNormal(mu, sigma)
        q = optimal_reserve(dist)
        seller = seller_expected_revenue(dist, q)
        buyer = buyer_expected_revenue(dist, q)
        case = f"group={table} mu={mu:g} sigma={sigma:g}"
        q_ok, q_tol = lognormal_q_check(mu, sigma, q, pq)
        rows.append(_row("lognormal-reserve", case, "q_star", q, pq, q_tol, pq, q_ok))
        rows.append(_row("lognormal-reserve", case, "seller_rev_per_round", seller, ps, "rel 0.1", ps, abs(seller - ps) <= 0.1 * ps))
        rows.append(_row("lognormal-reserve", case, "buyer_rev_per_round", buyer, pb, "rel 0.1", pb, abs(buyer - pb) <= 0.1 * pb))
    return ExperimentReport("lognormal-reserve", rows, {"cases": len(PRINTED_LOGNORMAL)})


# ---------------------------------------------------------------------------
# DSP tables
# ---------------------------------------------------------------------------


def selection_shares(p_eligible: Sequence[float], weights: Sequence[float]) -> np.ndarray:
    """Per-round probability that each advertiser is scheduled by a filtered weighted draw.

    Advertisers are independently eligible with ``p_eligible[n]``; the winner
    is drawn from the eligible set with probability proportional to
    ``weights``.  Exact by enumeration over the 2^N eligibility patterns.
    """
    p = np.asarray(p_eligible, dtype=float)
    w = np.asarray(weights, dtype=float)
    out = np.zeros_like(p)
    for pattern in itertools.product((False, True), repeat=p.size):
        s = np.array(pattern)
        if not s.any() or w[s].sum() <= 0:
            continue
        prob = float(np.prod(np.where(s, p, 1.0 - p)))
        out += prob * np.where(s, w, 0.0) / w[s].sum()
    return out


def analytic_shares(policy: str, dist: ValuationDistribution, q: float, N: int, demands=None, boost=None) -> np.ndarray:
    """Per-round scheduling probability of each advertiser for i.i.d. valuations."""
    sf = float(dist.sf(q))
    F = 1.0 - sf
    if policy in ("hindsight-max", "randomized-max", "filtered-rr", "filtered-random"):
        return np.full(N, (1.0 - F**N) / N)
    if policy in ("round-robin", "uniform-random"):
        return np.full(N, sf / N)
    xi = demand_weights(demands)
    if policy == "greedy-demand":
        return xi * sf
    if policy == "filtered-demand":
        return selection_shares(np.full(N, sf), xi)
    if policy == "lagrangian-boost":
        lam = np.asarray(boost, dtype=float)
        p = np.array([float(dist.sf(q - b)) if q - b > dist.support[0] else 1.0 for b in lam])
        return selection_shares(p, xi + lam)
    raise DomainError(f"no analytic share for policy {policy!r}")


@dataclass(frozen=True)
class DspSetup:
    """One reference DSP table: N identical advertisers, one fixed valuation matrix."""

    name: str
    policy: str
    dist: ValuationDistribution
    q_list: tuple[float, ...] = (1.0, 2.0, 4.0)
    N: int = 5
    T: int = 10_000
    demands: tuple[int, ...] | None = None
    boost: tuple[float, ...] | None = None
    seller_tol: float = 0.03


DSP_SETUPS = {
    "hindsight-max": DspSetup("hindsight-max", "hindsight-max", LogNormal(0.0, 1.0)),
    "randomized-max": DspSetup("randomized-max", "randomized-max", LogNormal(0.0, 1.0), seller_tol=0.05),
    "round-robin": DspSetup("round-robin", "round-robin", LogNormal(0.0, 1.0)),
    "uniform-random": DspSetup("uniform-random", "uniform-random", LogNormal(0.0, 1.0)),
    "greedy-fixed-v": DspSetup("greedy-fixed-v", "greedy-demand", Point(2.5), (1.0,), demands=REFERENCE_DEMANDS),
    "greedy-lognormal": DspSetup("greedy-lognormal", "greedy-demand", LogNormal(0.0, 1.0), (1.0,), demands=REFERENCE_DEMANDS),
    "filtered-demand": DspSetup("filtered-demand", "filtered-demand", LogNormal(0.0, 1.0), (1.0,), demands=REFERENCE_DEMANDS),
    "lagrangian-boost": DspSetup(
        "lagrangian-boost", "lagrangian-boost", LogNormal(0.0, 1.0), (1.0,), demands=REFERENCE_DEMANDS, boost=REFERENCE_BOOST
    ),
}


def _dsp_replication(setup: DspSetup, seed: int, replication: int) -> list[dict[str, Any]]:
    demands = setup.demands if setup.demands is not None else (0,) * setup.N
    advs = [Advertiser(dists=(setup.dist,), demand=d) for d in demands]
    # one valuation matrix per replication, reused for every reserve
    values = draw_valuations(advs, setup.T, substreams(seed)["valuations"])
    printed = PRINTED_DSP.get(setup.name, {})
    expected_met = STATED_DEMAND_MET.get(setup.name)
    rows = []
    for q in setup.q_list:
        rep = run_policy(setup.policy, advs, q, setup.T, seed, values=values, boost=setup.boost)
        alloc = rep.allocation
        shares = analytic_shares(setup.policy, setup.dist, q, setup.N, setup.demands, setup.boost)
        total_share = float(shares.sum())
        pq = printed.get(q, {})
        case = f"q={q:g}"
        kw = dict(replication=replication, seed=seed)

        seller = rep.seller_revenue_per_round
        target = q * total_share
        rows.append(_row(setup.name, case, "seller_rev_per_round", seller, target, setup.seller_tol, pq.get("seller"), abs(seller - target) <= setup.seller_tol + 1e-12, **kw))

        imps = alloc.impressions()
        tot_sigma = math.sqrt(setup.T * total_share * (1.0 - total_share))
        tot = int(imps.sum())
        rows.append(_row(setup.name, case, "impressions_total", tot, setup.T * total_share, 3 * tot_sigma, sum(pq["impressions"]) if pq else None, abs(tot - setup.T * total_share) <= 3 * tot_sigma + 1e-9, **kw))

        surplus = alloc.surplus()
        met = rep.demand_met()
        for n in range(setup.N):
            mean = setup.T * shares[n]
            sigma = math.sqrt(setup.T * shares[n] * (1.0 - shares[n]))
            adv = dict(adv_id=n + 1, **kw)
            rows.append(_row(setup.name, case, "impressions", int(imps[n]), mean, 3 * sigma, pq["impressions"][n] if pq else None, abs(imps[n] - mean) <= 3 * sigma + 1e-9, **adv))
            rows.append(_row(setup.name, case, "revenue_per_round", float(surplus[n]) / setup.T, None, None, pq["revenue"][n] if pq else None, None, **adv))
            if setup.demands is not None:
                rows.append(_row(setup.name, case, "demand_met", bool(met[n]), demands[n], None, expected_met[n] if expected_met else None, None, **adv))
    return rows


def reproduce_dsp_tables(
    q_list: Sequence[float] | None = None,
    policy: str = "hindsight-max",
    seed: int = DEFAULT_SEED,
    replications: int = 1,
    jobs: int = 1,
    T: int | None = None,
) -> ExperimentReport:
    """Run one reference DSP table.

    ``policy`` is either a registry name from :data:`DSP_SETUPS` or a policy
    id with a registry entry of the same name.  Replication ``r`` uses seed
    ``derive_seed(seed, r)``; one replication uses ``seed`` itself.
    """
    if policy not in DSP_SETUPS:
        raise DomainError(f"no DSP table for {policy!r}; choose from {', '.join(DSP_SETUPS)}")
    setup = DSP_SETUPS[policy]
    if q_list is not None:
        setup = DspSetup(**{**setup.__dict__, "q_list": tuple(float(q) for q in q_list)})
    if T is not None:
        setup = DspSetup(**{**setup.__dict__, "T": int(T)})
    seeds = [seed] if replications == 1 else [derive_seed(seed, r) for r in range(replications)]
    chunks = _map(partial(_dsp_star, setup), list(enumerate(seeds)), jobs)
    rows = [r for chunk in chunks for r in chunk]
    meta = {"seed": seed, "replications": replications, "T": setup.T, "N": setup.N, "policy": setup.policy, "q": list(setup.q_list)}
    return ExperimentReport(setup.name, rows, meta)


def _dsp_star(setup: DspSetup, item: tuple[int, int]) -> list[dict[str, Any]]:
    r, s = item
    return _dsp_replication(setup, s, r)


def demand_met_agreement(report: ExperimentReport) -> tuple[int, int]:
    """(replications whose demand-met pattern matches the stated one, replications)."""
    expected = STATED_DEMAND_MET.get(report.experiment)
    if expected is None:
        raise DomainError(f"no stated demand pattern for {report.experiment!r}")
    by_rep: dict[int, dict[int, bool]] = {}
    for r in report.select(metric="demand_met"):
        by_rep.setdefault(r["replication"], {})[r["adv_id"]] = r["value"]
    agree = sum(tuple(d[n + 1] for n in range(len(expected))) == expected for d in by_rep.values())
    return agree, len(by_rep)


# ---------------------------------------------------------------------------
# static versus per-type reserves
# ---------------------------------------------------------------------------


def static_vs_dynamic_demo(
    p: Sequence[float] = (0.5, 0.5),
    v: Sequence[float] = (1.0, 3.0),
    q: Sequence[float] = (0.9, 2.9),
    T: int = 1,
    sim_T: int = 10_000,
    seed: int = DEFAULT_SEED,
) -> ExperimentReport:
    """Two point-mass item types: per-type reserves against either single reserve.

    Analytic revenues are ``(p1 q1 + p2 q2) T``, ``p2 q2 T`` (static high) and
    ``q1 T`` (static low).  The same three policies are then simulated for
    ``sim_T`` rounds and compared with the analytic per-round values at 3
    standard errors.
    """
    p1, p2 = (float(x) for x in p)
    v1, v2 = (float(x) for x in v)
    q1, q2 = (float(x) for x in q)
    if not (q1 < v1 < q2 < v2):
        raise DomainError(f"need q1 < v1 < q2 < v2, got q={q}, v={v}")
    profile = ItemTypeProfile((p1, p2), (Point(v1), Point(v2)))
    policies = {
        "dynamic": PerTypeReserve((q1, q2)),
        "static_high": StaticReserve(q2),
        "static_low": StaticReserve(q1),
    }
    analytic = {k: hetero_seller_revenue(profile, pol, T) for k, pol in policies.items()}
    strict = 0.0 < p1 < 1.0
    name = "static-vs-dynamic"
    case = f"p=({p1:g},{p2:g}) v=({v1:g},{v2:g}) q=({q1:g},{q2:g})"
    rows = [_row(name, case, f"{k}_rev", val, None, None, None, None) for k, val in analytic.items()]
    for other in ("static_high", "static_low"):
        d, s = analytic["dynamic"], analytic[other]
        ok = d > s if strict else d >= s - 1e-12
        rows.append(_row(name, case, f"dynamic_beats_{other}", ok, None, "strict" if strict else "non-strict", None, ok))

    for k, pol in policies.items():
        rep = simulate_rppa_hetero(MarketConfig(sim_T, profile, seed, pol), scenario_id=k)
        mean = analytic[k] / T
        gains = rep.seller_gain
        # per-round gain is q_k with probability p_k Pr(v_k > q_k), else 0
        qs = pol.for_types(2)
        sold = np.array([float(profile.dists[k2].sf(qs[k2])) for k2 in range(2)])
        second = float(np.dot(profile.p, sold * qs**2))
        var = second - mean**2
        tol = 3.0 * math.sqrt(max(var, 0.0) / sim_T)
        sim = float(gains.mean())
        rows.append(_row(name, case, f"{k}_sim_rev_per_round", sim, mean, tol, None, abs(sim - mean) <= tol + 1e-12, seed=seed))
    return ExperimentReport(name, rows, {"T": T, "sim_T": sim_T, "seed": seed})


def random_point_instance(rng: np.random.Generator) -> ItemTypeProfile:
    """Two point-mass types with distinct values at least 0.2 apart."""
    v1 = rng.uniform(0.5, 5.0)
    v2 = v1 + rng.uniform(0.2, 5.0)
    p1 = rng.uniform(0.02, 0.98)
    return ItemTypeProfile((p1, 1.0 - p1), (Point(v1), Point(v2)))


def dominance_check(profile: ItemTypeProfile, prices: np.ndarray) -> dict[str, Any]:
    """Per-type grid-best reserves against the best single grid reserve."""
    per_type = PerTypeReserve(tuple(best_grid_reserve(d, prices) for d in profile.dists))
    dyn = hetero_seller_revenue(profile, per_type)
    q_static, static = best_static_reserve(profile, prices)
    supports = {d.support for d in profile.dists}
    strict_expected = all(p > 0 for p in profile.p) and len(supports) == profile.K
    ok = dyn > static if strict_expected else dyn >= static - 1e-12
    return {"dynamic": dyn, "static": static, "q_static": q_static, "per_type": per_type.q, "strict": strict_expected, "pass": ok}


def point_dominance_battery(n: int = 100, seed: int = DEFAULT_SEED, grid_points: int = 4001) -> ExperimentReport:
    rng = make_rng(seed)
    rows = []
    for i in range(n):
        prof = random_point_instance(rng)
        prices = np.linspace(0.0, max(d.v for d in prof.dists), grid_points)
        res = dominance_check(prof, prices)
        case = "p1={:.4g} v=({:.4g},{:.4g})".format(prof.p[0], prof.dists[0].v, prof.dists[1].v)
        rows.append(_row("point-dominance", case, "dynamic_minus_static", res["dynamic"] - res["static"], 0.0,
                         "strict" if res["strict"] else "non-strict", None, res["pass"], replication=i, seed=seed))
    return ExperimentReport("point-dominance", rows, {"instances": n, "seed": seed, "grid_points": grid_points})


# ---------------------------------------------------------------------------
# oracle sandwich battery
# ---------------------------------------------------------------------------

ORACLE_MODES = ("plain", "demand", "budget", "demand+budget", "typed")
ORACLE_POLICIES = (
    "hindsight-max",
    "round-robin",
    "uniform-random",
    "filtered-rr",
    "filtered-random",
    "filtered-demand",
    "greedy-demand",
    "lagrangian-boost",
)
GAP_THRESHOLD = 0.15


def random_program(seed: int, mode: str, max_N: int = 3, max_T: int = 6):
    """A small random scheduling instance, its advertisers and the raw valuations."""
    rng = make_rng(seed)
    N = int(rng.integers(1, max_N + 1))
    T = int(rng.integers(1, max_T + 1))
    dist = LogNormal(0.0, 1.0)
    q = float(rng.choice([0.5, 1.0, 1.5]))
    demand = np.zeros(N, dtype=np.int64)
    budget = None
    if "demand" in mode or mode == "typed":
        demand = np.minimum(rng.integers(0, max(1, T // N) + 1, N), T - 1)
    if "budget" in mode:
        budget = (rng.integers(0, T + 1, N) + rng.random(N) * 0.9) * q
    if mode == "typed":
        K = 2
        types = rng.integers(0, K, T)
        qs = (q, q + 0.5)
        advs = [Advertiser(dists=(dist, LogNormal(0.5, 1.0)), demand=int(d)) for d in demand]
        values = np.exp(rng.normal(0.0, 1.0, (N, K, T)) + np.array([0.0, 0.5])[None, :, None])
        targets = rng.integers(0, 2, (N, K))
        prog = build_p4(values, types, qs, demand=demand, type_targets=targets)
        return prog, advs, values, (types, qs)
    advs = [Advertiser(dists=(dist,), demand=int(d), budget=None if budget is None else float(budget[n])) for n, d in enumerate(demand)]
    values = draw_valuations(advs, T, rng)
    prog = build_p1(values, q, demand if "demand" in mode else None)
    if budget is not None:
        prog.budget = np.asarray(budget, dtype=float)
    return prog, advs, values, q


def _policy_allocations(prog, advs, values, extra, seed):
    out = {}
    if isinstance(extra, tuple):
        types, qs = extra
        out["hetero-hindsight"] = schedule_hetero_hindsight(values, types, qs, make_rng(seed))
        return out
    q = extra
    with_demand = any(a.demand > 0 for a in advs)
    boost = make_rng(seed).uniform(0.0, 1.0, len(advs))
    for pol in ORACLE_POLICIES:
        if pol in ("filtered-demand", "greedy-demand", "lagrangian-boost") and not with_demand:
            continue
        rep = run_policy(pol, advs, q, prog.T, seed, values=values, boost=boost if pol == "lagrangian-boost" else None)
        out[pol] = rep.allocation
    return out


def oracle_instance(item: tuple[int, int], seed: int, iters: int = 200) -> list[dict[str, Any]]:
    i, inst_seed = item
    mode = ORACLE_MODES[i % len(ORACLE_MODES)]
    prog, advs, values, extra = random_program(inst_seed, mode)
    case = f"mode={mode} N={prog.N} T={prog.T}"
    kw = dict(replication=i, seed=inst_seed)
    oracle = enumerate_optimal(prog)
    dual = solve_dual(prog, max_iters=iters)
    rows = []
    name = "oracle-sandwich"
    if not oracle.feasible:
        rows.append(_row(name, case, "oracle_feasible", False, None, None, None, dual.primal_value is None, **kw))
        return rows
    opt = oracle.value
    rows.append(_row(name, case, "oracle_value", opt, None, None, None, None, **kw))
    for pol, alloc in _policy_allocations(prog, advs, values, extra, inst_seed).items():
        feasible = prog.is_feasible(alloc.winners)
        val = prog.value(alloc.winners)
        # the oracle bounds only allocations that are feasible for the same program
        ok = (val <= opt + 1e-9) if feasible else None
        rows.append(_row(name, case, f"policy_surplus:{pol}", val, opt, "<= oracle" if feasible else "infeasible for program", None, ok, **kw))
    rows.append(_row(name, case, "dual_bound", dual.dual_bound, opt, ">= oracle", None, dual.dual_bound >= opt - 1e-9, **kw))
    if dual.primal_value is None:
        rows.append(_row(name, case, "primal_value", None, opt, "<= oracle", None, None, **kw))
        rel = math.inf
    else:
        rows.append(_row(name, case, "primal_value", dual.primal_value, opt, "<= oracle", None, dual.primal_value <= opt + 1e-9, **kw))
        rel = (dual.dual_bound - dual.primal_value) / max(abs(opt), 1e-12) if opt != 0 else (0.0 if dual.dual_bound - dual.primal_value <= 1e-9 else math.inf)
    rows.append(_row(name, case, "relative_gap", rel, 0.0, GAP_THRESHOLD, None, None, **kw))
    return rows


def oracle_sandwich(n: int = 200, seed: int = DEFAULT_SEED, iters: int = 200, jobs: int = 1) -> ExperimentReport:
    """Random small programs: oracle >= every feasible policy, dual >= oracle >= repaired primal."""
    items = [(i, derive_seed(seed, i)) for i in range(n)]
    chunks = _map(partial(oracle_instance, seed=seed, iters=iters), items, jobs)
    rows = [r for c in chunks for r in c]
    gaps = [r["value"] for r in rows if r["metric"] == "relative_gap"]
    closed = sum(g <= GAP_THRESHOLD for g in gaps)
    frac = closed / len(gaps) if gaps else 1.0
    rows.append(_row("oracle-sandwich", "all", "gap_closed_fraction", frac, 0.9, ">= 0.9", None, frac >= 0.9, seed=seed))
    return ExperimentReport("oracle-sandwich", rows, {"instances": n, "seed": seed, "iters": iters, "feasible": len(gaps)})


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    """Identifier, default seed base and replication count of a registered experiment."""

    id: str
    description: str
    replications: int = 1
    seed_base: int = DEFAULT_SEED
    params: dict = field(default_factory=dict)

    def seeds(self) -> list[int]:
        if self.replications == 1:
            return [self.seed_base]
        return [derive_seed(self.seed_base, r) for r in range(self.replications)]


EXPERIMENTS: dict[str, ExperimentSpec] = {
    "lognormal-reserve": ExperimentSpec("lognormal-reserve", "optimal reserve and revenues for lognormal buyers"),
    "hindsight-max": ExperimentSpec("hindsight-max", "highest valuation per round, N=5, T=10^4, q in {1,2,4}"),
    "randomized-max": ExperimentSpec("randomized-max", "fresh valuations, highest per round"),
    "round-robin": ExperimentSpec("round-robin", "nominee t mod N"),
    "uniform-random": ExperimentSpec("uniform-random", "uniform random nominee"),
    "greedy-fixed-v": ExperimentSpec("greedy-fixed-v", "demand-weighted nominee, every valuation 2.5"),
    "greedy-lognormal": ExperimentSpec("greedy-lognormal", "demand-weighted nominee, lognormal valuations"),
    "filtered-demand": ExperimentSpec("filtered-demand", "eligible set first, then demand-weighted", replications=20),
    "lagrangian-boost": ExperimentSpec("lagrangian-boost", "filtered demand-weighted with a boost of 0.25 on advertiser 3", replications=20),
    "static-vs-dynamic": ExperimentSpec("static-vs-dynamic", "two point-mass types, per-type versus single reserve"),
    "point-dominance": ExperimentSpec("point-dominance", "100 random two-type point instances"),
    "oracle-sandwich": ExperimentSpec("oracle-sandwich", "200 random programs: policies, oracle and dual bound"),
}


def run_experiment(exp_id: str, seed: int | None = None, replications: int | None = None, jobs: int = 1) -> ExperimentReport:
    if exp_id not in EXPERIMENTS:
        raise DomainError(f"unknown experiment {exp_id!r}; choose from {', '.join(EXPERIMENTS)}")
    spec = EXPERIMENTS[exp_id]
    seed = spec.seed_base if seed is None else int(seed)
    reps = spec.replications if replications is None else int(replications)
    if reps < 1:
        raise DomainError("replications must be >= 1")
    if exp_id == "lognormal-reserve":
        return reproduce_lognormal_tables()
    if exp_id == "static-vs-dynamic":
        return static_vs_dynamic_demo(seed=seed)
    if exp_id == "point-dominance":
        return point_dominance_battery(seed=seed)
    if exp_id == "oracle-sandwich":
        return oracle_sandwich(seed=seed, jobs=jobs)
    return reproduce_dsp_tables(policy=exp_id, seed=seed, replications=reps, jobs=jobs)
