"""Advertiser scheduling at a demand-side platform (DSP).

In every round the seller posts a reserve and the DSP may forward at most one
of its advertisers.  The scheduled advertiser wins iff its valuation is
strictly above the reserve and then pays exactly the reserve.

The homogeneous policies consume a pre-drawn ``N x T`` valuation matrix, so
the same realisation can be replayed under several reserves or policies.
Randomness internal to a policy (nominee draws, tie-breaking) comes from a
separate generator.  :func:`run_policy` wires both from one master seed.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .auction import draw_type_sequence, format_value
from .distributions import ValuationDistribution, from_dict
from .errors import DimensionError, DomainError
from .reserve import ItemTypeProfile, as_policy
from .rng import substreams

NONE = -1
_BUDGET_EPS = 1e-9

POLICIES = (
    "hindsight-max",
    "randomized-max",
    "hetero-hindsight",
    "round-robin",
    "uniform-random",
    "filtered-rr",
    "filtered-random",
    "filtered-demand",
    "greedy-demand",
    "lagrangian-boost",
    "throttled",
)

ADVERTISER_CSV_COLUMNS = ("adv_id", "impressions", "revenue_per_round", "demand_met", "budget_spent")


@dataclass(frozen=True)
class Advertiser:
    """A DSP client.

    ``dists`` holds one valuation law per item type (a single entry for
    homogeneous markets).  ``demand`` is the minimum number of impressions,
    ``budget`` the maximum total spend, ``type_targets`` per-type impression
    minimums and ``throttle`` an explicit participation probability.
    """

    dists: tuple[ValuationDistribution, ...]
    demand: int = 0
    budget: float | None = None
    type_targets: tuple[int, ...] | None = None
    throttle: float | None = None

    def __post_init__(self):
        if isinstance(self.dists, ValuationDistribution):
            object.__setattr__(self, "dists", (self.dists,))
        else:
            object.__setattr__(self, "dists", tuple(self.dists))
        if self.demand < 0:
            raise DomainError("demand must be >= 0")
        if self.budget is not None and self.budget < 0:
            raise DomainError("budget must be >= 0")
        if self.throttle is not None and not 0 <= self.throttle <= 1:
            raise DomainError("throttle probability must lie in [0, 1]")
        if self.type_targets is not None:
            object.__setattr__(self, "type_targets", tuple(int(y) for y in self.type_targets))

    @property
    def dist(self) -> ValuationDistribution:
        return self.dists[0]

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"demand": self.demand}
        if len(self.dists) == 1:
            out["dist"] = self.dist.to_dict()
        else:
            out["dists"] = [d.to_dict() for d in self.dists]
        if self.budget is not None:
            out["budget"] = self.budget
        if self.type_targets is not None:
            out["type_targets"] = list(self.type_targets)
        if self.throttle is not None:
            out["throttle"] = self.throttle
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Advertiser":
        allowed = {"dist", "dists", "demand", "budget", "type_targets", "throttle"}
        unknown = set(data) - allowed
        if unknown:
            raise DomainError(f"unknown advertiser keys: {sorted(unknown)}")
        if ("dist" in data) == ("dists" in data):
            raise DomainError('advertiser needs exactly one of "dist" or "dists"')
        dists = [from_dict(data["dist"])] if "dist" in data else [from_dict(d) for d in data["dists"]]
        return cls(
            dists=tuple(dists),
            demand=int(data.get("demand", 0)),
            budget=None if data.get("budget") is None else float(data["budget"]),
            type_targets=data.get("type_targets"),
            throttle=data.get("throttle"),
        )


@dataclass
class Allocation:
    """Per-round schedule: winner index (or ``NONE``), quoted reserve, item type.

    ``valuations`` is the winner's true valuation and ``bids`` the valuation
    the policy used to test eligibility (they differ only under boosting).
    """

    N: int
    winners: np.ndarray
    reserves: np.ndarray
    valuations: np.ndarray
    bids: np.ndarray
    types: np.ndarray = None

    def __post_init__(self):
        self.winners = np.asarray(self.winners, dtype=np.int64)
        T = self.winners.shape[0]
        self.reserves = np.broadcast_to(np.asarray(self.reserves, dtype=float), (T,)).copy()
        if self.types is None:
            self.types = np.zeros(T, dtype=np.int64)

    @property
    def T(self) -> int:
        return int(self.winners.shape[0])

    @property
    def allocated(self) -> np.ndarray:
        return self.winners != NONE

    @property
    def x(self) -> np.ndarray:
        """Dense 0/1 indicator matrix, shape (N, T)."""
        out = np.zeros((self.N, self.T), dtype=np.int8)
        t = np.flatnonzero(self.allocated)
        out[self.winners[t], t] = 1
        return out

    @property
    def prices(self) -> np.ndarray:
        return np.where(self.allocated, self.reserves, 0.0)

    def impressions(self) -> np.ndarray:
        return np.bincount(self.winners[self.allocated], minlength=self.N)

    def spend(self) -> np.ndarray:
        return np.bincount(self.winners[self.allocated], weights=self.reserves[self.allocated], minlength=self.N)

    def surplus(self) -> np.ndarray:
        """Per-advertiser sum of (valuation - price) over won rounds."""
        m = self.allocated
        return np.bincount(self.winners[m], weights=self.valuations[m] - self.reserves[m], minlength=self.N)

    def type_impressions(self, K: int) -> np.ndarray:
        out = np.zeros((self.N, K), dtype=np.int64)
        m = self.allocated
        np.add.at(out, (self.winners[m], self.types[m]), 1)
        return out

    @property
    def seller_revenue(self) -> float:
        return float(self.prices.sum())

    @property
    def dsp_surplus(self) -> float:
        return float(self.surplus().sum())

    def feasibility_violations(self) -> list[str]:
        """Empty iff every scheduled bid strictly exceeds its quoted reserve."""
        problems = []
        if np.any((self.winners < NONE) | (self.winners >= self.N)):
            problems.append("winner index out of range")
        m = self.allocated
        bad = np.flatnonzero(m & ~(self.bids > self.reserves))
        if bad.size:
            problems.append(f"{bad.size} rounds scheduled at or below the reserve (first t={bad[0]})")
        return problems


# ---------------------------------------------------------------------------
# valuation draws
# ---------------------------------------------------------------------------


def draw_valuations(advertisers: Sequence[Advertiser], T: int, rng: np.random.Generator) -> np.ndarray:
    """Homogeneous hindsight matrix ``v[n, t]`` by inverse-cdf sampling."""
    u = rng.random((len(advertisers), T))
    return np.vstack([adv.dist.quantile(u[n]) for n, adv in enumerate(advertisers)]) if advertisers else u


def draw_typed_valuations(advertisers: Sequence[Advertiser], K: int, T: int, rng: np.random.Generator) -> np.ndarray:
    """Heterogeneous hindsight tensor ``v[n, k, t]``."""
    u = rng.random((len(advertisers), K, T))
    out = np.empty_like(u)
    for n, adv in enumerate(advertisers):
        if len(adv.dists) != K:
            raise DimensionError(f"advertiser {n} has {len(adv.dists)} type distributions, market has {K}")
        for k in range(K):
            out[n, k] = adv.dists[k].quantile(u[n, k])
    return out


# ---------------------------------------------------------------------------
# shared machinery
# ---------------------------------------------------------------------------


def _prepare(values, q, boost=None, budgets=None):
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise DimensionError("valuation matrix must be N x T")
    N, T = values.shape
    reserves = np.broadcast_to(np.asarray(q, dtype=float), (T,)).astype(float)
    if np.any(reserves < 0):
        raise DomainError("reserves must be >= 0")
    bids = values
    if boost is not None:
        boost = np.asarray(boost, dtype=float)
        if boost.shape != (N,):
            raise DimensionError(f"boost must have {N} entries")
        if np.any(boost < 0):
            raise DomainError("boost entries must be >= 0")
        bids = values + boost[:, None]
    budget_arr = None
    if budgets is not None:
        budget_arr = np.array([math.inf if b is None else float(b) for b in budgets])
        if budget_arr.shape != (N,):
            raise DimensionError(f"budgets must have {N} entries")
    return values, bids, reserves, budget_arr


class _Ledger:
    """Tracks spend so that budget-constrained advertisers are never overdrawn."""

    def __init__(self, budgets, N):
        self.budgets = budgets
        self.spent = [0.0] * N

    def can_pay(self, n: int, price: float) -> bool:
        if self.budgets is None:
            return True
        return self.spent[n] + price <= self.budgets[n] + _BUDGET_EPS

    def pay(self, n: int, price: float) -> None:
        self.spent[n] += price


def _finish(values, bids, reserves, winners, types=None) -> Allocation:
    winners = np.asarray(winners, dtype=np.int64)
    t = np.arange(winners.shape[0])
    won = winners != NONE
    idx = np.where(won, winners, 0)
    val = np.where(won, values[idx, t], np.nan)
    bid = np.where(won, bids[idx, t], np.nan)
    return Allocation(N=values.shape[0], winners=winners, reserves=reserves, valuations=val, bids=bid, types=types)


def _nominee_schedule(values, bids, reserves, nominees, budgets) -> Allocation:
    N, T = values.shape
    ledger = _Ledger(budgets, N)
    winners = [NONE] * T
    bid_rows = bids.T.tolist()
    qs = reserves.tolist()
    for t, n in enumerate(nominees):
        if n == NONE:
            continue
        if bid_rows[t][n] > qs[t] and ledger.can_pay(n, qs[t]):
            winners[t] = n
            ledger.pay(n, qs[t])
    return _finish(values, bids, reserves, winners)


def _pick_weighted(weights: list[float], rng: np.random.Generator) -> int:
    total = math.fsum(weights)
    u = rng.random() * total
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if u < acc:
            return i
    return max(i for i, w in enumerate(weights) if w > 0)


def demand_weights(demands: Sequence[float]) -> np.ndarray:
    """xi_n = Delta_n / sum(Delta)."""
    d = np.asarray(demands, dtype=float)
    if np.any(d < 0) or d.sum() <= 0:
        raise DomainError("demand-weighted selection needs non-negative demands with a positive total")
    return d / d.sum()


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------


def schedule_hindsight_max(values, q, rng: np.random.Generator | None = None, budgets=None) -> Allocation:
    """Highest-valuation advertiser per round, scheduled iff its valuation beats the reserve.

    Ties for the maximum are broken uniformly at random with ``rng`` (only
    consulted when a tie actually occurs).  With budgets, advertisers that
    cannot afford the reserve are left out of the round.
    """
    values, bids, reserves, budgets = _prepare(values, q, budgets=budgets)
    N, T = values.shape
    ledger = _Ledger(budgets, N)
    winners = [NONE] * T
    rows = bids.T.tolist()
    qs = reserves.tolist()
    for t in range(T):
        row, qt = rows[t], qs[t]
        best, tied = -math.inf, []
        for n in range(N):
            b = row[n]
            if b <= qt or not ledger.can_pay(n, qt):
                continue
            if b > best:
                best, tied = b, [n]
            elif b == best:
                tied.append(n)
        if not tied:
            continue
        if len(tied) == 1:
            n = tied[0]
        else:
            if rng is None:
                raise DomainError("tied valuations need an rng for tie-breaking")
            n = tied[int(rng.integers(len(tied)))]
        winners[t] = n
        ledger.pay(n, qt)
    return _finish(values, bids, reserves, winners)


def schedule_randomized_max(advertisers: Sequence[Advertiser], q, T: int, rng: np.random.Generator, budgets=None) -> Allocation:
    """Draw every advertiser's valuation afresh each round, then serve the maximum."""
    values = draw_valuations(advertisers, T, rng)
    return schedule_hindsight_max(values, q, rng, budgets=budgets)


def schedule_hetero_hindsight(values, types, policy, rng: np.random.Generator | None = None, budgets=None) -> Allocation:
    """Per round observe the item type k, quote q_k and serve the highest v[n, k, t]."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 3:
        raise DimensionError("typed valuations must be N x K x T")
    N, K, T = values.shape
    types = np.asarray(types, dtype=np.int64)
    if types.shape != (T,) or np.any((types < 0) | (types >= K)):
        raise DimensionError("type sequence must have T entries in [0, K)")
    qs = as_policy(policy).for_types(K)
    realized = values[:, types, np.arange(T)]
    alloc = schedule_hindsight_max(realized, qs[types], rng, budgets=budgets)
    alloc.types = types
    return alloc


def schedule_round_robin(values, q, rng: np.random.Generator | None = None, budgets=None) -> Allocation:
    """Nominate advertiser t mod N; it wins iff its valuation beats the reserve.

    The pointer advances every round whether or not the nominee wins.
    """
    values, bids, reserves, budgets = _prepare(values, q, budgets=budgets)
    N, T = values.shape
    return _nominee_schedule(values, bids, reserves, [t % N for t in range(T)], budgets)


def schedule_uniform_random(values, q, rng: np.random.Generator, budgets=None) -> Allocation:
    """Nominate a uniformly random advertiser each round."""
    values, bids, reserves, budgets = _prepare(values, q, budgets=budgets)
    N, T = values.shape
    nominees = rng.integers(N, size=T).tolist()
    return _nominee_schedule(values, bids, reserves, nominees, budgets)


def schedule_greedy_demand(values, q, rng: np.random.Generator, demands=None, budgets=None, weights=None) -> Allocation:
    """Nominate advertiser n with probability xi_n = Delta_n / sum(Delta).

    ``weights`` overrides the demand-derived probabilities (they must sum to
    at most one; leftover mass nominates nobody).
    """
    values, bids, reserves, budgets = _prepare(values, q, budgets=budgets)
    N, T = values.shape
    xi = demand_weights(demands) if weights is None else np.asarray(weights, dtype=float)
    if xi.shape != (N,) or np.any(xi < 0) or xi.sum() > 1 + 1e-12:
        raise DomainError("selection probabilities must be N non-negative numbers summing to at most 1")
    probs = np.append(xi, max(0.0, 1.0 - xi.sum()))
    probs /= probs.sum()
    draws = rng.choice(N + 1, size=T, p=probs)
    nominees = np.where(draws == N, NONE, draws).tolist()
    return _nominee_schedule(values, bids, reserves, nominees, budgets)


def schedule_filtered(
    values,
    q,
    rng: np.random.Generator,
    inner_rule: str = "round_robin",
    weights=None,
    budgets=None,
    boost=None,
) -> Allocation:
    """Keep only advertisers whose valuation beats the reserve, then pick one.

    ``inner_rule`` is ``"round_robin"`` (pointer moves past the advertiser
    just served), ``"uniform"`` or ``"demand_weighted"`` (``weights``
    renormalised over the eligible set; uniform if they are all zero there).
    A round stays empty only when nobody is eligible.
    """
    if inner_rule not in ("round_robin", "uniform", "demand_weighted"):
        raise DomainError(f"unknown inner rule {inner_rule!r}")
    values, bids, reserves, budgets = _prepare(values, q, boost=boost, budgets=budgets)
    N, T = values.shape
    if inner_rule == "demand_weighted":
        if weights is None:
            raise DomainError("demand_weighted selection needs weights")
        w = np.asarray(weights, dtype=float)
        if w.shape != (N,) or np.any(w < 0):
            raise DomainError(f"weights must be {N} non-negative numbers")
        w = w.tolist()
    ledger = _Ledger(budgets, N)
    winners = [NONE] * T
    rows = bids.T.tolist()
    qs = reserves.tolist()
    pointer = 0
    for t in range(T):
        row, qt = rows[t], qs[t]
        eligible = [n for n in range(N) if row[n] > qt and ledger.can_pay(n, qt)]
        if not eligible:
            continue
        if inner_rule == "round_robin":
            n = min(eligible, key=lambda m: (m - pointer) % N)
            pointer = (n + 1) % N
        elif inner_rule == "uniform":
            n = eligible[int(rng.integers(len(eligible)))]
        else:
            ew = [w[m] for m in eligible]
            if sum(ew) > 0:
                n = eligible[_pick_weighted(ew, rng)]
            else:
                n = eligible[int(rng.integers(len(eligible)))]
        winners[t] = n
        ledger.pay(n, qt)
    return _finish(values, bids, reserves, winners)


def schedule_lagrangian_boosted(values, q, rng: np.random.Generator, boost, demands=None, weights=None, budgets=None) -> Allocation:
    """Demand-weighted filtered policy with advertiser n boosted by ``boost[n]``.

    The boost raises the valuation used in the eligibility test (v + boost_n
    must beat the reserve) and the selection weight (xi_n + boost_n,
    renormalised over the eligible set).  The price is still the reserve and
    ``valuations`` on the result are the unboosted ones.  A zero boost gives
    exactly :func:`schedule_filtered` with demand weights.
    """
    if weights is None:
        weights = demand_weights(demands)
    boost = np.asarray(boost, dtype=float)
    weights = np.asarray(weights, dtype=float) + boost
    return schedule_filtered(values, q, rng, "demand_weighted", weights=weights, budgets=budgets, boost=boost)


def probabilistic_throttle(budget: float, q: float, T: int, safety: float = 0.0) -> float:
    """Per-round participation probability xi = min(B / (q T), 1) * (1 - safety).

    Participating with probability xi keeps expected spend xi T q at or
    below the budget.
    """
    if q <= 0:
        raise DomainError("throttling needs a positive reserve")
    if T < 1 or budget < 0:
        raise DomainError("T must be >= 1 and budget >= 0")
    if not 0 <= safety < 1:
        raise DomainError("safety margin must lie in [0, 1)")
    return min(budget / (q * T), 1.0) * (1.0 - safety)


def throttle_probabilities(budgets: Sequence[float], q: float, T: int, normalize: bool = False, safety: float = 0.0) -> np.ndarray:
    """Throttle probability per advertiser; ``normalize`` rescales them to sum to one."""
    xi = np.array([probabilistic_throttle(b, q, T, safety) for b in budgets])
    if normalize:
        if xi.sum() <= 0:
            raise DomainError("cannot normalise all-zero throttle probabilities")
        xi = xi / xi.sum()
    return xi


def schedule_throttled(values, q, rng: np.random.Generator, budgets, safety: float = 0.0) -> Allocation:
    """Each round nominate advertiser n with its throttle probability B_n / (q T).

    Probability mass left over when the budgets sum to less than ``q T``
    nominates nobody.  Budgets are also enforced exactly.
    """
    values = np.asarray(values, dtype=float)
    T = values.shape[1]
    qbar = float(np.max(q))
    xi = throttle_probabilities(budgets, qbar, T, safety=safety)
    if xi.sum() > 1:
        xi = xi / xi.sum()
    return schedule_greedy_demand(values, q, rng, weights=xi, budgets=budgets)


# ---------------------------------------------------------------------------
# reports and the seeded front door
# ---------------------------------------------------------------------------


@dataclass
class ScheduleReport:
    policy: str
    seed: int
    allocation: Allocation
    advertisers: Sequence[Advertiser]
    extra: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.allocation.T

    @property
    def seller_revenue_per_round(self) -> float:
        return self.allocation.seller_revenue / self.T

    def demand_met(self) -> np.ndarray:
        imps = self.allocation.impressions()
        return np.array([imps[n] >= adv.demand for n, adv in enumerate(self.advertisers)])

    def budget_respected(self) -> np.ndarray:
        spend = self.allocation.spend()
        return np.array([adv.budget is None or spend[n] <= adv.budget + _BUDGET_EPS for n, adv in enumerate(self.advertisers)])

    def advertiser_rows(self) -> list[dict]:
        alloc = self.allocation
        imps, surplus, spend = alloc.impressions(), alloc.surplus(), alloc.spend()
        met = self.demand_met()
        return [
            {
                "adv_id": n + 1,
                "impressions": int(imps[n]),
                "revenue_per_round": float(surplus[n]) / self.T,
                "demand_met": bool(met[n]),
                "budget_spent": float(spend[n]),
            }
            for n in range(alloc.N)
        ]

    def summary(self) -> dict:
        alloc = self.allocation
        return {
            "policy": self.policy,
            "seed": int(self.seed),
            "T": self.T,
            "seller_rev_total": alloc.seller_revenue,
            "seller_rev_per_round": self.seller_revenue_per_round,
            "impressions_total": int(alloc.allocated.sum()),
            "dsp_surplus": alloc.dsp_surplus,
            "all_demands_met": bool(self.demand_met().all()),
            "all_budgets_respected": bool(self.budget_respected().all()),
            "advertisers": self.advertiser_rows(),
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# policy={self.policy} seed={int(self.seed)} T={self.T} seller_rev_per_round={self.seller_revenue_per_round:.6g}\n")
        writer = csv.DictWriter(buf, fieldnames=ADVERTISER_CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.advertiser_rows():
            writer.writerow({k: format_value(v) for k, v in row.items()})
        return buf.getvalue()


def run_policy(
    policy: str,
    advertisers: Sequence[Advertiser],
    q,
    T: int,
    seed: int,
    values=None,
    boost=None,
    type_probs=None,
    enforce_budgets: bool = True,
) -> ScheduleReport:
    """Run a named policy from a master seed.

    Valuations come from the ``valuations`` substream (unless ``values`` is
    given), item types from ``types`` and policy randomness from ``policy``,
    matching the single-buyer simulator so that N=1 runs coincide with it.
    """
    if policy not in POLICIES:
        raise DomainError(f"unknown policy {policy!r}; choose from {', '.join(POLICIES)}")
    if not advertisers:
        raise DomainError("at least one advertiser is required")
    streams = substreams(seed)
    prng = streams["policy"]
    N = len(advertisers)
    budgets = [a.budget for a in advertisers] if enforce_budgets and any(a.budget is not None for a in advertisers) else None
    extra: dict = {}

    if policy == "hetero-hindsight":
        K = len(advertisers[0].dists)
        p = type_probs if type_probs is not None else [1.0 / K] * K
        profile = ItemTypeProfile(tuple(p), tuple(advertisers[0].dists))
        types = draw_type_sequence(profile, T, streams["types"])
        typed = values if values is not None else draw_typed_valuations(advertisers, K, T, streams["valuations"])
        alloc = schedule_hetero_hindsight(typed, types, q, prng, budgets=budgets)
        return ScheduleReport(policy, seed, alloc, advertisers, extra)

    if values is None:
        values = draw_valuations(advertisers, T, streams["valuations"])
    demands = [a.demand for a in advertisers]

    if policy in ("hindsight-max", "randomized-max"):
        alloc = schedule_hindsight_max(values, q, prng, budgets=budgets)
    elif policy == "round-robin":
        alloc = schedule_round_robin(values, q, prng, budgets=budgets)
    elif policy == "uniform-random":
        alloc = schedule_uniform_random(values, q, prng, budgets=budgets)
    elif policy == "filtered-rr":
        alloc = schedule_filtered(values, q, prng, "round_robin", budgets=budgets)
    elif policy == "filtered-random":
        alloc = schedule_filtered(values, q, prng, "uniform", budgets=budgets)
    elif policy == "filtered-demand":
        alloc = schedule_filtered(values, q, prng, "demand_weighted", weights=_weights_for(advertisers), budgets=budgets)
    elif policy == "greedy-demand":
        alloc = schedule_greedy_demand(values, q, prng, weights=_weights_for(advertisers), budgets=budgets)
    elif policy == "lagrangian-boost":
        boost = np.zeros(N) if boost is None else np.asarray(boost, dtype=float)
        extra["boost"] = boost.tolist()
        alloc = schedule_lagrangian_boosted(values, q, prng, boost, weights=_weights_for(advertisers), budgets=budgets)
    else:  # throttled
        if budgets is None:
            raise DomainError("the throttled policy needs advertiser budgets")
        alloc = schedule_throttled(values, q, prng, budgets)
    return ScheduleReport(policy, seed, alloc, advertisers, extra)


def _weights_for(advertisers: Sequence[Advertiser]) -> np.ndarray:
    if all(a.throttle is not None for a in advertisers):
        return np.array([a.throttle for a in advertisers], dtype=float)
    return demand_weights([a.demand for a in advertisers])
