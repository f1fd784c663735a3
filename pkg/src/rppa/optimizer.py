"""Impression- and budget-constrained scheduling programs and their solvers.

A :class:`ScheduleProgram` is the deterministic integer program faced by a DSP
with hindsight on valuations: choose at most one advertiser per round,
maximise total surplus ``sum w[n, t] x[n, t]``, subject to optional

* demand lower bounds ``sum_t x[n, t] >= demand[n]``,
* per-type lower bounds ``sum_{t: type(t) = k} x[n, t] >= type_targets[n, k]``,
* budget upper bounds ``sum_t prices[t] x[n, t] <= budget[n]``,

and the eligibility mask ``e`` (an advertiser can only be scheduled where its
valuation beats the quoted reserve).

Two solvers are provided: :func:`enumerate_optimal`, a brute-force oracle for
tiny instances, and :func:`solve_dual`, which dualises every side constraint
and runs projected subgradient descent on the Lagrangian dual.  Because the
inner maximisation decomposes by round, its integer and LP-relaxed optima
coincide, so every dual value is an upper bound on the program optimum.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .auction import draw_type_sequence
from .errors import DimensionError, DomainError, InfeasibleProgram, InstanceTooLarge
from .reserve import ItemTypeProfile, as_policy
from .scheduling import NONE, Advertiser, Allocation, draw_typed_valuations, draw_valuations

ENUMERATION_LIMIT = 10**7
_CHUNK = 1 << 16
_EPS = 1e-9

PROGRAM_KINDS = ("P2", "P3", "P5", "P7", "P8")


@dataclass
class ScheduleProgram:
    w: np.ndarray
    e: np.ndarray
    prices: np.ndarray
    demand: np.ndarray | None = None
    budget: np.ndarray | None = None
    type_labels: np.ndarray | None = None
    type_targets: np.ndarray | None = None
    kind: str = "P1"
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.e = np.asarray(self.e, dtype=bool)
        if self.w.ndim != 2 or self.e.shape != self.w.shape:
            raise DimensionError("w and e must be N x T matrices of equal shape")
        if not np.all(np.isfinite(self.w)):
            raise DomainError("surplus matrix must be finite")
        N, T = self.w.shape
        self.prices = np.broadcast_to(np.asarray(self.prices, dtype=float), (T,)).copy()
        if self.demand is not None:
            self.demand = np.asarray(self.demand, dtype=np.int64)
            if self.demand.shape != (N,) or np.any(self.demand < 0):
                raise DimensionError(f"demand must be {N} non-negative integers")
        if self.budget is not None:
            self.budget = np.asarray(self.budget, dtype=float)
            if self.budget.shape != (N,) or np.any(self.budget < 0):
                raise DimensionError(f"budget must be {N} non-negative numbers")
        if self.type_labels is not None:
            self.type_labels = np.asarray(self.type_labels, dtype=np.int64)
            if self.type_labels.shape != (T,) or np.any(self.type_labels < 0):
                raise DimensionError(f"type labels must be {T} non-negative integers")
        if self.type_targets is not None:
            if self.type_labels is None:
                raise DimensionError("type targets need per-round type labels")
            self.type_targets = np.asarray(self.type_targets, dtype=np.int64)
            if self.type_targets.ndim != 2 or self.type_targets.shape[0] != N:
                raise DimensionError("type targets must be an N x K matrix")
            if self.type_labels.max(initial=0) >= self.type_targets.shape[1]:
                raise DimensionError("a type label exceeds the number of target columns")

    @property
    def N(self) -> int:
        return self.w.shape[0]

    @property
    def T(self) -> int:
        return self.w.shape[1]

    @property
    def K(self) -> int:
        if self.type_targets is not None:
            return self.type_targets.shape[1]
        if self.type_labels is not None:
            return int(self.type_labels.max(initial=0)) + 1
        return 1

    @property
    def labels(self) -> np.ndarray:
        return self.type_labels if self.type_labels is not None else np.zeros(self.T, dtype=np.int64)

    @property
    def has_side_constraints(self) -> bool:
        return (
            (self.demand is not None and self.demand.any())
            or self.budget is not None
            or (self.type_targets is not None and self.type_targets.any())
        )

    def value(self, winners) -> float:
        winners = np.asarray(winners)
        t = np.flatnonzero(winners != NONE)
        return float(self.w[winners[t], t].sum())

    def counts(self, winners) -> np.ndarray:
        winners = np.asarray(winners)
        return np.bincount(winners[winners != NONE], minlength=self.N)

    def spend(self, winners) -> np.ndarray:
        winners = np.asarray(winners)
        m = winners != NONE
        return np.bincount(winners[m], weights=self.prices[m], minlength=self.N)

    def type_counts(self, winners) -> np.ndarray:
        winners = np.asarray(winners)
        out = np.zeros((self.N, self.K), dtype=np.int64)
        m = winners != NONE
        np.add.at(out, (winners[m], self.labels[m]), 1)
        return out

    def violations(self, winners) -> list[str]:
        """Every constraint the schedule breaks; empty iff feasible."""
        winners = np.asarray(winners)
        problems = []
        if winners.shape != (self.T,) or np.any((winners < NONE) | (winners >= self.N)):
            return ["schedule must hold one advertiser index (or -1) per round"]
        t = np.flatnonzero(winners != NONE)
        if not np.all(self.e[winners[t], t]):
            problems.append("ineligible advertiser scheduled")
        if self.demand is not None:
            short = np.flatnonzero(self.counts(winners) < self.demand)
            if short.size:
                problems.append(f"demand unmet for advertisers {short.tolist()}")
        if self.type_targets is not None:
            short = np.argwhere(self.type_counts(winners) < self.type_targets)
            if short.size:
                problems.append(f"type targets unmet for (n, k) {short.tolist()}")
        if self.budget is not None:
            over = np.flatnonzero(self.spend(winners) > self.budget + _EPS * np.maximum(1.0, self.budget))
            if over.size:
                problems.append(f"budget exceeded for advertisers {over.tolist()}")
        return problems

    def is_feasible(self, winners) -> bool:
        return not self.violations(winners)

    def budget_row(self) -> tuple[np.ndarray, np.ndarray]:
        """(per-round coefficient, right-hand side) of the budget rows.

        With a constant positive price the spend bound is the integer cap
        ``sum_t x <= floor(B / price)``; its LP relaxation has no fractional
        slack, unlike the money form.  Otherwise it is ``sum_t price_t x <= B``.
        """
        if self.budget is None:
            return np.zeros(self.T), np.full(self.N, math.inf)
        p = self.prices
        if self.T and p[0] > 0 and np.all(p == p[0]):
            return np.ones(self.T), np.floor(self.budget / p[0] + _EPS)
        return p.copy(), self.budget.copy()

    def allocation(self, winners) -> Allocation:
        """View a schedule as an :class:`Allocation` (valuation = surplus + price)."""
        winners = np.asarray(winners, dtype=np.int64)
        m = winners != NONE
        idx = np.where(m, winners, 0)
        t = np.arange(self.T)
        val = np.where(m, self.w[idx, t] + self.prices, np.nan)
        return Allocation(N=self.N, winners=winners, reserves=self.prices, valuations=val, bids=val, types=self.labels)

    # -- JSON ---------------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        def opt(a):
            return None if a is None else a.tolist()

        return {
            "kind": self.kind,
            "N": self.N,
            "T": self.T,
            "w": self.w.tolist(),
            "e": self.e.astype(int).tolist(),
            "prices": self.prices.tolist(),
            "demand": opt(self.demand),
            "budget": opt(self.budget),
            "type_labels": opt(self.type_labels),
            "type_targets": opt(self.type_targets),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScheduleProgram":
        keys = {"kind", "N", "T", "w", "e", "prices", "demand", "budget", "type_labels", "type_targets"}
        unknown = set(data) - keys
        if unknown:
            raise DomainError(f"unknown program keys: {sorted(unknown)}")
        missing = {"w", "e", "prices"} - set(data)
        if missing:
            raise DomainError(f"program is missing keys: {sorted(missing)}")
        prog = cls(
            w=data["w"],
            e=data["e"],
            prices=data["prices"],
            demand=data.get("demand"),
            budget=data.get("budget"),
            type_labels=data.get("type_labels"),
            type_targets=data.get("type_targets"),
            kind=data.get("kind", "P1"),
        )
        for dim in ("N", "T"):
            if dim in data and data[dim] != getattr(prog, dim):
                raise DimensionError(f"declared {dim}={data[dim]} does not match the matrices")
        return prog


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def _homogeneous(values, q):
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise DimensionError("valuations must be an N x T matrix")
    if not q >= 0:
        raise DomainError("reserve must be >= 0")
    return values, values - q, values > q


def build_p1(values, q: float, demand=None) -> ScheduleProgram:
    """Hindsight surplus maximisation with impression demands."""
    values, w, e = _homogeneous(values, q)
    N, T = values.shape
    if demand is not None:
        demand = np.asarray(demand, dtype=np.int64)
        if demand.shape != (N,):
            raise DimensionError(f"demand must have {N} entries")
        if np.any(demand >= T):
            raise InfeasibleProgram(f"every demand must be below T={T}, got {demand.tolist()}")
    prog = ScheduleProgram(w=w, e=e, prices=np.full(T, float(q)), demand=demand, kind="P1")
    # sum_t sum_n x <= T follows from at most one winner per round
    prog.notes["implied"] = ["total rounds"]
    return prog


def build_p6(values, q: float, budget) -> ScheduleProgram:
    """Hindsight surplus maximisation with budgets; at a constant price q the
    budget row is the integer cap floor(B_n / q) on wins."""
    if q <= 0:
        raise DomainError("budget programs need a positive reserve")
    values, w, e = _homogeneous(values, q)
    N, T = values.shape
    budget = np.asarray(budget, dtype=float)
    if budget.shape != (N,):
        raise DimensionError(f"budget must have {N} entries")
    return ScheduleProgram(w=w, e=e, prices=np.full(T, float(q)), budget=budget, kind="P6")


def budget_caps(program: ScheduleProgram) -> np.ndarray:
    """Largest number of wins each advertiser can afford at the cheapest price."""
    if program.budget is None:
        return np.full(program.N, program.T)
    pmin = program.prices.min()
    if pmin <= 0:
        return np.full(program.N, program.T)
    return np.floor(program.budget / pmin + _EPS).astype(np.int64)


def build_p4(values, types, policy, demand=None, type_targets=None, budget=None) -> ScheduleProgram:
    """Heterogeneous hindsight program; round t uses its realised type k_t and q_{k_t}."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 3:
        raise DimensionError("typed valuations must be N x K x T")
    N, K, T = values.shape
    types = np.asarray(types, dtype=np.int64)
    if types.shape != (T,) or np.any((types < 0) | (types >= K)):
        raise DimensionError("type sequence must have T entries in [0, K)")
    qs = as_policy(policy).for_types(K)
    realized = values[:, types, np.arange(T)]
    prices = qs[types]
    if demand is not None:
        demand = np.asarray(demand, dtype=np.int64)
        if demand.shape != (N,):
            raise DimensionError(f"demand must have {N} entries")
        if np.any(demand >= T):
            raise InfeasibleProgram(f"every demand must be below T={T}, got {demand.tolist()}")
    if type_targets is not None:
        type_targets = np.asarray(type_targets, dtype=np.int64)
        if type_targets.shape != (N, K):
            raise DimensionError(f"type targets must be {N} x {K}")
    return ScheduleProgram(
        w=realized - prices,
        e=realized > prices,
        prices=prices,
        demand=demand,
        budget=budget,
        type_labels=types,
        type_targets=type_targets,
        kind="P4",
    )


@dataclass(frozen=True)
class DspMarket:
    """Everything needed to sample a stochastic scheduling program."""

    advertisers: tuple[Advertiser, ...]
    T: int
    reserve: Any
    type_probs: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "advertisers", tuple(self.advertisers))
        object.__setattr__(self, "reserve", as_policy(self.reserve))
        object.__setattr__(self, "type_probs", tuple(self.type_probs))
        if self.T < 1 or not self.advertisers:
            raise DomainError("a market needs T >= 1 and at least one advertiser")

    @property
    def N(self) -> int:
        return len(self.advertisers)

    @property
    def K(self) -> int:
        return len(self.type_probs)


def saa_reduce(market: DspMarket, program_kind: str, rng: np.random.Generator) -> ScheduleProgram:
    """Sample one realisation and return the matching deterministic program.

    P2 -> P1 without demands, P3 -> P1, P7 -> P6, P5 -> P4 with demands and
    per-type targets, P8 -> P4 with per-type targets and budgets charged at
    the realised per-type reserve.  Expectation constraints are imposed on the
    sampled instance (sample-average approximation with one sample).
    """
    if program_kind not in PROGRAM_KINDS:
        raise DomainError(f"unknown program kind {program_kind!r}; expected one of {PROGRAM_KINDS}")
    advs = market.advertisers
    demand = np.array([a.demand for a in advs], dtype=np.int64)

    if program_kind in ("P2", "P3", "P7"):
        q = float(market.reserve.for_types(1)[0])
        values = draw_valuations(advs, market.T, rng)
        if program_kind == "P2":
            prog = build_p1(values, q)
        elif program_kind == "P3":
            prog = build_p1(values, q, demand)
        else:
            prog = build_p6(values, q, [math.inf if a.budget is None else a.budget for a in advs])
    else:
        K = market.K
        profile = ItemTypeProfile(market.type_probs, advs[0].dists)
        types = draw_type_sequence(profile, market.T, rng)
        typed = draw_typed_valuations(advs, K, market.T, rng)
        targets = np.array([a.type_targets if a.type_targets is not None else [0] * K for a in advs], dtype=np.int64)
        if program_kind == "P5":
            prog = build_p4(typed, types, market.reserve, demand=demand, type_targets=targets)
        else:
            budget = np.array([math.inf if a.budget is None else a.budget for a in advs])
            prog = build_p4(typed, types, market.reserve, type_targets=targets, budget=budget)
    prog.kind = program_kind
    return prog


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------


@dataclass
class OracleResult:
    feasible: bool
    value: float | None
    winners: np.ndarray | None
    evaluated: int


def enumerate_optimal(program: ScheduleProgram, limit: int = ENUMERATION_LIMIT) -> OracleResult:
    """Exhaustive search over every schedule with at most one winner per round.

    Only eligible advertisers are enumerated per round, and schedules are
    evaluated in vectorised chunks.  Ties go to the first maximiser in
    enumeration order.
    """
    N, T = program.N, program.T
    if (N + 1) ** T > limit:
        raise InstanceTooLarge(f"(N+1)^T = {(N + 1) ** T} exceeds the enumeration limit {limit}")

    options = [np.concatenate(([NONE], np.flatnonzero(program.e[:, t]))) for t in range(T)]
    bases = np.array([len(o) for o in options], dtype=np.int64)
    total = int(np.prod(bases)) if T else 1
    strides = np.ones(T, dtype=np.int64)
    for t in range(T - 2, -1, -1):
        strides[t] = strides[t + 1] * bases[t + 1]
    # table[t, j] = advertiser for option j in round t, and its surplus
    width = int(bases.max()) if T else 1
    adv_table = np.full((T, width), NONE, dtype=np.int64)
    for t, o in enumerate(options):
        adv_table[t, : len(o)] = o
    w_pad = np.concatenate([program.w, np.zeros((1, T))], axis=0)  # row -1 -> 0 surplus
    labels = program.labels

    best_val, best_row = -math.inf, None
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        digits = (idx[:, None] // strides[None, :]) % bases[None, :]
        adv = adv_table[np.arange(T)[None, :], digits]
        val = w_pad[adv, np.arange(T)[None, :]].sum(axis=1)
        ok = np.ones(idx.shape[0], dtype=bool)
        if program.demand is not None or program.budget is not None or program.type_targets is not None:
            for n in range(N):
                hit = adv == n
                if program.demand is not None and program.demand[n] > 0:
                    ok &= hit.sum(axis=1) >= program.demand[n]
                if program.budget is not None:
                    ok &= hit @ program.prices <= program.budget[n] + _EPS * max(1.0, program.budget[n])
                if program.type_targets is not None:
                    for k in range(program.type_targets.shape[1]):
                        if program.type_targets[n, k] > 0:
                            ok &= (hit & (labels == k)[None, :]).sum(axis=1) >= program.type_targets[n, k]
        if not ok.any():
            continue
        cand = np.where(ok, val, -math.inf)
        i = int(np.argmax(cand))
        if cand[i] > best_val:
            best_val, best_row = float(cand[i]), adv[i].copy()

    if best_row is None:
        return OracleResult(feasible=False, value=None, winners=None, evaluated=total)
    return OracleResult(feasible=True, value=best_val, winners=best_row, evaluated=total)


# ---------------------------------------------------------------------------
# Lagrangian relaxation
# ---------------------------------------------------------------------------


@dataclass
class Multipliers:
    """Non-negative multipliers: ``lam`` on demands, ``mu`` on budgets, ``nu`` on type targets."""

    lam: np.ndarray
    mu: np.ndarray
    nu: np.ndarray

    @classmethod
    def zeros(cls, program: ScheduleProgram) -> "Multipliers":
        return cls(np.zeros(program.N), np.zeros(program.N), np.zeros((program.N, program.K)))

    def copy(self) -> "Multipliers":
        return Multipliers(self.lam.copy(), self.mu.copy(), self.nu.copy())


def _multipliers(program: ScheduleProgram, lam, mu=None, nu=None) -> Multipliers:
    m = Multipliers.zeros(program)
    if lam is not None:
        m.lam = np.asarray(lam, dtype=float).reshape(program.N).copy()
    if mu is not None:
        m.mu = np.asarray(mu, dtype=float).reshape(program.N).copy()
    if nu is not None:
        m.nu = np.asarray(nu, dtype=float).reshape(program.N, program.K).copy()
    if np.any(m.lam < 0) or np.any(m.mu < 0) or np.any(m.nu < 0):
        raise DomainError("Lagrange multipliers must be non-negative")
    return m


def _as_winners(program: ScheduleProgram, x) -> np.ndarray:
    if isinstance(x, Allocation):
        return x.winners
    x = np.asarray(x)
    if x.ndim == 2:
        if x.shape != (program.N, program.T) or np.any(x.sum(axis=0) > 1) or np.any((x != 0) & (x != 1)):
            raise DomainError("x must be a 0/1 N x T matrix with at most one 1 per column")
        winners = np.full(program.T, NONE, dtype=np.int64)
        n, t = np.nonzero(x)
        winners[t] = n
        return winners
    return x.astype(np.int64)


def _constant_term(program: ScheduleProgram, m: Multipliers) -> float:
    c = 0.0
    if program.demand is not None:
        c -= float(m.lam @ program.demand)
    if program.budget is not None:
        _, rhs = program.budget_row()
        finite = np.isfinite(rhs)
        c += float(m.mu[finite] @ rhs[finite])
    if program.type_targets is not None:
        c -= float((m.nu * program.type_targets).sum())
    return c


def _boosted_surplus(program: ScheduleProgram, m: Multipliers) -> np.ndarray:
    s = program.w.copy()
    if program.demand is not None:
        s += m.lam[:, None]
    if program.budget is not None:
        coef, _ = program.budget_row()
        s -= m.mu[:, None] * coef[None, :]
    if program.type_targets is not None:
        s += m.nu[:, program.labels]
    return s


def lagrangian_value(program: ScheduleProgram, lam, x, mu=None, nu=None) -> float:
    """L(x, lam) = sum (w + lam_n) x - lam . demand, with budget/type terms when present."""
    m = _multipliers(program, lam, mu, nu)
    winners = _as_winners(program, x)
    s = _boosted_surplus(program, m)
    t = np.flatnonzero(winners != NONE)
    return float(s[winners[t], t].sum()) + _constant_term(program, m)


@dataclass
class InnerResult:
    winners: np.ndarray
    value: float
    relaxed_value: float


def inner_max(program: ScheduleProgram, lam, mu=None, nu=None) -> InnerResult:
    """Maximise the Lagrangian over schedules with at most one winner per round.

    Each round independently takes the eligible advertiser with the largest
    boosted surplus if that surplus is >= 0.  Per-round decomposition means
    the LP relaxation over 0 <= x <= 1 has the same optimum.
    """
    m = _multipliers(program, lam, mu, nu)
    s = np.where(program.e, _boosted_surplus(program, m), -math.inf)
    winners = np.full(program.T, NONE, dtype=np.int64)
    if program.N:
        best = np.argmax(s, axis=0)
        top = s[best, np.arange(program.T)]
        take = top >= 0.0
        winners[take] = best[take]
        total = float(top[take].sum())
    else:
        total = 0.0
    h = total + _constant_term(program, m)
    return InnerResult(winners=winners, value=h, relaxed_value=h)


@dataclass
class LagrangianState:
    multipliers: Multipliers
    k: int = 1
    s0: float = 1.0
    dual_value: float = math.inf
    best_dual: float = math.inf
    best_multipliers: Multipliers | None = None
    best_primal: float = -math.inf
    best_winners: np.ndarray | None = None
    history: list = field(default_factory=list)

    @property
    def lam(self) -> np.ndarray:
        return self.multipliers.lam

    @property
    def step(self) -> float:
        return self.s0 / self.k


def subgradient_step(state: LagrangianState, program: ScheduleProgram, x, step: float | None = None) -> LagrangianState:
    """Projected descent on the dual: a multiplier rises while its constraint is violated.

    lam_n <- max(0, lam_n - s (sum_t x[n, t] - demand_n)), and likewise for
    budget (slack = budget - spend) and type-target multipliers.
    """
    s = state.step if step is None else step
    if not s > 0:
        raise DomainError("step size must be positive")
    winners = _as_winners(program, x)
    m = state.multipliers.copy()
    if program.demand is not None:
        m.lam = np.maximum(0.0, m.lam - s * (program.counts(winners) - program.demand))
    if program.budget is not None:
        coef, rhs = program.budget_row()
        used = np.bincount(winners[winners != NONE], weights=coef[winners != NONE], minlength=program.N)
        slack = np.where(np.isfinite(rhs), rhs - used, 0.0)
        m.mu = np.maximum(0.0, m.mu - s * slack)
    if program.type_targets is not None:
        m.nu = np.maximum(0.0, m.nu - s * (program.type_counts(winners) - program.type_targets))
    state.multipliers = m
    state.k += 1
    return state


def repair(program: ScheduleProgram, winners) -> np.ndarray | None:
    """Greedy feasibility repair of a Lagrangian schedule; ``None`` if it fails.

    Over-budget advertisers shed their lowest-surplus rounds.  Unmet type
    targets, then unmet demands, are filled from the advertiser's
    highest-surplus eligible rounds it does not already hold; an occupied
    round is taken only if the current holder stays within its own demand and
    type targets.  Remaining empty rounds are then handed to the best eligible
    advertiser that can still afford them.
    """
    x = np.array(winners, dtype=np.int64, copy=True)
    N, T = program.N, program.T
    labels = program.labels
    demand = program.demand if program.demand is not None else np.zeros(N, dtype=np.int64)
    targets = program.type_targets if program.type_targets is not None else np.zeros((N, program.K), dtype=np.int64)
    budget = program.budget if program.budget is not None else np.full(N, math.inf)
    tol = _EPS * np.maximum(1.0, np.where(np.isfinite(budget), budget, 1.0))

    x[(x != NONE) & ~program.e[np.where(x == NONE, 0, x), np.arange(T)]] = NONE
    counts = program.counts(x)
    tcounts = program.type_counts(x)
    spend = program.spend(x)

    def drop(t):
        n = x[t]
        counts[n] -= 1
        tcounts[n, labels[t]] -= 1
        spend[n] -= program.prices[t]
        x[t] = NONE

    def give(t, n):
        if x[t] != NONE:
            drop(t)
        x[t] = n
        counts[n] += 1
        tcounts[n, labels[t]] += 1
        spend[n] += program.prices[t]

    for n in range(N):
        if spend[n] > budget[n] + tol[n]:
            for t in sorted(np.flatnonzero(x == n), key=lambda t: program.w[n, t]):
                drop(t)
                if spend[n] <= budget[n] + tol[n]:
                    break

    def evictable(t):
        m = x[t]
        return m == NONE or (counts[m] - 1 >= demand[m] and tcounts[m, labels[t]] - 1 >= targets[m, labels[t]])

    def fill(n, need, rounds):
        for t in sorted(rounds, key=lambda t: -program.w[n, t]):
            if need() <= 0:
                return
            if x[t] == n or not evictable(t):
                continue
            if spend[n] + program.prices[t] > budget[n] + tol[n]:
                continue
            give(t, n)

    for n, k in sorted(np.argwhere(targets > 0).tolist(), key=lambda nk: -(targets[nk[0], nk[1]] - tcounts[nk[0], nk[1]])):
        rounds = np.flatnonzero(program.e[n] & (labels == k))
        fill(n, lambda: targets[n, k] - tcounts[n, k], rounds)
    for n in sorted(range(N), key=lambda n: -(demand[n] - counts[n])):
        if demand[n] > counts[n]:
            fill(n, lambda: demand[n] - counts[n], np.flatnonzero(program.e[n]))

    for t in np.flatnonzero(x == NONE):
        cands = [n for n in np.flatnonzero(program.e[:, t]) if program.w[n, t] > 0 and spend[n] + program.prices[t] <= budget[n] + tol[n]]
        if cands:
            give(t, max(cands, key=lambda n: program.w[n, t]))

    return x if program.is_feasible(x) else None


@dataclass
class DualResult:
    dual_bound: float
    primal_value: float | None
    winners: np.ndarray | None
    multipliers: Multipliers
    iterations: int
    s0: float
    history: list

    @property
    def lam(self) -> np.ndarray:
        return self.multipliers.lam

    @property
    def gap(self) -> float | None:
        return None if self.primal_value is None else self.dual_bound - self.primal_value

    @property
    def relative_gap(self) -> float | None:
        if self.primal_value is None:
            return None
        return self.gap / max(abs(self.primal_value), 1e-12)

    def to_dict(self) -> dict[str, Any]:
        return {
            "dual_bound": self.dual_bound,
            "primal_value": self.primal_value,
            "gap": self.gap,
            "relative_gap": self.relative_gap,
            "lambda": self.multipliers.lam.tolist(),
            "mu": self.multipliers.mu.tolist(),
            "nu": self.multipliers.nu.tolist(),
            "allocation": None if self.winners is None else self.winners.tolist(),
            "iterations": self.iterations,
            "s0": self.s0,
            "primal_found": self.primal_value is not None,
        }


def _step_scale(program: ScheduleProgram) -> float:
    total = 0.0
    if program.demand is not None:
        total += float(program.demand.sum())
    if program.type_targets is not None:
        total += float(program.type_targets.sum())
    return max(1.0, total)


def solve_dual(program: ScheduleProgram, max_iters: int = 200, s0: float | None = None) -> DualResult:
    """Projected subgradient method on the Lagrangian dual with steps s0 / k.

    Each iterate's schedule is repaired into a feasible one to track the
    best primal value.  The default ``s0`` is the initial duality gap divided
    by the total demand; it stops as soon as the gap closes.
    """
    state = LagrangianState(multipliers=Multipliers.zeros(program))

    def record(inner):
        state.dual_value = inner.value
        state.history.append(inner.value)
        if inner.value < state.best_dual:
            state.best_dual = inner.value
            state.best_multipliers = state.multipliers.copy()
        fixed = repair(program, inner.winners)
        if fixed is not None:
            val = program.value(fixed)
            if val > state.best_primal:
                state.best_primal, state.best_winners = val, fixed

    def closed():
        return state.best_winners is not None and state.best_dual - state.best_primal <= _EPS * max(1.0, abs(state.best_primal))

    inner = inner_max(program, state.lam, state.multipliers.mu, state.multipliers.nu)
    record(inner)
    if s0 is None:
        gap = state.best_dual - state.best_primal if state.best_winners is not None else abs(state.best_dual)
        s0 = max(gap, 1.0 if state.best_winners is None else 0.0) / _step_scale(program)
    state.s0 = s0
    iters = 1
    if program.has_side_constraints and s0 > 0:
        while iters < max_iters and not closed():
            subgradient_step(state, program, inner.winners)
            m = state.multipliers
            inner = inner_max(program, m.lam, m.mu, m.nu)
            record(inner)
            iters += 1

    primal = state.best_primal if state.best_winners is not None else None
    return DualResult(
        dual_bound=state.best_dual,
        primal_value=primal,
        winners=state.best_winners,
        multipliers=state.best_multipliers,
        iterations=iters,
        s0=state.s0,
        history=state.history,
    )
