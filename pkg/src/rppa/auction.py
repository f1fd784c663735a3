"""Posted-price rounds and repeated single-buyer simulations."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import DimensionError, DomainError
from .reserve import ItemTypeProfile, PerTypeReserve, ReservePolicy, StaticReserve, as_policy
from .rng import substreams

REPORT_CSV_COLUMNS = (
    "scenario_id",
    "T",
    "q_or_policy",
    "seller_rev_total",
    "seller_rev_per_round",
    "buyer_rev_total",
    "impressions",
)


@dataclass(frozen=True)
class RoundOutcome:
    t: int
    k: int
    reserve: float
    valuation: float
    accepted: bool
    seller_gain: float
    buyer_gain: float


def run_ppa_round(valuation: float, reserve: float, t: int = 0, k: int = 0) -> RoundOutcome:
    """Settle one posted-price round: the buyer accepts iff valuation > reserve."""
    if valuation < 0 or reserve < 0:
        raise DomainError("valuation and reserve must be non-negative")
    accepted = valuation > reserve
    return RoundOutcome(
        t=t,
        k=k,
        reserve=float(reserve),
        valuation=float(valuation),
        accepted=bool(accepted),
        seller_gain=float(reserve) if accepted else 0.0,
        buyer_gain=float(valuation - reserve) if accepted else 0.0,
    )


@dataclass(frozen=True)
class MarketConfig:
    T: int
    profile: ItemTypeProfile
    seed: int
    policy: ReservePolicy

    def __post_init__(self):
        if int(self.T) < 1:
            raise DomainError("T must be >= 1")
        if self.seed is None:
            raise DomainError("an explicit seed is required")
        object.__setattr__(self, "policy", as_policy(self.policy))


def draw_type_sequence(profile: ItemTypeProfile, T: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. item types (0-based indices) with probabilities ``profile.p``."""
    u = rng.random(T)
    cum = np.cumsum(profile.p)
    types = np.searchsorted(cum, u, side="right")
    # u < 1 always, but cum[-1] may round below 1
    np.minimum(types, profile.K - 1, out=types)
    return types.astype(np.int64)


def draw_valuations_by_type(dists, types: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Map uniforms to valuations through each round's own inverse cdf."""
    v = np.empty(u.shape, dtype=float)
    for k, dist in enumerate(dists):
        mask = types == k
        if mask.any():
            v[mask] = dist.quantile(u[mask])
    return v


@dataclass
class SimulationReport:
    """Aggregates of a repeated posted-price run, plus the per-round record."""

    T: int
    seed: int
    policy: ReservePolicy
    types: np.ndarray
    valuations: np.ndarray
    reserves: np.ndarray
    accepted: np.ndarray
    K: int = 1
    scenario_id: str = "rppa"
    seller_gain: np.ndarray = field(init=False, repr=False)
    buyer_gain: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.seller_gain = np.where(self.accepted, self.reserves, 0.0)
        self.buyer_gain = np.where(self.accepted, self.valuations - self.reserves, 0.0)

    @property
    def seller_revenue_total(self) -> float:
        return float(self.seller_gain.sum())

    @property
    def seller_revenue_per_round(self) -> float:
        return self.seller_revenue_total / self.T

    @property
    def buyer_revenue_total(self) -> float:
        return float(self.buyer_gain.sum())

    @property
    def impressions(self) -> int:
        return int(self.accepted.sum())

    def per_type(self) -> dict[str, list]:
        K = self.K
        rounds = np.bincount(self.types, minlength=K)
        wins = np.bincount(self.types, weights=self.accepted, minlength=K)
        seller = np.bincount(self.types, weights=self.seller_gain, minlength=K)
        buyer = np.bincount(self.types, weights=self.buyer_gain, minlength=K)
        return {
            "rounds": rounds.tolist(),
            "impressions": wins.astype(int).tolist(),
            "seller_rev_total": seller.tolist(),
            "buyer_rev_total": buyer.tolist(),
        }

    def rounds(self) -> Iterator[RoundOutcome]:
        for t in range(self.T):
            yield RoundOutcome(
                t=t,
                k=int(self.types[t]),
                reserve=float(self.reserves[t]),
                valuation=float(self.valuations[t]),
                accepted=bool(self.accepted[t]),
                seller_gain=float(self.seller_gain[t]),
                buyer_gain=float(self.buyer_gain[t]),
            )

    def summary(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "seed": int(self.seed),
            "T": int(self.T),
            "policy": self.policy.to_json(),
            "seller_rev_total": self.seller_revenue_total,
            "seller_rev_per_round": self.seller_revenue_per_round,
            "buyer_rev_total": self.buyer_revenue_total,
            "buyer_rev_per_round": self.buyer_revenue_total / self.T,
            "impressions": self.impressions,
            "per_type": self.per_type(),
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2)

    def csv_row(self) -> dict:
        pol = self.policy.to_json()
        return {
            "scenario_id": self.scenario_id,
            "T": self.T,
            "q_or_policy": pol if np.ndim(pol) == 0 else "[" + " ".join(f"{x:.6g}" for x in pol) + "]",
            "seller_rev_total": self.seller_revenue_total,
            "seller_rev_per_round": self.seller_revenue_per_round,
            "buyer_rev_total": self.buyer_revenue_total,
            "impressions": self.impressions,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# seed={int(self.seed)}\n")
        writer = csv.DictWriter(buf, fieldnames=REPORT_CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerow({k: format_value(v) for k, v in self.csv_row().items()})
        return buf.getvalue()


def format_value(x) -> str:
    """Six significant digits for floats, verbatim otherwise."""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.6g}"
    return str(x)


def _simulate(config: MarketConfig, scenario_id: str) -> SimulationReport:
    streams = substreams(config.seed)
    profile = config.profile
    qs = config.policy.for_types(profile.K)
    types = draw_type_sequence(profile, config.T, streams["types"])
    u = streams["valuations"].random(config.T)
    v = draw_valuations_by_type(profile.dists, types, u)
    reserves = qs[types]
    return SimulationReport(
        T=config.T,
        seed=config.seed,
        policy=config.policy,
        types=types,
        valuations=v,
        reserves=reserves,
        accepted=v > reserves,
        K=profile.K,
        scenario_id=scenario_id,
    )


def simulate_rppa_single_buyer(config: MarketConfig, scenario_id: str = "rppa-single") -> SimulationReport:
    """Homogeneous repeated PPA: a fresh valuation each round against one reserve."""
    if config.profile.K != 1 and not isinstance(config.policy, StaticReserve):
        raise DimensionError("a multi-type market needs a static reserve here; use simulate_rppa_hetero")
    return _simulate(config, scenario_id)


def simulate_rppa_hetero(config: MarketConfig, scenario_id: str = "rppa-hetero") -> SimulationReport:
    """Heterogeneous repeated PPA: draw the item type, then its valuation, quote q_k.

    A static reserve is broadcast to every type, which is how the static
    alternatives in a static-versus-dynamic comparison are expressed.
    """
    if isinstance(config.policy, PerTypeReserve):
        config.policy.for_types(config.profile.K)
    return _simulate(config, scenario_id)
