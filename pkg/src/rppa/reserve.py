"""Optimal reserve prices and expected revenues for repeated posted-price auctions.

A posted-price round with reserve ``q`` sells iff the buyer's valuation is
strictly above ``q``.  Per round the seller expects ``q * (1 - F(q))`` and the
buyer expects ``E[(v - q) 1{v > q}]``; over ``T`` independent rounds both are
multiplied by ``T``.  With several item types the per-type terms are mixed by
the type probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import integrate

from .distributions import Exponential, LogNormal, Point, Uniform, ValuationDistribution
from .errors import DimensionError, DomainError, NoRootError, UnsupportedOperation

DEFAULT_TOL = 1e-9
QUAD_ABS_TOL = 1e-8
MAX_DOUBLINGS = 64


@dataclass(frozen=True)
class StaticReserve:
    """One reserve price for every round, whatever the item type."""

    q: float

    def __post_init__(self):
        if not self.q >= 0:
            raise DomainError(f"reserve must be >= 0, got {self.q}")

    def for_types(self, K: int) -> np.ndarray:
        return np.full(K, float(self.q))

    def to_json(self):
        return float(self.q)


@dataclass(frozen=True)
class PerTypeReserve:
    """Reserve ``q[k]`` quoted whenever an item of type ``k`` is auctioned."""

    q: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(float(x) for x in self.q))
        if not self.q or any(not x >= 0 for x in self.q):
            raise DomainError(f"per-type reserves must be a non-empty vector of values >= 0, got {self.q}")

    def for_types(self, K: int) -> np.ndarray:
        if len(self.q) != K:
            raise DimensionError(f"per-type reserve has {len(self.q)} entries but the market has {K} types")
        return np.array(self.q)

    def to_json(self):
        return list(self.q)


ReservePolicy = Union[StaticReserve, PerTypeReserve]


def as_policy(q) -> ReservePolicy:
    """Coerce a scalar, a sequence or an existing policy into a ReservePolicy."""
    if isinstance(q, (StaticReserve, PerTypeReserve)):
        return q
    if np.ndim(q) == 0:
        return StaticReserve(float(q))
    return PerTypeReserve(tuple(q))


@dataclass(frozen=True)
class ItemTypeProfile:
    """Item-type probabilities ``p`` and the buyer's valuation law per type."""

    p: tuple[float, ...]
    dists: tuple[ValuationDistribution, ...]

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(x) for x in self.p))
        object.__setattr__(self, "dists", tuple(self.dists))
        if len(self.p) < 1:
            raise DomainError("a profile needs at least one item type")
        if len(self.p) != len(self.dists):
            raise DimensionError(f"{len(self.p)} probabilities but {len(self.dists)} distributions")
        if any(x < 0 for x in self.p) or abs(math.fsum(self.p) - 1.0) > 1e-12:
            raise DomainError(f"type probabilities must be >= 0 and sum to 1, got {self.p}")

    @classmethod
    def homogeneous(cls, dist: ValuationDistribution) -> "ItemTypeProfile":
        return cls((1.0,), (dist,))

    @property
    def K(self) -> int:
        return len(self.p)


# ---------------------------------------------------------------------------
# Homogeneous case
# ---------------------------------------------------------------------------


def _revenue_slope(dist: ValuationDistribution, q: float) -> float:
    """q f(q) - (1 - F(q)): the virtual value times f(q), so it shares its sign."""
    return q * dist.pdf(q) - dist.sf(q)


def optimal_reserve(dist: ValuationDistribution, tol: float = DEFAULT_TOL) -> float:
    """Reserve price zeroing the virtual value, by bracketed bisection.

    The bracket's upper end starts at the median and doubles (capped at the
    support's upper end) until the virtual value turns positive.  Bisection
    runs on ``q f(q) - (1 - F(q))``, which has the sign of the virtual value
    but no division, so it is safe where the density underflows.  If the
    virtual value is already non-negative at the lower end of the support the
    corner ``v_lo`` is returned.  For irregular distributions this is the
    first sign change found, not necessarily the revenue maximiser.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    if not dist.continuous:
        raise UnsupportedOperation(f"{dist.kind} has no density; the reserve equation is undefined")

    v_lo, v_hi = dist.support
    if _revenue_slope(dist, v_lo) >= 0.0:
        return float(v_lo)

    lo = float(v_lo)
    hi = min(float(dist.quantile(0.5)), v_hi)
    for _ in range(MAX_DOUBLINGS):
        if _revenue_slope(dist, hi) > 0.0:
            break
        lo = hi
        hi = min(2.0 * hi, v_hi)
    else:
        raise NoRootError(f"virtual value of {dist!r} has no sign change after {MAX_DOUBLINGS} doublings")

    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        s = _revenue_slope(dist, mid)
        if s > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-3 * tol and abs(dist.virtual_value(mid)) <= tol:
            break
    # both ends bracket the root to within a few ulps; return the smaller residual
    return min((lo, hi), key=lambda x: abs(_revenue_slope(dist, x)))


def seller_expected_revenue(dist: ValuationDistribution, q: float, T: int = 1) -> float:
    """T q Pr(v > q)."""
    _check_q_T(q, T)
    return T * q * dist.sf(q)


def _lognormal_surplus(dist: LogNormal, q: float) -> float:
    # Substituting v = exp(mu + sigma z) turns the integrand into a smooth
    # Gaussian bump, which QUADPACK handles on the infinite range.
    z_q = (math.log(q) - dist.mu) / dist.sigma

    def integrand(z):
        h = -0.5 * z * z
        return math.exp(dist.mu + dist.sigma * z + h) - q * math.exp(h)

    val, _ = integrate.quad(integrand, z_q, math.inf, epsabs=QUAD_ABS_TOL * math.sqrt(2 * math.pi), epsrel=1e-12, limit=200)
    return val / math.sqrt(2.0 * math.pi)


def expected_buyer_surplus(dist: ValuationDistribution, q: float) -> float:
    """E[(v - q) 1{v > q}] for a single round."""
    if isinstance(dist, Point):
        return max(dist.v - q, 0.0)
    if q <= dist.support[0]:
        return dist.mean - q
    if isinstance(dist, Uniform):
        if q >= dist.hi:
            return 0.0
        return (dist.hi - q) ** 2 / (2.0 * (dist.hi - dist.lo))
    if isinstance(dist, Exponential):
        return math.exp(-dist.rate * q) / dist.rate
    if isinstance(dist, LogNormal):
        return _lognormal_surplus(dist, q)
    raise UnsupportedOperation(f"no surplus rule for {type(dist).__name__}")


def buyer_expected_revenue(dist: ValuationDistribution, q: float, T: int = 1) -> float:
    """T E[(v - q) 1{v > q}]; closed form except for the lognormal (quadrature)."""
    _check_q_T(q, T)
    return T * expected_buyer_surplus(dist, q)


def win_probability(dist: ValuationDistribution, q: float, N: int = 1) -> float:
    """Probability that at least one of N i.i.d. buyers values the item above q."""
    if N < 1:
        raise DomainError("N must be >= 1")
    return 1.0 - dist.cdf(q) ** N


# ---------------------------------------------------------------------------
# Heterogeneous case
# ---------------------------------------------------------------------------


def hetero_optimal_reserves(profile: ItemTypeProfile, tol: float = DEFAULT_TOL) -> PerTypeReserve:
    qs = []
    for k, dist in enumerate(profile.dists):
        try:
            qs.append(optimal_reserve(dist, tol))
        except (NoRootError, UnsupportedOperation) as exc:
            raise type(exc)(f"item type {k}: {exc}") from exc
    return PerTypeReserve(tuple(qs))


def hetero_seller_revenue(profile: ItemTypeProfile, policy, T: int = 1) -> float:
    """T sum_k p_k q_k (1 - F_k(q_k)); a static reserve is broadcast to all types."""
    qs = as_policy(policy).for_types(profile.K)
    _check_q_T(0.0, T)
    return T * math.fsum(p * q * d.sf(q) for p, q, d in zip(profile.p, qs, profile.dists))


def hetero_buyer_revenue(profile: ItemTypeProfile, policy, T: int = 1) -> float:
    qs = as_policy(policy).for_types(profile.K)
    _check_q_T(0.0, T)
    return T * math.fsum(p * expected_buyer_surplus(d, q) for p, q, d in zip(profile.p, qs, profile.dists))


def type_win_probabilities(profile: ItemTypeProfile, policy, N: int = 1) -> np.ndarray:
    """Per-type 1 - F_k(q_k)^N."""
    qs = as_policy(policy).for_types(profile.K)
    return np.array([win_probability(d, q, N) for d, q in zip(profile.dists, qs)])


def expected_impressions_per_advertiser(market, policy, T: int, N: int) -> float:
    """Expected wins per advertiser when N i.i.d. advertisers are served by highest valuation.

    ``market`` is either a single distribution or an :class:`ItemTypeProfile`;
    ``policy`` a reserve price, vector of per-type reserves, or ReservePolicy.
    """
    profile = market if isinstance(market, ItemTypeProfile) else ItemTypeProfile.homogeneous(market)
    win = type_win_probabilities(profile, policy, N)
    return T * float(np.dot(profile.p, win)) / N


def best_grid_reserve(dist: ValuationDistribution, prices: Sequence[float]) -> float:
    """Grid point maximising q (1 - F(q)); defined for point masses too."""
    prices = np.asarray(prices, dtype=float)
    rev = prices * np.asarray(dist.sf(prices))
    return float(prices[int(np.argmax(rev))])


def best_static_reserve(profile: ItemTypeProfile, prices: Sequence[float]) -> tuple[float, float]:
    """(q, revenue per round) of the best single reserve on a price grid."""
    prices = np.asarray(prices, dtype=float)
    rev = sum(p * prices * np.asarray(d.sf(prices)) for p, d in zip(profile.p, profile.dists))
    i = int(np.argmax(rev))
    return float(prices[i]), float(rev[i])


def _check_q_T(q: float, T: int) -> None:
    if T < 1:
        raise DomainError("T must be >= 1")
    if not q >= 0:
        raise DomainError(f"reserve must be >= 0, got {q}")
