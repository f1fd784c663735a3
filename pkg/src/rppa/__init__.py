"""Repeated posted-price auctions: reserve prices, simulation and DSP scheduling."""

from .auction import MarketConfig, SimulationReport, run_ppa_round, simulate_rppa_hetero, simulate_rppa_single_buyer
from .distributions import Exponential, LogNormal, Point, Uniform, ValuationDistribution, from_dict, is_regular
from .errors import (
    DimensionError,
    DomainError,
    InfeasibleProgram,
    InstanceTooLarge,
    NoRootError,
    RPPAError,
    UnsupportedOperation,
)
from .optimizer import (
    DspMarket,
    ScheduleProgram,
    build_p1,
    build_p4,
    build_p6,
    enumerate_optimal,
    inner_max,
    lagrangian_value,
    saa_reduce,
    solve_dual,
    subgradient_step,
)
from .reserve import (
    ItemTypeProfile,
    PerTypeReserve,
    StaticReserve,
    buyer_expected_revenue,
    hetero_optimal_reserves,
    hetero_seller_revenue,
    optimal_reserve,
    seller_expected_revenue,
)
from .scheduling import Advertiser, Allocation, run_policy

__version__ = "0.1.0"

__all__ = [
    "Advertiser",
    "Allocation",
    "DimensionError",
    "DomainError",
    "DspMarket",
    "Exponential",
    "InfeasibleProgram",
    "InstanceTooLarge",
    "ItemTypeProfile",
    "LogNormal",
    "MarketConfig",
    "NoRootError",
    "PerTypeReserve",
    "Point",
    "RPPAError",
    "ScheduleProgram",
    "SimulationReport",
    "StaticReserve",
    "Uniform",
    "UnsupportedOperation",
    "ValuationDistribution",
    "build_p1",
    "build_p4",
    "build_p6",
    "buyer_expected_revenue",
    "enumerate_optimal",
    "from_dict",
    "hetero_optimal_reserves",
    "hetero_seller_revenue",
    "inner_max",
    "is_regular",
    "lagrangian_value",
    "optimal_reserve",
    "run_policy",
    "run_ppa_round",
    "saa_reduce",
    "seller_expected_revenue",
    "simulate_rppa_hetero",
    "simulate_rppa_single_buyer",
    "solve_dual",
    "subgradient_step",
]
