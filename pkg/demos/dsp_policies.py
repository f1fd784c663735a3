"""Five lognormal advertisers under each scheduling policy at q = 1."""
from rppa.distributions import LogNormal
from rppa.experiments import REFERENCE_BOOST, REFERENCE_DEMANDS
from rppa.scheduling import Advertiser, run_policy

advs = [Advertiser(LogNormal(0.0, 1.0), demand=d) for d in REFERENCE_DEMANDS]
print("demands:", list(REFERENCE_DEMANDS))
for policy in ("hindsight-max", "round-robin", "uniform-random", "greedy-demand", "filtered-demand", "lagrangian-boost"):
    rep = run_policy(policy, advs, 1.0, 10_000, seed=1, boost=REFERENCE_BOOST)
    imps = rep.allocation.impressions().tolist()
    print(f"{policy:>17}: seller/round {rep.seller_revenue_per_round:.4f} impressions {imps} met {rep.demand_met().tolist()}")
