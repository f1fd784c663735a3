"""Optimal reserves and revenues for lognormal buyers beside the printed table values."""
from rppa.experiments import PRINTED_LOGNORMAL
from rppa.reserve import buyer_expected_revenue, optimal_reserve, seller_expected_revenue
from rppa.distributions import LogNormal

print(f"{'mu':>5} {'sigma':>5} | {'q*':>8} {'printed':>8} | {'seller':>8} {'printed':>8} | {'buyer':>8} {'printed':>8}")
for (_, mu, sigma), (pq, ps, pb) in PRINTED_LOGNORMAL.items():
    d = LogNormal(mu, sigma)
    q = optimal_reserve(d)
    print(f"{mu:5g} {sigma:5g} | {q:8.4f} {pq:8.4g} | {seller_expected_revenue(d, q):8.4f} {ps:8.4g} | {buyer_expected_revenue(d, q):8.4f} {pb:8.4g}")
