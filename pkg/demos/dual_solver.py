"""Lagrangian dual against exhaustive search on a small demand-constrained program."""
from rppa.optimizer import build_p1, enumerate_optimal, solve_dual
from rppa.rng import make_rng

values = make_rng(4).lognormal(size=(3, 8))
program = build_p1(values, 0.5, demand=[1, 2, 4])
oracle = enumerate_optimal(program)
dual = solve_dual(program, max_iters=300)
print("oracle optimum :", round(oracle.value, 6), oracle.winners.tolist())
print("dual bound     :", round(dual.dual_bound, 6))
print("repaired primal:", round(dual.primal_value, 6), dual.winners.tolist())
print("multipliers    :", dual.lam.round(4).tolist(), "after", dual.iterations, "iterations")
