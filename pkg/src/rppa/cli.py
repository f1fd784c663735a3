"""Command-line front end: ``rppa {reserve,simulate,schedule,solve,experiments}``.

Exit status is 0 on success, 1 when a computation rejects its input (domain
error, infeasible or oversized program) and 2 on usage errors such as a
missing config file, unknown config keys or a stochastic run without a seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .auction import MarketConfig, format_value, simulate_rppa_hetero, simulate_rppa_single_buyer
from .distributions import from_dict, is_regular
from .errors import RPPAError, UnsupportedOperation
from .experiments import EXPERIMENTS, run_experiment
from .optimizer import DspMarket, ScheduleProgram, enumerate_optimal, saa_reduce, solve_dual
from .reserve import (
    ItemTypeProfile,
    as_policy,
    buyer_expected_revenue,
    hetero_buyer_revenue,
    hetero_optimal_reserves,
    hetero_seller_revenue,
    optimal_reserve,
    seller_expected_revenue,
)
from .rng import make_rng
from .scheduling import POLICIES, Advertiser, run_policy


class UsageError(Exception):
    """Bad invocation; the message is a one-line remedy."""


# ---------------------------------------------------------------------------
# config helpers
# ---------------------------------------------------------------------------


def _load_json(path: str | None, what: str) -> dict[str, Any]:
    if path is None:
        raise UsageError(f"--config is required: pass a JSON {what} file")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file {path!r} not found: pass an existing JSON {what} file")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    if not isinstance(data, dict):
        raise UsageError(f"{path}: the top level must be a JSON object")
    return data


def _check_keys(data: dict, allowed: set[str], where: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise UsageError(f"{where}: unknown keys {sorted(unknown)}; allowed keys are {sorted(allowed)}")


def _parse(fn, *args, where: str):
    """Run a config parser, turning its validation errors into usage errors."""
    try:
        return fn(*args)
    except (RPPAError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{where}: {exc}") from exc


def _profile(data: dict[str, Any], where: str) -> ItemTypeProfile:
    if ("dist" in data) == ("profile" in data):
        raise UsageError(f'{where}: give exactly one of "dist" or "profile"')
    if "dist" in data:
        return ItemTypeProfile.homogeneous(_parse(from_dict, data["dist"], where=where))
    prof = data["profile"]
    if not isinstance(prof, dict):
        raise UsageError(f'{where}: "profile" must be an object with "p" and "dists"')
    _check_keys(prof, {"p", "dists"}, f"{where} profile")
    dists = [_parse(from_dict, d, where=where) for d in prof.get("dists", [])]
    return _parse(ItemTypeProfile, tuple(prof.get("p", ())), tuple(dists), where=where)


def _seed(args, data: dict[str, Any]) -> int:
    seed = args.seed if args.seed is not None else data.get("seed")
    if seed is None:
        raise UsageError("this run is stochastic: pass --seed N (or a \"seed\" key in the config)")
    return int(seed)


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")


def _csv(rows: list[dict[str, Any]], columns, header: str | None = None) -> str:
    buf = io.StringIO()
    if header:
        buf.write(f"# {header}\n")
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: "" if r.get(k) is None else format_value(r[k]) for k in columns})
    return buf.getvalue()


def _dumps(obj) -> str:
    def clean(x):
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        if isinstance(x, np.generic):
            return x.item()
        if isinstance(x, float) and not math.isfinite(x):
            return None
        return x

    return json.dumps(clean(obj), sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_reserve(args) -> int:
    if (args.dist is None) == (args.config is None):
        raise UsageError("pass exactly one of --dist JSON or --config FILE")
    if args.dist is not None:
        try:
            data = {"dist": json.loads(args.dist)}
        except json.JSONDecodeError as exc:
            raise UsageError(f"--dist is not valid JSON ({exc.msg})") from exc
    else:
        data = _load_json(args.config, "distribution")
        _check_keys(data, {"dist", "profile"}, args.config)
    profile = _profile(data, "reserve config")
    T = args.T
    if profile.K == 1:
        dist = profile.dists[0]
        q = optimal_reserve(dist, args.tol)
        try:
            regular = is_regular(dist)
        except UnsupportedOperation:
            regular = None
        result = {
            "dist": dist.to_dict(),
            "q_star": q,
            "regular": regular,
            "T": T,
            "seller_rev_total": seller_expected_revenue(dist, q, T),
            "seller_rev_per_round": seller_expected_revenue(dist, q),
            "buyer_rev_total": buyer_expected_revenue(dist, q, T),
            "buyer_rev_per_round": buyer_expected_revenue(dist, q),
        }
    else:
        pol = hetero_optimal_reserves(profile, args.tol)
        result = {
            "profile": {"p": list(profile.p), "dists": [d.to_dict() for d in profile.dists]},
            "q_star": list(pol.q),
            "T": T,
            "seller_rev_total": hetero_seller_revenue(profile, pol, T),
            "seller_rev_per_round": hetero_seller_revenue(profile, pol),
            "buyer_rev_total": hetero_buyer_revenue(profile, pol, T),
            "buyer_rev_per_round": hetero_buyer_revenue(profile, pol),
        }
    if args.format == "json":
        _emit(_dumps(result), args.out)
    else:
        row = dict(result)
        row["q_star"] = result["q_star"] if profile.K == 1 else "[" + " ".join(f"{x:.6g}" for x in result["q_star"]) + "]"
        cols = ("q_star", "T", "seller_rev_total", "seller_rev_per_round", "buyer_rev_total", "buyer_rev_per_round")
        _emit(_csv([row], cols), args.out)
    return 0


SIMULATE_KEYS = {"T", "seed", "dist", "profile", "policy", "scenario_id"}


def cmd_simulate(args) -> int:
    data = _load_json(args.config, "market")
    _check_keys(data, SIMULATE_KEYS, args.config)
    if "T" not in data:
        raise UsageError(f'{args.config}: "T" (number of rounds) is required')
    profile = _profile(data, args.config)
    seed = _seed(args, data)
    raw = data.get("policy", "optimal")
    if raw == "optimal":
        policy = hetero_optimal_reserves(profile)
        if profile.K == 1:
            policy = as_policy(policy.q[0])
    else:
        policy = _parse(as_policy, raw, where=args.config)
    config = _parse(MarketConfig, int(data["T"]), profile, seed, policy, where=args.config)
    scenario = data.get("scenario_id", "rppa")
    if profile.K == 1:
        report = simulate_rppa_single_buyer(config, scenario)
    else:
        report = simulate_rppa_hetero(config, scenario)
    _emit(report.to_json() if args.format == "json" else report.to_csv(), args.out)
    return 0


SCHEDULE_KEYS = {"T", "seed", "q", "advertisers", "type_probs", "boost", "policy", "enforce_budgets"}


def cmd_schedule(args) -> int:
    data = _load_json(args.config, "DSP market")
    _check_keys(data, SCHEDULE_KEYS, args.config)
    for key in ("T", "q", "advertisers"):
        if key not in data:
            raise UsageError(f'{args.config}: "{key}" is required')
    advs = [_parse(Advertiser.from_dict, a, where=f"{args.config} advertiser {i + 1}") for i, a in enumerate(data["advertisers"])]
    policy = args.policy or data.get("policy")
    if policy is None:
        raise UsageError(f"pass --policy, one of: {', '.join(POLICIES)}")
    if policy not in POLICIES:
        raise UsageError(f"unknown policy {policy!r}; choose from {', '.join(POLICIES)}")
    seed = _seed(args, data)
    boost = args.boost if args.boost is not None else data.get("boost")
    report = run_policy(
        policy,
        advs,
        data["q"],
        int(data["T"]),
        seed,
        boost=boost,
        type_probs=data.get("type_probs"),
        enforce_budgets=bool(data.get("enforce_budgets", True)),
    )
    _emit(report.to_json() if args.format == "json" else report.to_csv(), args.out)
    return 0


SAA_KEYS = {"program", "T", "q", "advertisers", "type_probs", "seed"}


def _load_program(args) -> ScheduleProgram:
    data = _load_json(args.instance, "program")
    if "program" in data and isinstance(data["program"], str):
        # a market description to be sampled into a deterministic program
        _check_keys(data, SAA_KEYS, args.instance)
        advs = [_parse(Advertiser.from_dict, a, where=args.instance) for a in data.get("advertisers", [])]
        market = _parse(DspMarket, advs, int(data.get("T", 0)), data.get("q", 0.0), tuple(data.get("type_probs", (1.0,))), where=args.instance)
        seed = _seed(args, data)
        return saa_reduce(market, data["program"], make_rng(seed))
    return _parse(ScheduleProgram.from_dict, data, where=args.instance)


def cmd_solve(args) -> int:
    program = _load_program(args)
    if args.method == "enumerate":
        res = enumerate_optimal(program)
        out = {
            "method": "enumerate",
            "feasible": res.feasible,
            "optimal_value": res.value,
            "allocation": None if res.winners is None else res.winners.tolist(),
            "evaluated": res.evaluated,
        }
    else:
        if args.iters < 1:
            raise UsageError("--iters must be >= 1")
        res = solve_dual(program, max_iters=args.iters, s0=args.s0)
        out = {"method": "dual", **res.to_dict()}
    _emit(_dumps(out), args.out)
    if args.method == "enumerate" and not out["feasible"]:
        print("rppa: infeasible program: no allocation meets every constraint", file=sys.stderr)
        return 1
    return 0


def cmd_experiments(args) -> int:
    if args.action == "list":
        rows = [{"id": k, "replications": s.replications, "description": s.description} for k, s in EXPERIMENTS.items()]
        _emit(_csv(rows, ("id", "replications", "description")), args.out)
        return 0
    if args.id is None:
        raise UsageError(f"pass --id, one of: {', '.join(EXPERIMENTS)}")
    if args.id not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {args.id!r}; choose from {', '.join(EXPERIMENTS)}")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    report = run_experiment(args.id, seed=args.seed, replications=args.replications, jobs=args.jobs)
    _emit(report.to_json() if args.format == "json" else report.to_csv(), args.out)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rppa", description="Repeated posted-price auctions and DSP scheduling.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fmt_default="csv", seed=True):
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=fmt_default)
        if seed:
            p.add_argument("--seed", type=int, help="master seed (required for stochastic runs)")

    p = sub.add_parser("reserve", help="optimal reserve and expected revenues")
    p.add_argument("--dist", help='distribution JSON, e.g. \'{"kind":"uniform","params":{"lo":0,"hi":1}}\'')
    p.add_argument("--config", help='JSON file with "dist" or "profile"')
    p.add_argument("--T", type=int, default=1, help="number of rounds for the totals")
    p.add_argument("--tol", type=float, default=1e-9)
    common(p, "json", seed=False)
    p.set_defaults(func=cmd_reserve)

    p = sub.add_parser("simulate", help="seeded repeated posted-price simulation")
    p.add_argument("--config", help="market JSON file")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("schedule", help="run a DSP scheduling policy")
    p.add_argument("--config", help="DSP market JSON file")
    p.add_argument("--policy", choices=POLICIES)
    p.add_argument("--boost", type=float, nargs="+", help="per-advertiser boost for lagrangian-boost")
    common(p)
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("solve", help="solve a scheduling program")
    p.add_argument("--instance", help="program JSON file (or a market to sample)")
    p.add_argument("--config", dest="instance", help=argparse.SUPPRESS)
    p.add_argument("--method", choices=("enumerate", "dual"), default="dual")
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--s0", type=float, default=None, help="initial step size (default: scale-aware)")
    p.add_argument("--seed", type=int, help="seed for sampling a market into a program")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("experiments", help="table reproductions and test batteries")
    p.add_argument("action", choices=("run", "list"))
    p.add_argument("--id", help="experiment id (see 'experiments list')")
    p.add_argument("--replications", type=int)
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    common(p)
    p.set_defaults(func=cmd_experiments)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rppa {args.command}: {exc}", file=sys.stderr)
        return 2
    except RPPAError as exc:
        print(f"rppa {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
