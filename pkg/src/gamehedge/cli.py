"""Batch front-end: validate, price, export policies, cross-check, simulate.

Exit codes: 0 success, 1 domain validation failure, 2 configuration parse
failure, 3 combinatorial guard exceeded. All numbers print with 12
significant digits. The only environment knob is GAMEHEDGE_THREADS, which
caps the kernel thread count.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
import warnings

import numpy as np

from . import __version__
from .claims import ClaimError, validate_claim
from .config import ConfigError, Problem, load_config
from .dynkin import solve_dynkin
from .market import check_no_arbitrage
from .oracle import GuardError, oracle_dynkin, oracle_risk
from .shortfall import (WealthGrid, export_csv, optimal_stopping_rule,
                        policy_wealth, price_sweep, solve)
from .simulate import replay_paths, sample_paths

# numba falls back to a working threading layer; the notice is just noise here
warnings.filterwarnings("ignore", message="The TBB threading layer requires")

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_PARSE = 2
EXIT_GUARD = 3


def _fmt(v: float) -> str:
    return f"{float(v):.12g}"


def _load(path: str) -> Problem:
    try:
        return load_config(path)
    except json.JSONDecodeError as e:
        print(f"error: {path}: invalid JSON at line {e.lineno}, column {e.colno}: "
              f"{e.msg}", file=sys.stderr)
        raise SystemExit(EXIT_PARSE)
    except ConfigError as e:
        print(f"error: {path}: {e}", file=sys.stderr)
        raise SystemExit(EXIT_PARSE)
    except OSError as e:
        print(f"error: cannot read {path}: {e}", file=sys.stderr)
        raise SystemExit(EXIT_PARSE)
    except (ClaimError, ValueError) as e:
        # well-formed file, invalid model values
        print(f"error: {path}: {e}", file=sys.stderr)
        raise SystemExit(EXIT_DOMAIN)


def _apply_solver_flags(problem: Problem, args) -> Problem:
    if getattr(args, "wealth_points", None) is not None:
        problem.wealth_points = args.wealth_points
    if getattr(args, "scan_points", None) is not None:
        problem.scan_points = args.scan_points
    if getattr(args, "refine_rounds", None) is not None:
        problem.refine_rounds = args.refine_rounds
    if getattr(args, "y_max", None) is not None:
        problem.y_max = args.y_max
    return problem


def _grid(problem: Problem, x: float) -> WealthGrid:
    return WealthGrid.for_problem(problem.claim, x, problem.wealth_points,
                                  problem.y_max)


def _solve(problem: Problem, x: float):
    return solve(problem.tree, problem.claim, problem.loss_fn, x,
                 grid=_grid(problem, x), scan_points=problem.scan_points,
                 refine_rounds=problem.refine_rounds)


def cmd_check(args) -> int:
    problem = _load(args.config)
    failures = 0
    arb = check_no_arbitrage(problem.tree)
    if arb:
        failures += len(arb)
        for node, sb in arb:
            print(f"arbitrage: time {node.time} node {node.index} "
                  f"support [{_fmt(sb.a)}, {_fmt(sb.b)}]")
    bad = validate_claim(problem.claim, problem.tree)
    for t, i, u, w in bad:
        failures += 1
        print(f"claim: time {t} node {i} violates U >= W >= 0 "
              f"(U={_fmt(u)}, W={_fmt(w)})")
    if failures:
        print(f"FAIL: {failures} violation(s)")
        return EXIT_DOMAIN
    print(f"OK: horizon {problem.tree.horizon}, "
          f"{sum(len(lv) for lv in problem.tree.levels)} nodes, no arbitrage, "
          f"claim valid")
    return EXIT_OK


def _parse_sweep(spec: str) -> np.ndarray:
    try:
        lo, hi, steps = spec.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError:
        print(f"error: sweep must look like LO:HI:STEPS, got {spec!r}",
              file=sys.stderr)
        raise SystemExit(EXIT_PARSE)
    if steps < 1 or lo <= 0.0 or hi < lo:
        print(f"error: bad sweep {spec!r}: need 0 < lo <= hi and steps >= 1",
              file=sys.stderr)
        raise SystemExit(EXIT_PARSE)
    return np.linspace(lo, hi, steps)


def cmd_price(args) -> int:
    problem = _apply_solver_flags(_load(args.config), args)
    if args.capital is not None:
        if args.capital <= 0.0:
            print("error: capital must be positive", file=sys.stderr)
            return EXIT_PARSE
        capitals = np.array([args.capital])
    else:
        capitals = _parse_sweep(args.capital_sweep)
    try:
        grid = _grid(problem, float(capitals.max()))
        risks = price_sweep(problem.tree, problem.claim, problem.loss_fn, capitals,
                            grid=grid, scan_points=problem.scan_points,
                            refine_rounds=problem.refine_rounds)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    print("x\tJ0")
    for x, r in zip(capitals, risks):
        print(f"{_fmt(x)}\t{_fmt(r)}")
    return EXIT_OK


def cmd_solve(args) -> int:
    problem = _apply_solver_flags(_load(args.config), args)
    try:
        result = _solve(problem, args.capital)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    rows = export_csv(result, args.output)
    base, ext = os.path.splitext(args.output)
    sigma_path = f"{base}.sigma{ext or '.csv'}"
    sigma = optimal_stopping_rule(problem.tree, problem.claim, problem.loss_fn,
                                  result.policy, args.capital)
    _write_sigma_csv(sigma, sigma_path)
    print(f"J0\t{_fmt(result.risk)}")
    print(f"lambda0\t{_fmt(result.root_position)}")
    print(f"values\t{args.output}\t{rows} rows")
    print(f"sigma\t{sigma_path}")
    return EXIT_OK


def _write_sigma_csv(rule, path: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "node", "stop"])
            for n, stops in enumerate(rule.stops):
                for i, flag in enumerate(stops):
                    writer.writerow([n, i, int(flag)])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cmd_oracle(args) -> int:
    problem = _apply_solver_flags(_load(args.config), args)
    try:
        result = _solve(problem, args.capital)
        risk = oracle_risk(problem.tree, problem.claim, problem.loss_fn,
                           args.capital, z_grid_size=args.z_grid)
        wealth = policy_wealth(result.policy, problem.tree, args.capital)
        dyn = solve_dynkin(problem.tree, problem.claim, problem.loss_fn, wealth)
        dyn_oracle = oracle_dynkin(problem.tree, problem.claim, problem.loss_fn,
                                   wealth, guard=args.guard)
    except GuardError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_GUARD
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    print("quantity\tdp\toracle\tgap")
    print(f"dynkin_psi0\t{_fmt(dyn.risk)}\t{_fmt(dyn_oracle)}\t"
          f"{_fmt(abs(dyn.risk - dyn_oracle))}")
    gap = abs(result.risk - risk.value)
    print(f"shortfall_j0\t{_fmt(result.risk)}\t{_fmt(risk.value)}\t{_fmt(gap)}")
    print(f"z_gap_bound\t{_fmt(risk.value_bound)}")
    if abs(dyn.risk - dyn_oracle) > 1e-12 or gap > args.tolerance:
        print(f"FAIL: gap {_fmt(gap)} exceeds tolerance {_fmt(args.tolerance)}")
        return EXIT_DOMAIN
    print("OK")
    return EXIT_OK


def cmd_simulate(args) -> int:
    problem = _apply_solver_flags(_load(args.config), args)
    try:
        result = _solve(problem, args.capital)
        wealth = policy_wealth(result.policy, problem.tree, args.capital)
        dyn = solve_dynkin(problem.tree, problem.claim, problem.loss_fn, wealth)
        sample = sample_paths(problem.tree, args.paths, args.seed)
        batch = replay_paths(problem.tree, problem.claim, problem.loss_fn,
                             result.policy, dyn.sigma_star, dyn.tau_star,
                             sample, args.capital)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    losses = batch.losses
    mean = float(losses.mean())
    stderr = float(losses.std(ddof=1) / np.sqrt(len(losses))) if len(losses) > 1 else 0.0
    if args.output:
        _write_paths_csv(batch, mean, stderr, args.output)
        print(f"paths\t{args.output}")
    print(f"paths_n\t{args.paths}")
    print(f"seed\t{args.seed}")
    print(f"mc_mean\t{_fmt(mean)}")
    print(f"mc_stderr\t{_fmt(stderr)}")
    print(f"j0\t{_fmt(result.risk)}")
    print(f"min_wealth\t{_fmt(batch.min_wealth)}")
    return EXIT_OK


def _write_paths_csv(batch, mean: float, stderr: float, path: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path", "stop_time", "loss"])
            for i, (t, l) in enumerate(zip(batch.stop_times, batch.losses)):
                writer.writerow([i, int(t), f"{l:.12g}"])
            writer.writerow(["summary", "", f"{mean:.12g}"])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gamehedge",
        description="Shortfall-risk hedging of game options on finite scenario trees",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    solver_flags = argparse.ArgumentParser(add_help=False)
    solver_flags.add_argument("--wealth-points", type=int, metavar="M",
                              help="override solver.M (wealth grid intervals)")
    solver_flags.add_argument("--scan-points", type=int, metavar="K",
                              help="override solver.K (position scan intervals)")
    solver_flags.add_argument("--refine-rounds", type=int, metavar="R",
                              help="override solver.R (refinement rounds)")
    solver_flags.add_argument("--y-max", type=float,
                              help="override the wealth grid span")

    p = sub.add_parser("check", help="validate market and claim")
    p.add_argument("config")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("price", parents=[solver_flags],
                       help="minimal shortfall risk at one or many capitals")
    p.add_argument("config")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--capital", type=float)
    group.add_argument("--capital-sweep", metavar="LO:HI:STEPS")
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("solve", parents=[solver_flags],
                       help="export value field, policy and stopping rule")
    p.add_argument("config")
    p.add_argument("--capital", type=float, required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("oracle", parents=[solver_flags],
                       help="cross-check against the exhaustive oracle")
    p.add_argument("config")
    p.add_argument("--capital", type=float, required=True)
    p.add_argument("--z-grid", type=int, default=48)
    p.add_argument("--guard", type=int, default=10 ** 6)
    p.add_argument("--tolerance", type=float, default=1e-2)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("simulate", parents=[solver_flags],
                       help="Monte Carlo replay of the optimal hedge")
    p.add_argument("config")
    p.add_argument("--capital", type=float, required=True)
    p.add_argument("--paths", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    threads = os.environ.get("GAMEHEDGE_THREADS")
    if threads:
        import numba
        numba.set_num_threads(max(1, int(threads)))
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "capital", None) is not None and args.capital <= 0.0 \
                and args.command in ("solve", "oracle", "simulate"):
            print("error: capital must be positive", file=sys.stderr)
            return EXIT_PARSE
        return args.func(args)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
