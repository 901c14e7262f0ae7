"""Batch front-end.

Exit codes: 0 success, 2 empty martingale set (convex order or means
fail), 3 solver failure, 4 malformed input.  Reports are written atomically,
so a failing job never leaves a partial file behind.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import serialization
from .errors import DomainError, InfeasibleModel, InputError, OutOfRange, PlateauAtLevel, SolverFailure
from .lp_core import FEAS_TOL, build_primal
from .marginals import MarketSpec, calibrate_from_calls, check_convex_order, fill_prices, load_call_curves
from .payoffs import PathSpace, PayoffSpec
from .quantile import EXHAUSTIVE_CAP, QuantileProblem, quantile_price, verify_quantile_hedge
from .shortfall import ScenarioSet, UtilitySpec, default_scenarios, shortfall_price, verify_shortfall_feasibility
from .superhedge import superhedge_price

EXIT_OK, EXIT_INFEASIBLE, EXIT_SOLVER, EXIT_INPUT = 0, 2, 3, 4

log = logging.getLogger("robusthedge")


def _market(args) -> MarketSpec:
    return MarketSpec.from_dict(serialization.load_json(args.market))


def _payoff(args) -> PayoffSpec:
    return PayoffSpec.from_dict(serialization.load_json(args.payoff))


def _scenarios(args, space: PathSpace) -> ScenarioSet | None:
    if not args.scenarios:
        return None
    return ScenarioSet.from_dict(serialization.load_json(args.scenarios), space)


def cmd_calibrate(args) -> tuple[dict, int]:
    curves = load_call_curves(args.calls)
    marginals, filled = [], []
    for curve in curves:
        m = calibrate_from_calls(curve, curve.strikes, tol=args.tol)
        _, mask = fill_prices(curve, curve.strikes)
        filled.append([float(k) for k in curve.strikes[mask]])
        marginals.append(m)
    spot = args.spot if args.spot is not None else marginals[0].mean
    spec = MarketSpec(spot, tuple(marginals))
    order = check_convex_order(spec, tol=args.tol)
    out = spec.to_dict()
    out["interpolated_strikes"] = filled
    out["convex_order"] = order.to_dict()
    return out, EXIT_OK


def cmd_check_order(args) -> tuple[dict, int]:
    report = check_convex_order(_market(args), tol=args.tol)
    return report.to_dict(), EXIT_OK if report.passed else EXIT_INFEASIBLE


def cmd_price_super(args) -> tuple[dict, int]:
    spec, phi = _market(args), _payoff(args)
    report = superhedge_price(spec, phi, feas_tol=args.tol)
    if args.dump_lp:
        with open(args.dump_lp, "w") as fh:
            fh.write(build_primal(spec, phi).to_lp_format())
    return report.to_dict(), EXIT_OK


def cmd_price_shortfall(args) -> tuple[dict, int]:
    spec, phi = _market(args), _payoff(args)
    if not args.utility:
        raise InputError("--utility is required")
    u = UtilitySpec.from_dict(serialization.load_json(args.utility))
    report = shortfall_price(spec, phi, u, args.alpha, feas_tol=args.tol)
    scen = default_scenarios(report, _scenarios(args, report.hedge.space), seed=args.seed)
    check = verify_shortfall_feasibility(report.hedge, phi, u, args.alpha, scen, tol=args.tol)
    out = report.to_dict()
    out["feasibility"] = check.to_dict()
    return out, EXIT_OK


def cmd_price_quantile(args) -> tuple[dict, int]:
    spec, phi = _market(args), _payoff(args)
    space = PathSpace.from_market(spec)
    scen = _scenarios(args, space) or ScenarioSet.uniform(space)
    problem = QuantileProblem(spec, phi, scen, args.alpha)
    report = quantile_price(problem, exhaustive_cap=args.exhaustive_cap)
    out = report.to_dict()
    check = verify_quantile_hedge(report.hedge, problem.payoff, scen)
    out["hedge_check"] = {
        "psi_min": serialization.fmt(check["psi_min"]),
        "success_prob": {k: serialization.fmt(v) for k, v in check["success_prob"].items()},
    }
    return out, EXIT_OK


COMMANDS = {
    "calibrate": cmd_calibrate,
    "check-order": cmd_check_order,
    "price-super": cmd_price_super,
    "price-shortfall": cmd_price_shortfall,
    "price-quantile": cmd_price_quantile,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robusthedge", description="Model-independent exotic pricing on marginal grids.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--market", help="MarketSpec JSON")
    parser.add_argument("--calls", nargs="+", help="call-curve CSVs, one per maturity in date order")
    parser.add_argument("--spot", type=float, help="spot for calibrate (defaults to the first marginal mean)")
    parser.add_argument("--payoff", help="payoff JSON")
    parser.add_argument("--utility", help="utility JSON")
    parser.add_argument("--alpha", type=float, default=0.0)
    parser.add_argument("--scenarios", help="scenario-set JSON")
    parser.add_argument("--out", help="report path (stdout when omitted)")
    parser.add_argument("--tol", type=float, default=FEAS_TOL)
    parser.add_argument("--exhaustive-cap", type=int, default=EXHAUSTIVE_CAP)
    parser.add_argument("--seed", type=int, default=0, help="seed for randomized diagnostic scenarios")
    parser.add_argument("--dump-lp", help="write the primal LP in CPLEX LP format (price-super)")
    return parser


_REQUIRED = {
    "calibrate": ("calls",),
    "check-order": ("market",),
    "price-super": ("market", "payoff"),
    "price-shortfall": ("market", "payoff", "utility"),
    "price-quantile": ("market", "payoff"),
}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr, format="%(levelname)s: %(message)s")
    np.seterr(all="ignore")
    try:
        missing = [f"--{k.replace('_', '-')}" for k in _REQUIRED[args.command] if not getattr(args, k)]
        if missing:
            raise InputError(f"{args.command} needs {', '.join(missing)}")
        report, status = COMMANDS[args.command](args)
    except InfeasibleModel as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.report is not None:
            print(serialization.dumps(exc.report.to_dict()), file=sys.stderr, end="")
        return EXIT_INFEASIBLE
    except SolverFailure as exc:
        print(f"solver failure: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_SOLVER
    except (InputError, PlateauAtLevel, OutOfRange, DomainError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.out:
        serialization.write_json(report, args.out)
    else:
        sys.stdout.write(serialization.dumps(report))
    return status


def main() -> None:
    sys.exit(run())
