"""Command-line front end.

Subcommands: ``solve`` (full pipeline), ``oracle`` (exact LP solve),
``compare`` (both, with agreement check), ``eval`` (price a policy file),
``surface`` (CSV of the Lagrangian over a multiplier grid) and ``gen``
(emit built-in instances).  Exit codes: 0 success, 1 disagreement or bad
input, 2 infeasible instance, 3 nonconvergence.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .domains import KINDS, GeneratorSpec, generate
from .errors import (
    ExtractionInfeasible,
    Infeasible,
    Nonconvergence,
    ScalarplanError,
)
from .heuristics import IDEAL_POINT, LAMBDA_SCALARISED, ZERO, make_heuristic
from .model import (
    evaluate_policy,
    feasibility_check,
    finite_penalty_transform,
    load_model_file,
    model_to_document,
    policy_from_names,
    policy_to_names,
)
from .scalarise import sample_surface
from .search import PLAIN, STRONG
from .solver import oracle_solve, solve_cssp

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_NONCONVERGENCE = 0, 1, 2, 3
AGREEMENT_SLACK = 1e-5


def _add_common(p):
    p.add_argument("--epsilon", type=float, default=1e-4,
                   help="consistency tolerance for subproblem solves")
    p.add_argument("--eta", type=float, default=1e-4,
                   help="multiplier search tolerance")
    p.add_argument("--tie-epsilon", type=float, default=None,
                   help="tie threshold for strong-mode searches (default: epsilon)")
    p.add_argument("--heuristic", choices=[ZERO, IDEAL_POINT, LAMBDA_SCALARISED],
                   default=IDEAL_POINT)
    p.add_argument("--mode", choices=[PLAIN, STRONG], default=STRONG,
                   help="final re-solve mode before extraction")
    p.add_argument("--alpha0", type=float, default=1.0,
                   help="initial step size of the subgradient fallback")
    p.add_argument("--max-subgradient-iters", type=int, default=100_000)
    p.add_argument("--backup-budget", type=int, default=10 ** 8)
    p.add_argument("--penalty", type=str, default=None,
                   help="comma-separated give-up cost vector p0,p1,...; applies "
                        "the finite-penalty transform before solving")
    p.add_argument("--out", type=str, default=None, help="write output here")
    p.add_argument("--seed", type=int, default=0)


def _load(args):
    model = load_model_file(args.model)
    if args.penalty:
        penalty = np.array([float(x) for x in args.penalty.split(",")])
        model = finite_penalty_transform(model, penalty)
    return model


def _emit(args, payload: str) -> None:
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)


def _report_json(report, policy_doc) -> str:
    doc = report.to_dict()
    doc["policy"] = policy_doc
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def cmd_solve(args) -> int:
    model = _load(args)
    outcome = solve_cssp(
        model, heuristic=args.heuristic, epsilon=args.epsilon, eta=args.eta,
        tie_epsilon=args.tie_epsilon, alpha0=args.alpha0,
        max_subgradient_iters=args.max_subgradient_iters,
        budget=args.backup_budget, final_mode=args.mode)
    _emit(args, _report_json(outcome.report,
                             policy_to_names(model, outcome.policy)))
    return EXIT_OK


def cmd_oracle(args) -> int:
    model = _load(args)
    outcome = oracle_solve(model)
    _emit(args, _report_json(outcome.report,
                             policy_to_names(model, outcome.policy)))
    return EXIT_OK


def cmd_compare(args) -> int:
    model = _load(args)
    scal = solve_cssp(
        model, heuristic=args.heuristic, epsilon=args.epsilon, eta=args.eta,
        tie_epsilon=args.tie_epsilon, alpha0=args.alpha0,
        max_subgradient_iters=args.max_subgradient_iters,
        budget=args.backup_budget, final_mode=args.mode)
    exact = oracle_solve(model)
    delta = abs(scal.report.primary_cost - exact.report.primary_cost)
    tol = 10.0 * args.epsilon + AGREEMENT_SLACK
    lines = [
        f"{'solver':<14}{'primary':>14}{'secondary':>30}",
        f"{'scalarise':<14}{scal.report.primary_cost:>14.6f}"
        f"{str([round(c, 6) for c in scal.report.secondary_costs]):>30}",
        f"{'exact-lp':<14}{exact.report.primary_cost:>14.6f}"
        f"{str([round(c, 6) for c in exact.report.secondary_costs]):>30}",
        f"|delta| = {delta:.3e} (tolerance {tol:.3e})",
    ]
    _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK if delta <= tol else EXIT_ERROR


def cmd_eval(args) -> int:
    model = _load(args)
    with open(args.policy, "r", encoding="utf-8") as fh:
        policy = policy_from_names(model, json.load(fh))
    cost = evaluate_policy(model, policy)
    feasible = feasibility_check(model, cost)
    doc = {
        "cost": [float(c) for c in cost],
        "bounds": [float(b) for b in model.bounds],
        "feasible": bool(feasible),
    }
    _emit(args, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _parse_grid(spec: str, n: int):
    lo, hi, step = (float(x) for x in spec.split(":"))
    if step <= 0 or hi < lo or lo < 0:
        raise ValueError(f"bad grid spec {spec!r}")
    axis = np.arange(lo, hi + step / 2, step)
    if n == 0:
        return [np.zeros(0)]
    grids = np.meshgrid(*([axis] * n), indexing="ij")
    return [np.array(point) for point in zip(*(g.ravel() for g in grids))]


def cmd_surface(args) -> int:
    model = _load(args)
    grid = _parse_grid(args.grid, model.n)
    h = make_heuristic(model, args.heuristic if args.heuristic != LAMBDA_SCALARISED
                       else IDEAL_POINT)
    points = sample_surface(model, grid, epsilon=args.epsilon, h=h)
    header = ",".join(f"lambda_{i + 1}" for i in range(model.n)) + ",L"
    if model.n == 0:
        header = "L"
    rows = [header]
    for lam, L in points:
        cells = [f"{x:.10g}" for x in lam] + [f"{L:.10g}"]
        rows.append(",".join(cells))
    _emit(args, "\n".join(rows) + "\n")
    return EXIT_OK


def cmd_gen(args) -> int:
    spec = GeneratorSpec(
        kind=args.kind, n=args.tw_n, d=args.tw_d, c=args.tw_c,
        states=args.states, actions_per_state=args.actions_per_state,
        secondary=args.n_secondary, seed=args.seed)
    model = generate(spec)
    payload = json.dumps(model_to_document(model), indent=2, sort_keys=True) + "\n"
    _emit(args, payload)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scalarplan",
        description="Constrained stochastic shortest path solver via "
                    "Lagrangian scalarisation search")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run the full scalarisation pipeline")
    p.add_argument("model")
    _add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("oracle", help="exact occupation-measure LP solve")
    p.add_argument("model")
    _add_common(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("compare", help="run both solvers and check agreement")
    p.add_argument("model")
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("eval", help="evaluate a policy file against a model")
    p.add_argument("model")
    p.add_argument("policy")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("surface", help="sample L over a multiplier grid (CSV)")
    p.add_argument("model")
    p.add_argument("--grid", default="0:2:0.1", help="per-axis range lo:hi:step")
    _add_common(p)
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("gen", help="emit a built-in instance as model JSON")
    p.add_argument("--kind", choices=list(KINDS), required=True)
    p.add_argument("--tw-n", type=int, default=None)
    p.add_argument("--tw-d", type=int, default=None)
    p.add_argument("--tw-c", type=int, default=None)
    p.add_argument("--states", type=int, default=None)
    p.add_argument("--actions-per-state", type=int, default=None)
    p.add_argument("--n-secondary", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (Nonconvergence, ExtractionInfeasible) as exc:
        print(f"nonconvergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ScalarplanError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
