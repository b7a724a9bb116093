"""End-to-end solve pipeline: multiplier search, extraction, fallback, report.

The pipeline runs coordinate search, re-solves the final subproblem in strong
mode to capture every tied-greedy policy, and decodes the optimal stochastic
policy from the complementary-slackness system.  A failed or overpriced
extraction marks coordinate search as having stalled, in which case the
projected subgradient method restarts from the stall point and extraction is
retried.

Consistency and multiplier tolerances both leak into the extraction system's
right-hand sides.  When the system comes back infeasible, the pipeline widens
the tie threshold and the primary-cost band a few notches (the band never
beyond ``10 * epsilon``, which keeps the decoded policy's primary cost within
the advertised distance of the exact optimum) before declaring failure.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ExtractionInfeasible, Infeasible, UnboundedCoordinate
from .extract import extract_opt_policy, flat_dual_solve
from .heuristics import IDEAL_POINT, LAMBDA_SCALARISED, make_heuristic
from .model import CsspModel, StochasticPolicy, evaluate_policy
from .scalarise import (
    DEFAULT_ALPHA0,
    DEFAULT_ETA,
    DEFAULT_SUBGRADIENT_CAP,
    FELL_BACK,
    LambdaOracle,
    coordinate_search,
    detect_coordinate_failure,
    subgradient_fallback,
)
from .search import (
    DEFAULT_BUDGET,
    DEFAULT_EPSILON,
    PLAIN,
    STRONG,
    SearchResult,
    solve_lambda_ssp,
    warm_restart,
)

_LADDER_STEPS = 4


@dataclass
class RunReport:
    """Per-run statistics in the shape the CLI prints."""

    solver: str
    primary_cost: float
    secondary_costs: list
    bounds: list
    gap: float
    lam: list
    lambda_ssps: int
    backups: int
    expansions: int
    lp_pivots: int
    wall_time: float
    coordinate_failure: bool = False
    fallback_used: bool = False
    epsilon: float = DEFAULT_EPSILON
    eta: float = DEFAULT_ETA

    def to_dict(self) -> dict:
        return {
            "solver": self.solver,
            "primary_cost": self.primary_cost,
            "secondary_costs": self.secondary_costs,
            "bounds": self.bounds,
            "gap": self.gap,
            "lambda": self.lam,
            "counts": {
                "lambda_ssps": self.lambda_ssps,
                "backups": self.backups,
                "expansions": self.expansions,
                "lp_pivots": self.lp_pivots,
            },
            "flags": {
                "coordinate_failure": self.coordinate_failure,
                "fallback_used": self.fallback_used,
            },
            "epsilon": self.epsilon,
            "eta": self.eta,
            "wall_time": self.wall_time,
        }


@dataclass
class SolveOutcome:
    policy: StochasticPolicy
    cost: np.ndarray
    report: RunReport
    trace_lams: list = field(default_factory=list)


def _strong_resolve(oracle: LambdaOracle, lam, tie_epsilon: float,
                    budget: int) -> SearchResult:
    warm = None
    if oracle._last is not None:
        warm = warm_restart(oracle._last.result, oracle._last.lam, lam)
    return solve_lambda_ssp(oracle.model, lam, warm, oracle.heuristic_for(lam),
                            epsilon=oracle.epsilon, mode=STRONG,
                            tie_epsilon=tie_epsilon, budget=budget)


def _plain_support_result(result: SearchResult) -> SearchResult:
    """Treat a result's tie-broken greedy support as singleton tied sets."""
    from .search import _choose, scalar_weights
    tied = {}
    model = result.model
    w = scalar_weights(result.lam)
    for s in result.envelope:
        if model.is_goal(s):
            continue
        a, _, _ = _choose(model, result.V.values, w, s,
                          list(range(len(model.actions[s]))), 0.0)
        tied[s] = (a,)
    return SearchResult(result.V, result.envelope, tied, result.stats,
                        result.lam, result.mode, model)


def _extract_with_ladder(oracle: LambdaOracle, lam, epsilon: float,
                         tie_epsilon: float, eta: float, budget: int,
                         stats: dict, final_mode: str = STRONG):
    """Strong re-solve plus extraction, widening tolerances on infeasibility.

    Each rung widens the tie threshold (more support pairs, always safe) and
    the primary-cost band (capped at 10 * epsilon so the decoded policy stays
    within the advertised distance of the exact optimum), and raises the
    multiplier-activity cutoff so eta-scale residue left in multiplier
    components by the subgradient fallback stops pinning slack bounds to
    equality.
    """
    model = oracle.model
    last_exc = None
    for rung in range(_LADDER_STEPS):
        tie = tie_epsilon * 10.0 ** rung
        band = min((model.n * epsilon + 1e-7) * 10.0 ** rung, 10.0 * epsilon)
        active_tol = 1e-9 if rung == 0 else eta * 10.0 ** (rung - 1)
        result = _strong_resolve(oracle, lam, tie, budget)
        stats["backups"] += result.stats.backups
        stats["expansions"] += result.stats.expansions
        stats["strong_solves"] += 1
        if final_mode == PLAIN:
            result = _plain_support_result(result)
        try:
            policy = extract_opt_policy(model, lam, result, epsilon=epsilon,
                                        band=band, active_tol=active_tol)
            return policy, result
        except ExtractionInfeasible as exc:
            last_exc = exc
    return None, last_exc


def _adjudicate_unbounded(model: CsspModel, exc: UnboundedCoordinate):
    """Turn a multiplier-cap hit into the honest verdict.

    An unbounded dual certifies infeasibility, but a feasible instance whose
    constraints all bind with zero slack can park its dual maximiser beyond
    any fixed cap.  The exact occupation-measure solve settles which case
    this is.
    """
    from .errors import Nonconvergence
    try:
        flat_dual_solve(model)
    except Infeasible:
        raise Infeasible(str(exc)) from None
    raise Nonconvergence(
        "multiplier search exceeded its cap on a feasible instance "
        "(dual maximiser beyond the cap)") from exc


def solve_cssp(model: CsspModel, heuristic: str = IDEAL_POINT,
               epsilon: float = DEFAULT_EPSILON, eta: float = DEFAULT_ETA,
               tie_epsilon: Optional[float] = None, alpha0: float = DEFAULT_ALPHA0,
               max_subgradient_iters: int = DEFAULT_SUBGRADIENT_CAP,
               budget: int = DEFAULT_BUDGET, final_mode: str = STRONG) -> SolveOutcome:
    """Full pipeline; returns the extracted policy, its cost and a run report.

    Raises Infeasible when the instance has no feasible policy, and
    ExtractionInfeasible if extraction fails even after the complete fallback
    (with the exact occupation-measure oracle consulted to rule out plain
    infeasibility first).
    """
    start = time.perf_counter()
    tie_epsilon = epsilon if tie_epsilon is None else tie_epsilon
    if heuristic == LAMBDA_SCALARISED:
        h0 = make_heuristic(model, LAMBDA_SCALARISED, np.zeros(model.n))
        oracle = LambdaOracle(model, h0, epsilon, budget,
                              h_factory=lambda lam: make_heuristic(
                                  model, LAMBDA_SCALARISED, lam))
    else:
        oracle = LambdaOracle(model, make_heuristic(model, heuristic),
                              epsilon, budget)
    stats = {"backups": 0, "expansions": 0, "strong_solves": 0}
    coordinate_failure = False
    fallback_used = False

    try:
        lam, trace = coordinate_search(model, oracle.h, epsilon, eta, oracle=oracle)
    except UnboundedCoordinate as exc:
        _adjudicate_unbounded(model, exc)
    sample = oracle.eval(lam)
    trace_lams = [s.lam.copy() for s in trace.samples]

    policy, aux = _extract_with_ladder(oracle, lam, epsilon, tie_epsilon, eta,
                                       budget, stats, final_mode)
    cost = None
    if policy is not None:
        cost = evaluate_policy(model, policy)
        if detect_coordinate_failure(model, lam, float(cost[0]), sample.L):
            coordinate_failure = True
    else:
        coordinate_failure = True

    if coordinate_failure and model.n > 0:
        fallback_used = True
        try:
            lam, fb_trace = subgradient_fallback(
                model, lam, oracle.h, epsilon, eta, alpha0,
                max_subgradient_iters, oracle=oracle)
            # polish: exact line searches from the fallback point pin the
            # maximising kink and zero out step-size residue in the
            # components that want to sit on the boundary
            lam, _ = coordinate_search(model, oracle.h, epsilon, eta,
                                       oracle=oracle, start=lam)
        except UnboundedCoordinate as exc:
            _adjudicate_unbounded(model, exc)
        trace.outcome = FELL_BACK
        sample = oracle.eval(lam)
        policy, aux = _extract_with_ladder(oracle, lam, epsilon, tie_epsilon,
                                           eta, budget, stats, final_mode)
        if policy is not None:
            cost = evaluate_policy(model, policy)

    if policy is None:
        # adjudicate: a truly infeasible instance ends here too
        try:
            flat_dual_solve(model)
        except Infeasible:
            raise Infeasible("no feasible policy exists") from None
        raise ExtractionInfeasible(
            "extraction failed at the final multiplier") from aux

    gap = float(cost[0]) - sample.L
    report = RunReport(
        solver="scalarise",
        primary_cost=float(cost[0]),
        secondary_costs=[float(c) for c in cost[1:]],
        bounds=[float(b) for b in model.bounds],
        gap=gap,
        lam=[float(x) for x in lam],
        lambda_ssps=oracle.solves + stats["strong_solves"],
        backups=oracle.backups + stats["backups"],
        expansions=oracle.expansions + stats["expansions"],
        lp_pivots=0,
        wall_time=time.perf_counter() - start,
        coordinate_failure=coordinate_failure,
        fallback_used=fallback_used,
        epsilon=epsilon,
        eta=eta,
    )
    return SolveOutcome(policy, cost, report, trace_lams)


def oracle_solve(model: CsspModel) -> SolveOutcome:
    """Exact solve via the flat occupation-measure program, same report shape."""
    start = time.perf_counter()
    policy, cost, pivots = flat_dual_solve(model)
    report = RunReport(
        solver="exact-lp",
        primary_cost=float(cost[0]),
        secondary_costs=[float(c) for c in cost[1:]],
        bounds=[float(b) for b in model.bounds],
        gap=0.0,
        lam=[],
        lambda_ssps=0,
        backups=0,
        expansions=0,
        lp_pivots=pivots,
        wall_time=time.perf_counter() - start,
    )
    return SolveOutcome(policy, cost, report)
