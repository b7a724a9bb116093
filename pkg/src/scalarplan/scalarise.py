"""Outer optimisation over the Lagrangian multiplier vector.

``L(lam)`` is the optimal policy cost of the scalarised subproblem plus the
constant terminal term ``-lam . bounds``.  Plotted over all multipliers it is
piecewise linear and concave, so each solved subproblem hands back both the
value and a subgradient, and the maximiser can be found by coordinate search
with exact line searches.  Coordinate search can stall on kinks that require
a diagonal move; the projected subgradient method is the complete fallback.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import IterationCapExceeded, UnboundedCoordinate
from .heuristics import HeuristicVector
from .model import CsspModel
from .search import (
    DEFAULT_BUDGET,
    DEFAULT_EPSILON,
    PLAIN,
    SearchResult,
    as_scalarisation,
    scalar_weights,
    solve_lambda_ssp,
    warm_restart,
)

DEFAULT_ETA = 1e-4
DEFAULT_ALPHA0 = 1.0
DEFAULT_SUBGRADIENT_CAP = 100_000
LINE_SEARCH_CAP = 1e6

COORDINATE_CONVERGED = "CoordinateConverged"
FELL_BACK = "FellBackToSubgradient"
SUBGRADIENT_CONVERGED = "SubgradientConverged"


@dataclass
class LagrangianSample:
    """One oracle evaluation: multiplier, value, subgradient and solving V."""

    lam: np.ndarray
    L: float
    g: np.ndarray
    result: SearchResult

    @property
    def V(self):
        return self.result.V


@dataclass
class LambdaSearchTrace:
    samples: list = field(default_factory=list)   # accepted steps, in order
    outcome: Optional[str] = None
    solves: int = 0


class LambdaOracle:
    """Evaluates ``L`` and a subgradient per multiplier, warm-starting each solve.

    The subgradient comes from the tie-broken optimal policy of the solved
    subproblem: component i is that policy's i-th expected cost minus its
    bound.  At kinks the policy is non-unique; the tie-broken policy's
    subgradient is the one reported.
    """

    def __init__(self, model: CsspModel, h: HeuristicVector,
                 epsilon: float = DEFAULT_EPSILON, budget: int = DEFAULT_BUDGET,
                 warm: bool = True, h_factory=None):
        self.model = model
        self.h = h
        self.h_factory = h_factory   # lam -> HeuristicVector, for per-lam heuristics
        self.epsilon = epsilon
        self.budget = budget
        self.warm = warm
        self.solves = 0
        self.backups = 0
        self.expansions = 0
        self._last: Optional[LagrangianSample] = None

    def heuristic_for(self, lam) -> HeuristicVector:
        return self.h_factory(lam) if self.h_factory is not None else self.h

    def eval(self, lam) -> LagrangianSample:
        lam = as_scalarisation(lam, self.model.n)
        v_init = None
        if self.warm and self._last is not None:
            v_init = warm_restart(self._last.result, self._last.lam, lam)
        result = solve_lambda_ssp(self.model, lam, v_init, self.heuristic_for(lam),
                                  epsilon=self.epsilon, mode=PLAIN,
                                  budget=self.budget)
        self.solves += 1
        self.backups += result.stats.backups
        self.expansions += result.stats.expansions
        v0 = result.V.values[self.model.initial]
        L = float(scalar_weights(lam) @ v0 - lam @ self.model.bounds)
        g = v0[1:] - self.model.bounds
        sample = LagrangianSample(lam.copy(), L, g.copy(), result)
        self._last = sample
        return sample


def oracle(model: CsspModel, lam, warm: Optional[SearchResult],
           h: HeuristicVector, epsilon: float = DEFAULT_EPSILON) -> LagrangianSample:
    """One-shot oracle call; ``warm`` may carry a previous solve to restart from."""
    orc = LambdaOracle(model, h, epsilon)
    if warm is not None:
        orc._last = LagrangianSample(
            warm.lam, float("nan"), np.zeros(model.n), warm)
    return orc.eval(lam)


# ---------------------------------------------------------------------------
# exact line search along one coordinate
# ---------------------------------------------------------------------------

def exact_line_search(oracle: LambdaOracle, lam, i: int,
                      eta: float = DEFAULT_ETA):
    """Maximise ``L`` along coordinate ``i`` with all other entries frozen.

    Keeps a lower anchor with positive subgradient and an upper anchor with
    nonpositive subgradient, and repeatedly evaluates the intersection of the
    two supporting lines.  On a piecewise-linear concave section this pins the
    maximising kink exactly; otherwise it stops once the bracket is narrower
    than ``eta``.  Returns (new coordinate value, sample at that value).
    """
    lam = as_scalarisation(lam, oracle.model.n).copy()

    def at(x: float) -> LagrangianSample:
        probe = lam.copy()
        probe[i] = x
        return oracle.eval(probe)

    lo = at(0.0)
    if lo.g[i] <= 0.0:
        return 0.0, lo
    u = 1.0
    hi = at(u)
    while hi.g[i] > 0.0:
        u *= 2.0
        if u > LINE_SEARCH_CAP:
            raise UnboundedCoordinate(
                f"coordinate {i} subgradient stays positive past {LINE_SEARCH_CAP}; "
                "the instance admits no feasible policy")
        hi = at(u)

    l, u = 0.0, u
    best = lo if lo.L >= hi.L else hi
    for _ in range(200):
        gl, gu = lo.g[i], hi.g[i]
        m = (hi.L - lo.L + gl * l - gu * u) / (gl - gu)
        if not (l < m < u):
            break
        # intersection collapsing onto an anchor pins the kink there
        if m - l <= 1e-15 * max(1.0, abs(l)) or u - m <= 1e-15 * max(1.0, abs(u)):
            break
        mid = at(m)
        if mid.L >= best.L:
            best = mid
        predicted = lo.L + gl * (m - l)
        if mid.L >= predicted - 1e-11 * (1.0 + abs(predicted)):
            return m, mid          # both supporting lines are active here
        if mid.g[i] == 0.0:
            return m, mid
        if mid.g[i] > 0.0:
            l, lo = m, mid
        else:
            u, hi = m, mid
        if u - l <= eta:
            break
    if not np.array_equal(best.lam, oracle._last.lam):
        best = at(best.lam[i])     # leave the warm state at the returned point
    return float(best.lam[i]), best


# ---------------------------------------------------------------------------
# coordinate search and the subgradient fallback
# ---------------------------------------------------------------------------

_POLISH_TOL = 1e-11
_POLISH_SWEEPS = 64   # geometric contraction reaches machine scale well within this


def coordinate_search(model: CsspModel, h: HeuristicVector,
                      epsilon: float = DEFAULT_EPSILON, eta: float = DEFAULT_ETA,
                      oracle: Optional[LambdaOracle] = None,
                      max_sweeps: int = 10_000, start=None):
    """Ascend ``L`` one coordinate at a time, sweeping in ascending index order.

    The search is converged once a full sweep improves ``L`` by at most
    ``eta``; after that, polish sweeps continue while improvements stay above
    machine scale.  Each line search pins its kink by exact line intersection,
    so the polish drives the multiplier onto the axis-maximal point itself
    rather than stopping an eta-sized step short of it; without it, the
    leftover gap is indistinguishable from a genuine coordinate-search stall
    downstream.  Returns the final multiplier and the trace of accepted steps.
    The result maximises ``L`` along every axis, which is not always the
    global maximum; callers detect that case and fall back.
    """
    if oracle is None:
        oracle = LambdaOracle(model, h, epsilon)
    lam = np.zeros(model.n) if start is None else as_scalarisation(start, model.n)
    current = oracle.eval(lam)
    trace = LambdaSearchTrace([current])
    converged_at = None
    for sweep in range(max_sweeps):
        if model.n == 0:
            break
        best_gain = 0.0
        for i in range(model.n):
            xi, sample = exact_line_search(oracle, lam, i, eta)
            gain = sample.L - current.L
            if xi != lam[i] and gain > 0.0:
                lam = lam.copy()
                lam[i] = xi
                current = sample
                trace.samples.append(sample)
                best_gain = max(best_gain, gain)
            elif not np.array_equal(oracle._last.lam, lam):
                current = oracle.eval(lam)   # restore the warm state
        if best_gain <= _POLISH_TOL * (1.0 + abs(current.L)):
            break
        if best_gain <= eta:
            if converged_at is None:
                converged_at = sweep
            elif sweep - converged_at >= _POLISH_SWEEPS:
                break
    trace.outcome = COORDINATE_CONVERGED
    trace.solves = oracle.solves
    return lam, trace


def detect_coordinate_failure(model: CsspModel, lam_dagger, extracted_primary: float,
                              L_dagger: float) -> bool:
    """True when the extracted policy's primary cost exceeds ``L(lam)``.

    At a true maximiser the two coincide, so a strictly larger primary cost
    certifies that coordinate search stalled short of the optimum.
    """
    return extracted_primary > L_dagger + 1e-6 * (1.0 + abs(L_dagger))


def subgradient_fallback(model: CsspModel, lam_start, h: HeuristicVector,
                         epsilon: float = DEFAULT_EPSILON, eta: float = DEFAULT_ETA,
                         alpha0: float = DEFAULT_ALPHA0,
                         max_iters: int = DEFAULT_SUBGRADIENT_CAP,
                         oracle: Optional[LambdaOracle] = None,
                         lam_cap: float = LINE_SEARCH_CAP):
    """Projected subgradient ascent with the diminishing step alpha0 / (1 + k).

    Complete for piecewise-linear concave objectives: tracks the best value
    seen and stops once the step size drops below ``eta`` (or immediately on a
    zero subgradient, which certifies optimality).  Returns the best multiplier
    and the trace.
    """
    if oracle is None:
        oracle = LambdaOracle(model, h, epsilon)
    lam = as_scalarisation(lam_start, model.n).copy()
    trace = LambdaSearchTrace()
    best = None
    k = 0
    while True:
        alpha = alpha0 / (1.0 + k)
        if alpha < eta:
            break
        if k >= max_iters:
            raise IterationCapExceeded(
                f"subgradient method exceeded {max_iters} iterations")
        sample = oracle.eval(lam)
        if best is None or sample.L > best.L:
            best = sample
            trace.samples.append(sample)
        if not np.any(sample.g):
            break   # feasible and tight: lam is a maximiser
        lam = np.maximum(lam + alpha * sample.g, 0.0)
        if np.max(lam) > lam_cap:
            raise UnboundedCoordinate(
                f"multiplier exceeded {lam_cap} during subgradient ascent; "
                "the instance admits no feasible policy")
        k += 1
    if best is None:
        best = oracle.eval(lam)
        trace.samples.append(best)
    trace.outcome = SUBGRADIENT_CONVERGED
    trace.solves = oracle.solves
    return best.lam.copy(), trace


def sample_surface(model: CsspModel, grid, epsilon: float = DEFAULT_EPSILON,
                   h: Optional[HeuristicVector] = None,
                   oracle: Optional[LambdaOracle] = None):
    """Evaluate ``L`` over a list of multipliers, warm-starting along the way."""
    if oracle is None:
        if h is None:
            raise ValueError("sample_surface needs a heuristic or an oracle")
        oracle = LambdaOracle(model, h, epsilon)
    out = []
    for lam in grid:
        sample = oracle.eval(lam)
        out.append((sample.lam.copy(), sample.L))
    return out
