"""Stochastic-policy extraction and the exact occupation-measure oracle.

An occupation measure assigns each (state, action) pair its expected number
of applications; a unit of flow enters the initial state and must all reach
the goals.  Extraction builds a pure feasibility system over the support of
the tied-greedy policies: flow conservation, the primary cost pinned to the
value the multiplier search certified, bound constraints for slack
multipliers and tight equalities for active ones.  Any solution decodes into
an optimal feasible policy.

``flat_dual_solve`` instead optimises the full occupation-measure program
over every reachable state; it is the desk-scale exact oracle the rest of the
test suite validates against.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import EmptySupport, ExtractionInfeasible, Infeasible, NumericalBreakdown
from .linalg import EQUAL, GREATER, INFEASIBLE, LESS, OPTIMAL, LinearProgram, solve_lp
from .model import (
    CsspModel,
    DeterministicPolicy,
    StochasticPolicy,
    envelope,
    reachable_states,
)
from .linalg import solve_linear_system
from .search import DEFAULT_EPSILON, SearchResult

LAMBDA_ACTIVE_TOL = 1e-9   # multiplier entries above this count as active
FLOW_TOL = 1e-9


@dataclass(frozen=True)
class OccupationMeasure:
    """Nonnegative visit counts on a declared support of (state, action) pairs."""

    x: dict  # (state id, action id) -> float

    def out_flow(self, s: int) -> float:
        return sum(v for (s2, _), v in self.x.items() if s2 == s)

    def support(self):
        return frozenset(k for k, v in self.x.items() if v > FLOW_TOL)


def flow_residual(model: CsspModel, measure: OccupationMeasure) -> float:
    """Worst violation of flow conservation and unit goal inflow."""
    out = {}
    inf = {}
    for (s, a), v in measure.x.items():
        out[s] = out.get(s, 0.0) + v
        act = model.actions[s][a]
        for t, p in zip(act.successors, act.probs):
            inf[int(t)] = inf.get(int(t), 0.0) + v * float(p)
    worst = 0.0
    for s in set(out) | set(inf):
        if model.is_goal(s):
            continue
        balance = out.get(s, 0.0) - inf.get(s, 0.0) - (1.0 if s == model.initial else 0.0)
        worst = max(worst, abs(balance))
    goal_in = sum(inf.get(g, 0.0) for g in model.goals)
    if model.is_goal(model.initial):
        goal_in += 1.0
    return max(worst, abs(goal_in - 1.0))


def measure_cost(model: CsspModel, measure: OccupationMeasure) -> np.ndarray:
    cost = np.zeros(model.n + 1)
    for (s, a), v in measure.x.items():
        cost += v * model.actions[s][a].cost
    return cost


# ---------------------------------------------------------------------------
# complementary-slackness extraction
# ---------------------------------------------------------------------------

def build_xpi_system(model: CsspModel, lam_star, v_scalar, support: Iterable,
                     epsilon: float = DEFAULT_EPSILON,
                     band: Optional[float] = None,
                     active_tol: float = LAMBDA_ACTIVE_TOL) -> LinearProgram:
    """Feasibility system whose solutions decode into optimal policies.

    ``v_scalar`` maps state ids to the scalarised optimal values (only the
    initial state's entry is used).  ``support`` is the union of tied-greedy
    supports.  The primary-cost equality carries consistency noise from the
    subproblem solver, so it is installed as a pair of inequalities with
    half-width ``band`` (default: n * epsilon + 1e-7).  Multiplier entries at
    or below ``active_tol`` keep their bound as an inequality; entries above
    it pin the bound to equality.  Relaxing a doubtful equality is always
    safe: the primary-cost pin alone forces optimality, the equalities only
    sharpen degenerate systems.
    """
    pairs = sorted(set((int(s), int(a)) for s, a in support))
    if not pairs:
        raise EmptySupport("extraction needs at least one support pair")
    lam_star = np.asarray(lam_star, dtype=float)
    col = {pair: j for j, pair in enumerate(pairs)}
    lp = LinearProgram(n_vars=len(pairs), sense=None)

    touched = set()
    inflow = {}   # state -> coefficient row contribution
    for (s, a), j in col.items():
        touched.add(s)
        act = model.actions[s][a]
        for t, p in zip(act.successors, act.probs):
            t = int(t)
            touched.add(t)
            inflow.setdefault(t, {}).setdefault(j, 0.0)
            inflow[t][j] += float(p)

    for s in sorted(touched):
        if model.is_goal(s):
            continue
        row = np.zeros(len(pairs))
        for (s2, a), j in col.items():
            if s2 == s:
                row[j] += 1.0
        for j, p in inflow.get(s, {}).items():
            row[j] -= p
        lp.add_row(row, EQUAL, 1.0 if s == model.initial else 0.0)

    sink = np.zeros(len(pairs))
    for g in model.goals:
        for j, p in inflow.get(g, {}).items():
            sink[j] += p
    lp.add_row(sink, EQUAL, 1.0)

    v0 = v_scalar[model.initial] if not model.is_goal(model.initial) else 0.0
    target = float(v0) - float(lam_star @ model.bounds)
    if band is None:
        band = model.n * epsilon + 1e-7
    primary = np.array([model.actions[s][a].cost[0] for s, a in pairs])
    lp.add_row(primary, LESS, target + band)
    lp.add_row(primary, GREATER, target - band)

    for i in range(model.n):
        row = np.array([model.actions[s][a].cost[i + 1] for s, a in pairs])
        if lam_star[i] > active_tol:
            lp.add_row(row, EQUAL, float(model.bounds[i]))
        else:
            lp.add_row(row, LESS, float(model.bounds[i]))
    lp.pairs = pairs
    return lp


def close_policy(model: CsspModel, policy: StochasticPolicy) -> StochasticPolicy:
    """Complete a decoded policy at states only solver noise reaches.

    An optimal vertex can strand a feasibility-tolerance's worth of flow at a
    state whose own outflow rounded to zero, leaving the decoded policy open
    there.  Such states get the deterministic cheapest-exit action (shortest
    primary-cost path to a goal in the determinisation), which keeps the
    policy closed and proper while moving its cost by at most the stranded
    mass times that path cost.
    """
    from .heuristics import _dijkstra
    dist = dict(policy.distribution)
    exits = None
    seen = set()
    stack = [model.initial]
    while stack:
        s = stack.pop()
        if s in seen or model.is_goal(s):
            continue
        seen.add(s)
        if s not in dist:
            if exits is None:
                _, parent = _dijkstra(model, lambda act: float(act.cost[0]))
                exits = {i: p[0] for i, p in enumerate(parent) if p is not None}
            if s not in exits:
                continue   # no exit exists; evaluation will report it
            dist[s] = ((exits[s], 1.0),)
        for a, p in dist[s]:
            if p > 0:
                for t in model.actions[s][a].successors:
                    stack.append(int(t))
    return StochasticPolicy(dist)


def decode_policy(measure: OccupationMeasure) -> StochasticPolicy:
    """Normalise visit counts into per-state action distributions.

    States whose total outflow is below tolerance are unreachable under the
    induced policy and are omitted.
    """
    out = {}
    for (s, _), v in measure.x.items():
        out[s] = out.get(s, 0.0) + max(0.0, v)
    dist = {}
    for s, total in out.items():
        if total <= FLOW_TOL:
            continue
        probs = [(a, max(0.0, v) / total)
                 for (s2, a), v in sorted(measure.x.items()) if s2 == s]
        probs = [(a, p) for a, p in probs if p > 0.0]
        norm = sum(p for _, p in probs)
        dist[s] = tuple((a, p / norm) for a, p in probs)
    return StochasticPolicy(dist)


def extract_opt_policy(model: CsspModel, lam_star, search_result: SearchResult,
                       epsilon: float = DEFAULT_EPSILON,
                       band: Optional[float] = None,
                       active_tol: float = LAMBDA_ACTIVE_TOL) -> StochasticPolicy:
    """Decode an optimal policy from a strong-mode search result.

    Raises ExtractionInfeasible when the complementary-slackness system has no
    solution, which signals a suboptimal multiplier or a too-coarse epsilon.
    """
    if search_result.tied is None:
        raise ValueError("extraction needs a strong-mode search result")
    lam_star = np.asarray(lam_star, dtype=float)
    if model.is_goal(model.initial):
        return StochasticPolicy({})
    support = [(s, a) for s, acts in search_result.tied.items() for a in acts]
    w = np.concatenate(([1.0], lam_star))
    v_scalar = search_result.V.values @ w
    lp = build_xpi_system(model, lam_star, v_scalar, support,
                          epsilon=epsilon, band=band, active_tol=active_tol)
    sol = solve_lp(lp)
    if sol.status != OPTIMAL:
        raise ExtractionInfeasible(
            f"complementary-slackness system is {sol.status}")
    measure = OccupationMeasure(
        {pair: float(v) for pair, v in zip(lp.pairs, sol.values)})
    return close_policy(model, decode_policy(measure))


# ---------------------------------------------------------------------------
# exact oracle over the full reachable space
# ---------------------------------------------------------------------------

def build_om_lp(model: CsspModel, states: Iterable) -> LinearProgram:
    """Occupation-measure LP over the given non-goal states, minimising primary cost."""
    pairs = [(s, a) for s in sorted(states)
             if not model.is_goal(s)
             for a in range(len(model.actions[s]))]
    col = {pair: j for j, pair in enumerate(pairs)}
    lp = LinearProgram(n_vars=len(pairs), sense="min",
                       objective=np.array(
                           [model.actions[s][a].cost[0] for s, a in pairs]))
    inflow = {}
    for (s, a), j in col.items():
        act = model.actions[s][a]
        for t, p in zip(act.successors, act.probs):
            inflow.setdefault(int(t), {}).setdefault(j, 0.0)
            inflow[int(t)][j] += float(p)
    for s in sorted(states):
        if model.is_goal(s):
            continue
        row = np.zeros(len(pairs))
        for a in range(len(model.actions[s])):
            row[col[(s, a)]] += 1.0
        for j, p in inflow.get(s, {}).items():
            row[j] -= p
        lp.add_row(row, EQUAL, 1.0 if s == model.initial else 0.0)
    sink = np.zeros(len(pairs))
    for g in model.goals:
        for j, p in inflow.get(g, {}).items():
            sink[j] += p
    lp.add_row(sink, EQUAL, 1.0)
    for i in range(model.n):
        row = np.array([model.actions[s][a].cost[i + 1] for s, a in pairs])
        lp.add_row(row, LESS, float(model.bounds[i]))
    lp.pairs = pairs
    return lp


def flat_dual_solve(model: CsspModel):
    """Exact solve of the full occupation-measure program.

    Returns (policy, cost vector, lp pivots).  Raises Infeasible when no
    feasible policy exists.
    """
    if model.is_goal(model.initial):
        return StochasticPolicy({}), np.zeros(model.n + 1), 0
    states = reachable_states(model)
    lp = build_om_lp(model, states)
    sol = solve_lp(lp)
    if sol.status == INFEASIBLE:
        raise Infeasible("no feasible policy exists")
    if sol.status != OPTIMAL:
        raise NumericalBreakdown(f"occupation-measure solve ended {sol.status}")
    measure = OccupationMeasure(
        {pair: float(v) for pair, v in zip(lp.pairs, sol.values)})
    return (close_policy(model, decode_policy(measure)),
            measure_cost(model, measure), sol.pivots)


# ---------------------------------------------------------------------------
# occupation measures of explicit policies, and flow decomposition
# ---------------------------------------------------------------------------

def occupation_measure_of(model: CsspModel, policy: StochasticPolicy) -> OccupationMeasure:
    """Expected visit counts of a closed proper policy from the initial state."""
    if model.is_goal(model.initial):
        return OccupationMeasure({})
    env = envelope(model, policy)
    transient = sorted(s for s in env if not model.is_goal(s))
    idx = {s: i for i, s in enumerate(transient)}
    k = len(transient)
    p = np.zeros((k, k))
    for s in transient:
        for a, w in policy.action_probs(s):
            act = model.actions[s][a]
            for t, q in zip(act.successors, act.probs):
                t = int(t)
                if t in idx:
                    p[idx[t], idx[s]] += w * float(q)
    e0 = np.zeros(k)
    e0[idx[model.initial]] = 1.0
    visits = solve_linear_system(np.eye(k) - p, e0)
    x = {}
    for s in transient:
        for a, w in policy.action_probs(s):
            if w > 0:
                x[(s, a)] = float(visits[idx[s]] * w)
    return OccupationMeasure(x)


def flow_decomposition(model: CsspModel, measure: OccupationMeasure,
                       tol: float = 1e-6):
    """Split an occupation measure into weighted deterministic constituents.

    Repeatedly peels the deterministic policy that follows the largest
    remaining flow out of each state, scaled by the bottleneck ratio, until
    the residual weight drops below ``tol``.  Weights are renormalised to
    sum to 1.
    """
    remaining = {k: float(v) for k, v in measure.x.items() if v > FLOW_TOL}
    parts = []
    total = 1.0
    for _ in range(len(remaining) + 5):
        if total <= tol or not remaining:
            break
        mapping = {}
        stack = [model.initial]
        seen = set()
        dead = False
        while stack:
            s = stack.pop()
            if s in seen or model.is_goal(s):
                continue
            seen.add(s)
            cands = [(v, a) for (s2, a), v in remaining.items()
                     if s2 == s and v > FLOW_TOL]
            if not cands:
                dead = True
                break
            _, a = max(cands)
            mapping[s] = a
            for t in model.actions[s][a].successors:
                stack.append(int(t))
        if dead:
            break
        policy = DeterministicPolicy(mapping)
        part = occupation_measure_of(model, policy.to_stochastic())
        mu = total
        for pair, v in part.x.items():
            if v > FLOW_TOL:
                mu = min(mu, remaining.get(pair, 0.0) / v)
        if mu <= 0:
            break
        parts.append((mu, policy))
        for pair, v in part.x.items():
            if pair in remaining:
                remaining[pair] = max(0.0, remaining[pair] - mu * v)
                if remaining[pair] <= FLOW_TOL:
                    del remaining[pair]
        total -= mu
    norm = sum(mu for mu, _ in parts)
    return [(mu / norm, pol) for mu, pol in parts]
