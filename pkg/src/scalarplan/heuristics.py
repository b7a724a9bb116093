"""Admissible vector heuristics over the all-outcomes determinisation.

The determinised graph treats every individual outcome of every action as a
deterministic edge carrying the action's full cost vector.  Any execution
trace of any policy is a path in this graph, so per-component shortest-path
distances lower-bound the corresponding expected costs.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import UnreachableGoal
from .model import CsspModel, reachable_states

ZERO, IDEAL_POINT, LAMBDA_SCALARISED = "zero", "ideal-point", "lambda"


@dataclass(frozen=True)
class HeuristicVector:
    """Per-state lower-bound vectors plus the provenance of the estimate."""

    values: np.ndarray            # shape (num_states, n + 1)
    kind: str
    lam: Optional[np.ndarray] = None   # only for lambda-scalarised heuristics

    def state(self, s: int) -> np.ndarray:
        return self.values[s]


def _reverse_edges(model: CsspModel):
    """Determinisation edges grouped by target: target -> [(source, action id)]."""
    rev = [[] for _ in range(model.num_states)]
    for s, acts in enumerate(model.actions):
        for a, act in enumerate(acts):
            for t in set(int(x) for x in act.successors):
                rev[t].append((s, a))
    return rev


def _check_goal_reachable(model: CsspModel, dist: np.ndarray) -> None:
    """Every state the search can visit must reach a goal in the determinisation."""
    unreached = [model.state_names[s] for s in reachable_states(model)
                 if not np.isfinite(dist[s])]
    if unreached:
        raise UnreachableGoal(
            f"states cannot reach a goal in the determinisation: {sorted(unreached)}")


def _dijkstra(model: CsspModel, weight) -> tuple:
    """Backward Dijkstra from the goals under ``weight(action)``.

    Returns (distances, parent) where parent[s] = (action id, successor state)
    on the chosen shortest path.  Ties break on smallest state id via the heap
    key; the edge scan order is the model's deterministic action order.
    """
    dist = np.full(model.num_states, np.inf)
    parent = [None] * model.num_states
    heap = []
    for g in sorted(model.goals):
        dist[g] = 0.0
        heapq.heappush(heap, (0.0, g))
    rev = _reverse_edges(model)
    done = np.zeros(model.num_states, dtype=bool)
    while heap:
        d, t = heapq.heappop(heap)
        if done[t]:
            continue
        done[t] = True
        for s, a in rev[t]:
            if done[s] or model.is_goal(s):
                continue
            cand = weight(model.actions[s][a]) + dist[t]
            if cand < dist[s]:
                dist[s] = cand
                parent[s] = (a, t)
                heapq.heappush(heap, (cand, s))
    return dist, parent


def zero_heuristic(model: CsspModel) -> HeuristicVector:
    """All-zero vectors; trivially admissible since primary costs are positive."""
    values = np.zeros((model.num_states, model.n + 1))
    values.setflags(write=False)
    return HeuristicVector(values, ZERO)


def ideal_point_heuristic(model: CsspModel) -> HeuristicVector:
    """Independent per-component shortest-path distances to the nearest goal.

    Component i runs its own Dijkstra pass under edge weight C_i, so each
    entry lower-bounds the optimal expected cost of its component under any
    policy, and every scalarisation of the vector stays admissible.
    """
    values = np.zeros((model.num_states, model.n + 1))
    for i in range(model.n + 1):
        dist, _ = _dijkstra(model, lambda act, i=i: float(act.cost[i]))
        _check_goal_reachable(model, dist)
        values[:, i] = np.where(np.isfinite(dist), dist, 0.0)
    values.setflags(write=False)
    return HeuristicVector(values, IDEAL_POINT)


def lambda_heuristic(model: CsspModel, lam) -> HeuristicVector:
    """Scalarised shortest-path heuristic with action attribution.

    One Dijkstra pass under the scalarised edge weight [1 lam] . C(a); the
    vector estimate then sums the *vector* costs of the actions on the chosen
    shortest path, so its scalar projection reproduces the Dijkstra distance
    exactly.  More informative than the ideal point for the scalarisation it
    was built for, but must be recomputed when the scalarisation changes.
    """
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (model.n,):
        raise ValueError(f"scalarisation must have {model.n} entries")
    if np.any(lam < 0):
        raise ValueError("scalarisation entries must be nonnegative")
    w = np.concatenate(([1.0], lam))
    dist, parent = _dijkstra(model, lambda act: float(w @ act.cost))
    _check_goal_reachable(model, dist)

    values = np.zeros((model.num_states, model.n + 1))
    resolved = np.zeros(model.num_states, dtype=bool)
    for g in model.goals:
        resolved[g] = True
    for s in range(model.num_states):
        if parent[s] is None and not resolved[s]:
            continue   # outside the reachable region; zero vector is safe
        chain = []
        t = s
        while not resolved[t]:
            chain.append(t)
            t = parent[t][1]
        acc = values[t].copy()
        for u in reversed(chain):
            acc = acc + model.actions[u][parent[u][0]].cost
            values[u] = acc
            resolved[u] = True
    values.setflags(write=False)
    return HeuristicVector(values, LAMBDA_SCALARISED, lam)


def make_heuristic(model: CsspModel, kind: str, lam=None) -> HeuristicVector:
    if kind == ZERO:
        return zero_heuristic(model)
    if kind == IDEAL_POINT:
        return ideal_point_heuristic(model)
    if kind == LAMBDA_SCALARISED:
        if lam is None:
            lam = np.zeros(model.n)
        return lambda_heuristic(model, lam)
    raise ValueError(f"unknown heuristic kind {kind!r}")
