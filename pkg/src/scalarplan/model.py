"""Explicit-state constrained stochastic shortest path models and policies.

States and actions are referenced by dense integer ids assigned at load time;
names exist only at the I/O boundary.  An action id is the action's position
in its source state's action list.  Models are immutable after construction
and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Optional, Union

import numpy as np

from .errors import (
    BadDistribution,
    DimensionMismatch,
    ImproperPolicy,
    MalformedModel,
    MalformedPolicy,
    NonpositivePrimaryCost,
    OpenPolicy,
    SingularMatrix,
)
from .linalg import solve_linear_system

PROB_TOL = 1e-9          # model hygiene: distributions must sum to 1 this tightly
FEASIBILITY_TOL = 1e-6   # solver noise allowance when checking secondary bounds
GIVE_UP_NAME = "__give_up__"

StateId = int
ActionId = int
PolicySupport = frozenset  # of (state id, action id) pairs


@dataclass(frozen=True)
class ActionDef:
    """One applicable action: a cost vector and a distribution over successors."""

    name: str
    cost: np.ndarray        # shape (n + 1,), cost[0] > 0
    successors: np.ndarray  # int state ids
    probs: np.ndarray       # matching probabilities, sum 1


@dataclass(frozen=True)
class CsspModel:
    state_names: tuple
    initial: StateId
    goals: frozenset
    bounds: np.ndarray                 # shape (n,)
    actions: tuple                     # per state: tuple of ActionDef

    @property
    def n(self) -> int:
        return int(self.bounds.shape[0])

    @property
    def num_states(self) -> int:
        return len(self.state_names)

    def is_goal(self, s: StateId) -> bool:
        return s in self.goals

    def applicable(self, s: StateId):
        return self.actions[s]

    def action(self, s: StateId, a: ActionId) -> ActionDef:
        return self.actions[s][a]

    def predecessors(self):
        """Per-state tuple of (pred state, pred action id) pairs. Cached."""
        cached = getattr(self, "_preds", None)
        if cached is None:
            preds = [[] for _ in range(self.num_states)]
            for s, acts in enumerate(self.actions):
                for a, act in enumerate(acts):
                    for t in set(int(x) for x in act.successors):
                        preds[t].append((s, a))
            cached = tuple(tuple(p) for p in preds)
            object.__setattr__(self, "_preds", cached)
        return cached

    def state_id(self, name: str) -> StateId:
        try:
            return self.state_names.index(name)
        except ValueError:
            raise MalformedModel(f"unknown state name {name!r}") from None

    def action_id(self, s: StateId, name: str) -> ActionId:
        for a, act in enumerate(self.actions[s]):
            if act.name == name:
                return a
        raise MalformedModel(
            f"state {self.state_names[s]!r} has no action named {name!r}")


# ---------------------------------------------------------------------------
# loading and validation
# ---------------------------------------------------------------------------

def load_model(document: Union[str, Mapping]) -> CsspModel:
    """Build a validated model from the JSON interchange document.

    The document carries ``states``, ``initial``, ``goals``, ``n``, ``bounds``
    and ``actions`` (records of ``name``, ``source``, ``cost``, ``outcomes``).
    Actions whose source is a goal state are stripped.
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise MalformedModel(f"not valid JSON: {exc}") from None
    if not isinstance(document, Mapping):
        raise MalformedModel("document must be a JSON object")

    for key in ("states", "initial", "goals", "n", "bounds", "actions"):
        if key not in document:
            raise MalformedModel(f"missing field {key!r}")

    names = list(document["states"])
    if not names or any(not isinstance(x, str) for x in names):
        raise MalformedModel("states must be a non-empty array of strings")
    if len(set(names)) != len(names):
        raise MalformedModel("state names must be unique")
    index = {name: i for i, name in enumerate(names)}

    if document["initial"] not in index:
        raise MalformedModel(f"initial state {document['initial']!r} unknown")
    initial = index[document["initial"]]
    try:
        goals = frozenset(index[g] for g in document["goals"])
    except KeyError as exc:
        raise MalformedModel(f"goal state {exc.args[0]!r} unknown") from None

    n = document["n"]
    if not isinstance(n, int) or n < 0:
        raise MalformedModel("n must be a nonnegative integer")
    bounds = np.asarray(document["bounds"], dtype=float)
    if bounds.shape != (n,):
        raise MalformedModel(f"bounds must have {n} entries")
    if np.any(bounds < 0) or not np.all(np.isfinite(bounds)):
        raise MalformedModel("bounds must be finite and nonnegative")

    per_state = [[] for _ in names]
    for rec in document["actions"]:
        for key in ("name", "source", "cost", "outcomes"):
            if key not in rec:
                raise MalformedModel(f"action record missing {key!r}")
        if rec["source"] not in index:
            raise MalformedModel(f"action source {rec['source']!r} unknown")
        src = index[rec["source"]]
        if src in goals:
            continue  # goal states keep no actions
        cost = np.asarray(rec["cost"], dtype=float)
        if cost.shape != (n + 1,):
            raise MalformedModel(
                f"action {rec['name']!r} cost must have {n + 1} entries")
        if not np.all(np.isfinite(cost)):
            raise MalformedModel(f"action {rec['name']!r} cost must be finite")
        if cost[0] <= 0:
            raise NonpositivePrimaryCost(
                f"action {rec['name']!r} has primary cost {cost[0]}")
        if np.any(cost[1:] < 0):
            raise MalformedModel(f"action {rec['name']!r} has negative secondary cost")
        succs, probs = [], []
        for out in rec["outcomes"]:
            if out["target"] not in index:
                raise MalformedModel(f"outcome target {out['target']!r} unknown")
            succs.append(index[out["target"]])
            probs.append(float(out["prob"]))
        probs = np.asarray(probs, dtype=float)
        if probs.size == 0 or np.any(probs < 0):
            raise BadDistribution(f"action {rec['name']!r} has negative outcome mass")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise BadDistribution(
                f"action {rec['name']!r} outcome mass sums to {probs.sum()}")
        cost.setflags(write=False)
        probs.setflags(write=False)
        per_state[src].append(
            ActionDef(str(rec["name"]), cost, np.asarray(succs, dtype=int), probs))

    for s, acts in enumerate(per_state):
        seen = set()
        for act in acts:
            if act.name in seen:
                raise MalformedModel(
                    f"state {names[s]!r} has duplicate action name {act.name!r}")
            seen.add(act.name)

    bounds.setflags(write=False)
    return CsspModel(tuple(names), initial, goals, bounds,
                     tuple(tuple(a) for a in per_state))


def load_model_file(path) -> CsspModel:
    with open(path, "r", encoding="utf-8") as fh:
        return load_model(fh.read())


def model_to_document(model: CsspModel) -> dict:
    """Inverse of load_model, for the generator CLI."""
    actions = []
    for s, acts in enumerate(model.actions):
        for act in acts:
            actions.append({
                "name": act.name,
                "source": model.state_names[s],
                "cost": [float(c) for c in act.cost],
                "outcomes": [
                    {"target": model.state_names[int(t)], "prob": float(p)}
                    for t, p in zip(act.successors, act.probs)
                ],
            })
    return {
        "states": list(model.state_names),
        "initial": model.state_names[model.initial],
        "goals": sorted(model.state_names[g] for g in model.goals),
        "n": model.n,
        "bounds": [float(b) for b in model.bounds],
        "actions": actions,
    }


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeterministicPolicy:
    mapping: dict  # state id -> action id

    def to_stochastic(self) -> "StochasticPolicy":
        return StochasticPolicy(
            {s: ((a, 1.0),) for s, a in self.mapping.items()})


@dataclass(frozen=True)
class StochasticPolicy:
    distribution: dict  # state id -> tuple of (action id, probability)

    def action_probs(self, s: StateId):
        return self.distribution.get(s, ())

    def support(self) -> PolicySupport:
        pairs = set()
        for s, dist in self.distribution.items():
            for a, p in dist:
                if p > 0:
                    pairs.add((s, a))
        return frozenset(pairs)

    def states(self):
        return self.distribution.keys()


def validate_policy(model: CsspModel, policy: StochasticPolicy) -> None:
    for s, dist in policy.distribution.items():
        if not 0 <= s < model.num_states:
            raise MalformedPolicy(f"unknown state id {s}")
        total = 0.0
        for a, p in dist:
            if not 0 <= a < len(model.actions[s]):
                raise MalformedPolicy(
                    f"action id {a} not applicable in state {model.state_names[s]!r}")
            if p < 0:
                raise MalformedPolicy("negative action probability")
            total += p
        if abs(total - 1.0) > PROB_TOL:
            raise MalformedPolicy(
                f"probabilities at {model.state_names[s]!r} sum to {total}")


def policy_to_names(model: CsspModel, policy: StochasticPolicy) -> dict:
    return {
        model.state_names[s]: [[model.actions[s][a].name, float(p)] for a, p in dist]
        for s, dist in sorted(policy.distribution.items())
    }


def policy_from_names(model: CsspModel, doc: Mapping) -> StochasticPolicy:
    dist = {}
    for name, entries in doc.items():
        s = model.state_id(name)
        dist[s] = tuple((model.action_id(s, an), float(p)) for an, p in entries)
    policy = StochasticPolicy(dist)
    validate_policy(model, policy)
    return policy


# ---------------------------------------------------------------------------
# envelopes and evaluation
# ---------------------------------------------------------------------------

def envelope(model: CsspModel, policy: StochasticPolicy,
             start: Optional[StateId] = None) -> frozenset:
    """States reachable from ``start`` under positive-probability choices.

    Raises OpenPolicy when a reachable non-goal state has no entry.
    """
    if start is None:
        start = model.initial
    seen = {start}
    stack = [start]
    open_states = []
    while stack:
        s = stack.pop()
        if model.is_goal(s):
            continue
        dist = policy.action_probs(s)
        if not dist:
            open_states.append(s)
            continue
        for a, p in dist:
            if p <= 0:
                continue
            for t in model.actions[s][a].successors:
                t = int(t)
                if t not in seen:
                    seen.add(t)
                    stack.append(t)
    if open_states:
        raise OpenPolicy(open_states)
    return frozenset(seen)


def _policy_matrices(model: CsspModel, policy: StochasticPolicy, states):
    """Transition matrix, per-component costs and goal mass under the policy."""
    idx = {s: i for i, s in enumerate(states)}
    k = len(states)
    p = np.zeros((k, k))
    c = np.zeros((k, model.n + 1))
    goal_mass = np.zeros(k)
    for s in states:
        i = idx[s]
        for a, w in policy.action_probs(s):
            if w <= 0:
                continue
            act = model.actions[s][a]
            c[i] += w * act.cost
            for t, q in zip(act.successors, act.probs):
                t = int(t)
                if model.is_goal(t):
                    goal_mass[i] += w * q
                else:
                    p[i, idx[t]] += w * q
    return idx, p, c, goal_mass


_DIRECT_LIMIT = 2000     # beyond this, fall back to iterative sweeps
_ITER_RESIDUAL = 1e-10


def _solve_policy_system(p: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve (I - p) x = rhs, directly when small, iteratively otherwise."""
    k = p.shape[0]
    if k <= _DIRECT_LIMIT:
        return solve_linear_system(np.eye(k) - p, rhs)
    x = np.zeros_like(rhs)
    for _ in range(10_000_000):
        nxt = p @ x + rhs
        if np.max(np.abs(nxt - x)) <= _ITER_RESIDUAL:
            return nxt
        x = nxt
    raise ImproperPolicy("policy value iteration failed to converge")


def evaluate_policy(model: CsspModel, policy: StochasticPolicy) -> np.ndarray:
    """Expected cost vector of a closed proper policy from the initial state.

    Properness is detected by solving the goal-reachability system over the
    envelope; a singular system or a reach probability below 1 - 1e-9 raises
    ImproperPolicy.
    """
    validate_policy(model, policy)
    env = envelope(model, policy)
    transient = sorted(s for s in env if not model.is_goal(s))
    if not transient:
        return np.zeros(model.n + 1)
    idx, p, c, goal_mass = _policy_matrices(model, policy, transient)
    try:
        reach = _solve_policy_system(p, goal_mass)
    except SingularMatrix:
        raise ImproperPolicy("policy traps probability mass away from goals") from None
    if np.min(reach) < 1.0 - 1e-9:
        worst = transient[int(np.argmin(reach))]
        raise ImproperPolicy(
            f"goal reached with probability {np.min(reach):.6f} < 1 "
            f"from state {model.state_names[worst]!r}")
    values = _solve_policy_system(p, c)
    return values[idx[model.initial]].copy()


def feasibility_check(model: CsspModel, cost) -> bool:
    """True iff every secondary component respects its bound up to 1e-6."""
    cost = np.asarray(cost, dtype=float)
    if cost.shape != (model.n + 1,):
        raise DimensionMismatch(
            f"cost vector has {cost.shape[0]} entries, expected {model.n + 1}")
    return bool(np.all(cost[1:] <= model.bounds + FEASIBILITY_TOL))


# ---------------------------------------------------------------------------
# dead-end removal
# ---------------------------------------------------------------------------

def finite_penalty_transform(model: CsspModel, penalty) -> CsspModel:
    """Add a deterministic give-up action (cost = penalty) to every non-goal state.

    The result satisfies the reachability assumption by construction.  States
    that already carry an identical give-up action are left alone, which makes
    the transform idempotent.
    """
    penalty = np.asarray(penalty, dtype=float)
    if penalty.shape != (model.n + 1,):
        raise DimensionMismatch(
            f"penalty has {penalty.shape[0]} entries, expected {model.n + 1}")
    if np.any(penalty <= 0):
        raise ValueError("penalty entries must be strictly positive")
    if not model.goals:
        raise MalformedModel("cannot add give-up actions: model has no goal")
    target = min(model.goals)
    penalty = penalty.copy()
    penalty.setflags(write=False)
    new_actions = []
    for s, acts in enumerate(model.actions):
        if model.is_goal(s):
            new_actions.append(acts)
            continue
        same = next(
            (a for a in acts
             if a.name.startswith(GIVE_UP_NAME) and len(a.successors) == 1
             and int(a.successors[0]) == target and np.array_equal(a.cost, penalty)),
            None)
        if same is not None:
            new_actions.append(acts)
            continue
        taken = {a.name for a in acts}
        name = GIVE_UP_NAME
        k = 2
        while name in taken:
            name = f"{GIVE_UP_NAME}{k}"
            k += 1
        give_up = ActionDef(name, penalty,
                            np.asarray([target], dtype=int), np.asarray([1.0]))
        new_actions.append(acts + (give_up,))
    return CsspModel(model.state_names, model.initial, model.goals,
                     model.bounds, tuple(new_actions))


def reachable_states(model: CsspModel, start: Optional[StateId] = None) -> frozenset:
    """States reachable from ``start`` under any sequence of actions."""
    if start is None:
        start = model.initial
    seen = {start}
    stack = [start]
    while stack:
        s = stack.pop()
        if model.is_goal(s):
            continue
        for act in model.actions[s]:
            for t in act.successors:
                t = int(t)
                if t not in seen:
                    seen.add(t)
                    stack.append(t)
    return frozenset(seen)


def policy_is_proper(model: CsspModel, policy: StochasticPolicy) -> bool:
    try:
        evaluate_policy(model, policy)
        return True
    except (ImproperPolicy, OpenPolicy):
        return False
