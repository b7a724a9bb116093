import numpy as np
import pytest

from scalarplan.domains import GeneratorSpec, generate
from scalarplan.errors import Infeasible
from scalarplan.model import CsspModel, evaluate_policy, load_model
from scalarplan.search import PLAIN
from scalarplan.solver import oracle_solve, solve_cssp


def test_unconstrained_model(two_optima):
    out = solve_cssp(two_optima)
    assert out.cost[0] == pytest.approx(4.0, abs=1e-5)
    assert out.report.lam == []
    assert not out.report.fallback_used


def test_goal_initial_model():
    model = load_model({"states": ["g"], "initial": "g", "goals": ["g"],
                        "n": 1, "bounds": [1.0], "actions": []})
    out = solve_cssp(model)
    assert not out.policy.distribution
    assert not out.cost.any()


def test_infeasible_instance_raises(commute):
    tight = CsspModel(commute.state_names, commute.initial, commute.goals,
                      np.array([15.0, 0.0]), commute.actions)
    with pytest.raises(Infeasible):
        solve_cssp(tight, eta=1e-2)


def test_plain_final_mode_on_deterministic_optimum(two_optima):
    out = solve_cssp(two_optima, final_mode=PLAIN)
    assert out.cost[0] == pytest.approx(4.0, abs=1e-5)


def test_lambda_heuristic_pipeline(staircase):
    out = solve_cssp(staircase, heuristic="lambda")
    assert np.allclose(out.cost, [4, 15, 15], atol=1e-3)
    assert np.allclose(out.report.lam, [0.2, 0.2], atol=2e-4)


def test_zero_heuristic_pipeline(commute):
    out = solve_cssp(commute, heuristic="zero")
    assert np.allclose(out.cost, [1, 15, 10], atol=1e-4)


def test_report_gap_bound_on_random_batch():
    for seed in range(15):
        model = generate(GeneratorSpec("random", states=14, actions_per_state=3,
                                       secondary=2, seed=seed))
        out = solve_cssp(model)
        assert out.report.gap >= -(10 * 1e-4 + 1e-6)
        cost = evaluate_policy(model, out.policy)
        assert np.allclose(cost, out.cost, atol=1e-9)


def test_oracle_solve_report(commute):
    out = oracle_solve(commute)
    assert out.report.solver == "exact-lp"
    assert out.report.lp_pivots > 0
    assert out.report.gap == 0.0


def test_penalty_transformed_tireworld_end_to_end():
    from scalarplan.model import finite_penalty_transform
    model = generate(GeneratorSpec("tireworld", n=3, d=2, c=2))
    fixed = finite_penalty_transform(model, np.array([200.0, 1.0, 1.0]))
    out = solve_cssp(fixed)
    exact = oracle_solve(fixed)
    assert out.cost[0] == pytest.approx(exact.cost[0], abs=1e-3)
