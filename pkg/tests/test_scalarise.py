import numpy as np
import pytest

from conftest import random_model
from oracles import lagrangian_by_enumeration, proper_policy_costs
from scalarplan.errors import UnboundedCoordinate
from scalarplan.heuristics import ideal_point_heuristic, zero_heuristic
from scalarplan.model import feasibility_check, load_model
from scalarplan.scalarise import (
    LambdaOracle,
    coordinate_search,
    detect_coordinate_failure,
    exact_line_search,
    oracle,
    sample_surface,
    subgradient_fallback,
)


def single_kink_model():
    """Two policies whose scalarised costs cross at lambda = 0.9.

    Cheap action: 1 + 10*lam, expensive action: constant 10; the maximum of
    their lower envelope sits exactly at the crossing.
    """
    return load_model({
        "states": ["s0", "g"], "initial": "s0", "goals": ["g"], "n": 1,
        "bounds": [1.0],
        "actions": [
            {"name": "cheap", "source": "s0", "cost": [1, 11],
             "outcomes": [{"target": "g", "prob": 1.0}]},
            {"name": "steady", "source": "s0", "cost": [10, 1],
             "outcomes": [{"target": "g", "prob": 1.0}]}]})


class TestOracle:
    def test_pathological_origin(self, pathological):
        s = oracle(pathological, np.zeros(2), None, zero_heuristic(pathological))
        assert s.L == pytest.approx(1.0, abs=1e-9)
        # tie between the two cheap actions resolves to the lexicographically
        # smaller Q vector [1,0,11], so the subgradient is (0-1, 11-1)
        assert np.allclose(s.g, [-1.0, 10.0], atol=1e-9)

    def test_pathological_at_optimum(self, pathological):
        s = oracle(pathological, np.array([2.0, 2.0]), None,
                   zero_heuristic(pathological))
        assert s.L == pytest.approx(10.0, abs=1e-9)
        assert np.allclose(s.g, [0.0, 0.0], atol=1e-12)

    def test_unconstrained(self, two_optima):
        s = oracle(two_optima, np.zeros(0), None, zero_heuristic(two_optima))
        assert s.L == pytest.approx(4.0, abs=1e-9)
        assert s.g.shape == (0,)

    def test_matches_policy_enumeration(self):
        rng = np.random.default_rng(4)
        for seed in range(15):
            model = random_model(seed, states=8, actions=2)
            orc = LambdaOracle(model, ideal_point_heuristic(model))
            for _ in range(4):
                lam = rng.uniform(0, 2, size=model.n)
                want = lagrangian_by_enumeration(model, lam)
                got = orc.eval(lam).L
                assert got == pytest.approx(want, abs=2e-4), f"seed {seed}"


class TestExactLineSearch:
    def test_boundary_optimum_returns_zero(self, commute):
        orc = LambdaOracle(commute, ideal_point_heuristic(commute))
        xi, sample = exact_line_search(orc, np.zeros(2), 0)
        assert xi == 0.0
        assert sample.L == pytest.approx(1.0, abs=1e-9)

    def test_staircase_first_coordinate_kink(self, staircase):
        orc = LambdaOracle(staircase, ideal_point_heuristic(staircase))
        xi, sample = exact_line_search(orc, np.zeros(2), 0)
        assert xi == pytest.approx(0.025, abs=1e-4)
        assert sample.L == pytest.approx(1.625, abs=1e-6)

    def test_hand_built_kink_at_0_9(self):
        model = single_kink_model()
        orc = LambdaOracle(model, zero_heuristic(model))
        xi, sample = exact_line_search(orc, np.zeros(1), 0, eta=1e-4)
        assert xi == pytest.approx(0.9, abs=1e-4)
        assert sample.L == pytest.approx(10.0, abs=1e-6)

    def test_unbounded_coordinate_signals_infeasibility(self):
        # no policy can satisfy a zero bound on a strictly positive cost
        model = load_model({
            "states": ["s0", "g"], "initial": "s0", "goals": ["g"], "n": 1,
            "bounds": [0.0],
            "actions": [{"name": "only", "source": "s0", "cost": [1, 5],
                         "outcomes": [{"target": "g", "prob": 1.0}]}]})
        orc = LambdaOracle(model, zero_heuristic(model))
        with pytest.raises(UnboundedCoordinate):
            exact_line_search(orc, np.zeros(1), 0)


class TestCoordinateSearch:
    def test_commute_stays_at_origin(self, commute):
        lam, trace = coordinate_search(commute, ideal_point_heuristic(commute))
        assert np.allclose(lam, 0.0)
        assert trace.samples[0].L == pytest.approx(1.0, abs=1e-9)

    def test_staircase_converges_to_kink(self, staircase):
        lam, trace = coordinate_search(staircase, ideal_point_heuristic(staircase))
        assert np.allclose(lam, [0.2, 0.2], atol=2e-4)
        assert np.allclose(trace.samples[1].lam, [0.025, 0.0], atol=1e-4)
        values = [s.L for s in trace.samples]
        assert all(b >= a - 1e-4 for a, b in zip(values, values[1:]))

    def test_pathological_gets_stuck_at_origin(self, pathological):
        lam, trace = coordinate_search(pathological, zero_heuristic(pathological))
        assert np.allclose(lam, 0.0)
        assert trace.samples[-1].L == pytest.approx(1.0, abs=1e-4)


class TestDetectCoordinateFailure:
    def test_fires_on_pathological_origin(self, pathological):
        # only the expensive action is feasible, so the best extractable
        # primary cost is 10 while L(0) = 1
        assert detect_coordinate_failure(pathological, np.zeros(2), 10.0, 1.0)

    def test_silent_at_staircase_optimum(self, staircase):
        assert not detect_coordinate_failure(staircase, np.array([0.2, 0.2]),
                                             4.0, 4.0 - 1e-9)

    def test_silent_unconstrained(self, two_optima):
        assert not detect_coordinate_failure(two_optima, np.zeros(0), 4.0, 4.0)


class TestSubgradientFallback:
    def test_pathological_reaches_true_maximum(self, pathological):
        lam, trace = subgradient_fallback(pathological, np.zeros(2),
                                          zero_heuristic(pathological))
        assert trace.samples[-1].L >= 10.0 - 20 * 1e-4
        s = oracle(pathological, lam, None, zero_heuristic(pathological))
        assert s.L >= 10.0 - 20 * 1e-4

    def test_zero_subgradient_fixpoint(self, pathological):
        lam, trace = subgradient_fallback(pathological, np.array([2.0, 2.0]),
                                          zero_heuristic(pathological))
        assert np.allclose(lam, [2.0, 2.0])
        assert trace.solves == 1

    def test_projection_keeps_multiplier_nonnegative(self, pathological):
        lam, trace = subgradient_fallback(pathological, np.array([0.5, 0.0]),
                                          zero_heuristic(pathological), eta=0.05)
        assert np.all(lam >= 0.0)
        for s in trace.samples:
            assert np.all(s.lam >= 0.0)

    def test_iteration_cap(self, staircase):
        from scalarplan.errors import IterationCapExceeded
        with pytest.raises(IterationCapExceeded):
            subgradient_fallback(staircase, np.zeros(2),
                                 ideal_point_heuristic(staircase),
                                 eta=1e-9, max_iters=5)


class TestSampleSurface:
    def test_pathological_axis_slice(self, pathological):
        grid = [np.array([x, 0.0]) for x in np.arange(0.0, 3.0 + 1e-9, 0.5)]
        pts = sample_surface(pathological, grid, h=zero_heuristic(pathological))
        for lam, L in pts:
            want = 1.0 - lam[0] if lam[0] > 0 else 1.0
            assert L == pytest.approx(want, abs=1e-6)

    def test_commute_origin(self, commute):
        pts = sample_surface(commute, [np.zeros(2)], h=ideal_point_heuristic(commute))
        assert pts[0][1] == pytest.approx(1.0, abs=1e-9)

    def test_unconstrained_single_point(self, two_optima):
        pts = sample_surface(two_optima, [np.zeros(0)], h=zero_heuristic(two_optima))
        assert pts[0][1] == pytest.approx(4.0, abs=1e-9)


class TestLagrangianProperties:
    def test_concavity_certificate(self):
        rng = np.random.default_rng(41)
        eps = 1e-4
        for seed in range(30):
            model = random_model(seed, states=10)
            orc = LambdaOracle(model, ideal_point_heuristic(model))
            la = rng.uniform(0, 2, size=model.n)
            lb = rng.uniform(0, 2, size=model.n)
            sa, sb = orc.eval(la), orc.eval(lb)
            for t in (0.25, 0.5, 0.75):
                mid = orc.eval(t * la + (1 - t) * lb)
                assert mid.L >= t * sa.L + (1 - t) * sb.L - 2 * eps

    def test_subgradient_validity(self):
        rng = np.random.default_rng(42)
        eps = 1e-4
        for seed in range(10):
            model = random_model(seed, states=10)
            orc = LambdaOracle(model, ideal_point_heuristic(model))
            lam = rng.uniform(0, 2, size=model.n)
            s = orc.eval(lam)
            for _ in range(50):
                probe = rng.uniform(0, 3, size=model.n)
                sp = orc.eval(probe)
                assert sp.L <= s.L + s.g @ (probe - lam) + 2 * eps

    def test_weak_duality_against_enumerable_policies(self, commute, staircase):
        rng = np.random.default_rng(43)
        for model in (commute, staircase):
            feasible = [c for _, c in proper_policy_costs(model)
                        if feasibility_check(model, c)]
            best = min((float(c[0]) for c in feasible), default=np.inf)
            orc = LambdaOracle(model, ideal_point_heuristic(model))
            for _ in range(25):
                lam = rng.uniform(0, 2, size=model.n)
                assert orc.eval(lam).L <= best + 1e-6

    def test_warm_start_neutrality(self):
        for seed in range(25):
            model = random_model(seed, states=12)
            h = ideal_point_heuristic(model)
            lam_w, _ = coordinate_search(model, h,
                                         oracle=LambdaOracle(model, h, warm=True))
            lam_c, _ = coordinate_search(model, h,
                                         oracle=LambdaOracle(model, h, warm=False))
            lw = LambdaOracle(model, h).eval(lam_w).L
            lc = LambdaOracle(model, h).eval(lam_c).L
            assert abs(lw - lc) <= 2e-4, f"seed {seed}"
