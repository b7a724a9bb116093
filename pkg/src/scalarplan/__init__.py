"""Planning toolkit for constrained stochastic shortest path problems.

Solves for optimal (possibly stochastic) policies by searching scalarised
unconstrained subproblems under a Lagrangian multiplier, maximising the
multiplier by coordinate search with a projected-subgradient fallback, and
decoding the optimal policy from a complementary-slackness feasibility
system.  An exact occupation-measure LP solve is included as a validation
oracle.
"""

from . import errors
from .domains import GeneratorSpec, generate
from .extract import (
    OccupationMeasure,
    build_xpi_system,
    decode_policy,
    extract_opt_policy,
    flat_dual_solve,
    flow_decomposition,
    occupation_measure_of,
)
from .heuristics import (
    HeuristicVector,
    ideal_point_heuristic,
    lambda_heuristic,
    make_heuristic,
    zero_heuristic,
)
from .linalg import LinearProgram, LpSolution, solve_linear_system, solve_lp
from .model import (
    CsspModel,
    DeterministicPolicy,
    StochasticPolicy,
    envelope,
    evaluate_policy,
    feasibility_check,
    finite_penalty_transform,
    load_model,
    load_model_file,
    model_to_document,
    policy_from_names,
    policy_to_names,
)
from .scalarise import (
    LagrangianSample,
    LambdaOracle,
    LambdaSearchTrace,
    coordinate_search,
    detect_coordinate_failure,
    exact_line_search,
    oracle,
    sample_surface,
    subgradient_fallback,
)
from .search import (
    SearchResult,
    VectorValueFunction,
    bellman_residual,
    fresh_vvf,
    greedy_envelope,
    lambda_bellman_backup,
    solve_lambda_ssp,
    warm_restart,
)
from .solver import RunReport, SolveOutcome, oracle_solve, solve_cssp

__version__ = "0.1.0"
