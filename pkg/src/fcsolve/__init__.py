"""Matrix-free dual solvers for filtering-clustering problems.

Minimizes ``f(b) + lam * ||D b||_1`` for trend filtering, graph trend
filtering and l1 convex clustering by projected gradient steps on the dual
box, with exact small-scale oracles and an ADMM baseline for comparison.
"""

from .admm import AdmmConfig, admm_solve, soft_threshold
from .dual import (
    DualState,
    EpsHatPolicy,
    Problem,
    SolveReport,
    StepPolicy,
    TraceRow,
    bb_stepsize,
    dual_gradient,
    dual_objective,
    duality_gap,
    gdga_step,
    make_problem,
    primal_objective,
    project_linf_ball,
    read_trace_csv,
    solve_framework,
    solve_simplified,
    write_trace_csv,
)
from .exceptions import ConfigError, FcsolveError, InsufficientData, NoClosedForm, NumericalError, ParseError
from .losses import CustomLoss, FiniteSumLoss, SquaredLoss, StochasticOracle, finite_sum_oracle
from .operators import (
    ClusterSpec,
    GraphSpec,
    LinearOperator,
    build_cluster_diff,
    build_graph_diff,
    build_univariate_diff,
    estimate_sigma,
    grid_graph,
)
from .oracle import OracleSolution, boxqp_enumerate, lambda_max, tv1d_exact
from .subroutines import InnerResult, SubroutineKind, agd_minimize, sgd_minimize, svrg_minimize

__version__ = "0.1.0"
