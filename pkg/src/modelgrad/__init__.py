"""First-order convex optimization with inexact model surrogates.

Gradient and fast gradient methods whose only interface to the objective is
a per-iteration model psi(y, x) sandwiched around f, covering exact and
stochastic gradients (with mini-batching), composite terms, and maxima of
smooth functions; plus a batch-size planner and a seeded experiment harness.
"""

from .core import (
    Ball,
    Box,
    ContractError,
    FeasibleSet,
    FullSpace,
    GuaranteeViolationError,
    InvalidSetError,
    Point,
    Problem,
    Simplex,
    ToleranceNotReachedError,
    Trace,
    TraceRecord,
    UnsupportedCapabilityError,
    as_point,
    distance_sq,
    project,
    project_simplex,
)
from .model import (
    CompositeModel,
    CompositeSpec,
    LinearModel,
    MaxSmoothModel,
    MaxSmoothSpec,
    Model,
    SandwichReport,
    composite_model,
    linear_model,
    max_smooth_model,
    verify_model_sandwich,
)
from .oracle import GradOracle, NoiseSpec, subgaussian_moment_check
from .planner import Plan, plan
from .problems import (
    ProblemInstance,
    build_instance,
    gen_problem,
    make_lasso,
    make_least_squares,
    make_max_quadratics,
    make_quadratic,
    power_iteration,
)
from .rates import RateFit, estimate_rate
from .solver import (
    SolverStepError,
    a_sequence,
    alpha_next,
    run_fgm,
    run_gm,
    run_sgd_small_step,
)
from .subproblem import (
    L1,
    CompositeTerm,
    IndicatorOfQ,
    ProxTask,
    Zero,
    dual_simplex_ascent,
    solve_prox,
)

__version__ = "0.1.0"
