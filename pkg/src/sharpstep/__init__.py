"""Projected subgradient methods with local linear convergence for sharp
weakly convex problems: solvers, problem generators, parameter estimators,
and a verification harness."""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND
from .numerics import (
    RNG_ALGORITHM,
    RNG_NORMAL_TRANSFORM,
    RngStream,
    finite_diff_grad,
    sample_gaussian,
    sample_gaussian_matrix,
    sample_uniform,
    singular_values,
)
from .problems import (
    AnalyticInstance,
    CovarianceInstance,
    CovarianceSpec,
    PhaseRetrievalInstance,
    PhaseRetrievalSpec,
    ProblemInstance,
    cov_objective,
    cov_subgradient,
    gen_cov_estimation,
    gen_phase_retrieval,
    load_instance,
    make_abs,
    make_analytic,
    make_composite,
    make_l1,
    make_quad1d,
    pr_distance,
    pr_objective,
    pr_subgradient,
    procrustes_distance,
    save_instance,
)
from .solver import (
    Constant,
    Geometric,
    OracleError,
    Polyak,
    SolveConfig,
    Trace,
    ZeroSubgradientError,
    constant_step,
    constant_step_bound,
    constant_step_threshold,
    geometric_params,
    geometric_stepsize,
    polyak_step,
    solve,
)
from .analysis import (
    BoundReport,
    CheckResult,
    ParamEstimates,
    RateFit,
    check_tube,
    estimate_L,
    estimate_params,
    estimate_sharpness,
    estimate_weak_convexity,
    fit_linear_rate,
    run_verification_battery,
    sample_near_solutions,
    verify_no_stationary,
    verify_trace_bounds,
)
