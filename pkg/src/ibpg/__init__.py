"""Inertial Bregman proximal gradient (iBPG) for nonconvex composite
minimization under relative smoothness, with every descent inequality the
method guarantees exposed as a runtime diagnostic."""

from .kernels import (
    Kernel,
    DimensionMismatchError,
    bregman_distance,
    eval_kernel,
    grad_inverse,
)
from .problems import (
    CompositeProblem,
    ConfigurationError,
    LeastSquares,
    NonsmoothPart,
    QuadraticInverse,
    bregman_prox,
    eval_nonsmooth,
    eval_smooth,
    random_least_squares,
    random_quadratic_inverse,
    smad_constant,
    validate_problem,
)
from .solver import (
    DivergenceError,
    InfeasibleParametersError,
    ParameterSchedule,
    ParameterWindow,
    RunResult,
    SolverState,
    StoppingRule,
    TraceRecord,
    default_schedule,
    ibpg_step,
    lyapunov,
    parameter_window,
    run,
    stationarity_residual,
    validate_parameters,
    write_trace_csv,
)
from .diagnostics import (
    DiagnosticReport,
    FiniteLengthReport,
    certify_smad,
    check_descent,
    check_rate_bound,
    finite_length_report,
)
from .oracle import (
    GridSpec,
    fd_gradient,
    prox_oracle,
    reference_solution,
)

__all__ = [
    "Kernel",
    "DimensionMismatchError",
    "bregman_distance",
    "eval_kernel",
    "grad_inverse",
    "CompositeProblem",
    "ConfigurationError",
    "LeastSquares",
    "NonsmoothPart",
    "QuadraticInverse",
    "bregman_prox",
    "eval_nonsmooth",
    "eval_smooth",
    "random_least_squares",
    "random_quadratic_inverse",
    "smad_constant",
    "validate_problem",
    "DivergenceError",
    "InfeasibleParametersError",
    "ParameterSchedule",
    "ParameterWindow",
    "RunResult",
    "SolverState",
    "StoppingRule",
    "TraceRecord",
    "default_schedule",
    "ibpg_step",
    "lyapunov",
    "parameter_window",
    "run",
    "stationarity_residual",
    "validate_parameters",
    "write_trace_csv",
    "DiagnosticReport",
    "FiniteLengthReport",
    "certify_smad",
    "check_descent",
    "check_rate_bound",
    "finite_length_report",
    "GridSpec",
    "fd_gradient",
    "prox_oracle",
    "reference_solution",
]

__version__ = "0.1.0"
