"""The inertial Bregman proximal gradient iteration and its trace bookkeeping.

Each step solves

    x_next = argmin_x { lam_k*g(x) + <x, lam_k*grad f(x_k) - beta_k*(x_k - x_prev)> + D_h(x, x_k) }

which after dropping constants is the Bregman prox of g at
p = grad h(x_k) - lam_k*grad f(x_k) + beta_k*(x_k - x_prev).  With beta = 0 the
method is plain Bregman proximal gradient; with the quadratic kernel it is the
classical inertial (heavy-ball) proximal gradient update.

Descent is monitored through the merit value

    H_k = Psi(x_k) + M * D_h(x_k, x_prev)

which is nonincreasing whenever M lies in the window
[beta_max/(lambda_min*sigma), 1/lambda_max - L - beta_max/(sigma*lambda_min)].
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .kernels import Kernel, bregman_distance, eval_kernel
from .problems import CompositeProblem, bregman_prox, eval_smooth


class InfeasibleParametersError(ValueError):
    """A step-size/inertia schedule violates the descent conditions."""


class DivergenceError(RuntimeError):
    """Non-finite values encountered; carries the trace up to the failure."""

    def __init__(self, message: str, records: list["TraceRecord"]):
        super().__init__(message)
        self.records = records


def _rule_to_tuple(rule) -> tuple[float, ...]:
    if np.isscalar(rule):
        return (float(rule),)
    vals = tuple(float(v) for v in rule)
    if not vals:
        raise ValueError("an explicit parameter sequence must be nonempty")
    return vals


@dataclass(frozen=True)
class ParameterSchedule:
    """Step sizes lam_k and inertia weights beta_k, plus the merit weight M.

    ``lambdas`` and ``betas`` are each a constant or an explicit sequence;
    an explicit sequence holds its last value beyond its end, so the envelopes
    (inf/sup over k) are the min/max of the entries.  ``M`` may be left None
    and is then resolved to the top of the feasible window at validation time.
    """

    lambdas: tuple[float, ...]
    betas: tuple[float, ...]
    M: float | None = None

    def __init__(self, lambdas, betas, M: float | None = None):
        object.__setattr__(self, "lambdas", _rule_to_tuple(lambdas))
        object.__setattr__(self, "betas", _rule_to_tuple(betas))
        object.__setattr__(self, "M", None if M is None else float(M))

    def lambda_at(self, k: int) -> float:
        return self.lambdas[min(k, len(self.lambdas) - 1)]

    def beta_at(self, k: int) -> float:
        return self.betas[min(k, len(self.betas) - 1)]

    @property
    def lambda_min(self) -> float:
        return min(self.lambdas)

    @property
    def lambda_max(self) -> float:
        return max(self.lambdas)

    @property
    def beta_max(self) -> float:
        return max(self.betas)


def default_schedule(L: float, sigma: float = 1.0, lambda_frac: float = 0.99,
                     beta_frac: float = 0.9, M: float | None = None) -> ParameterSchedule:
    """Constant schedule sitting strictly inside the feasible region.

    lam = lambda_frac / L and beta = beta_frac * (sigma/2) * (1 - lam*L), i.e.
    a fraction of the strict-feasibility bound for constant steps.
    """
    if L <= 0 or sigma <= 0:
        raise ValueError("L and sigma must be positive")
    if not 0 < lambda_frac <= 1 or not 0 <= beta_frac < 1:
        raise ValueError("need 0 < lambda_frac <= 1 and 0 <= beta_frac < 1")
    lam = lambda_frac / L
    beta = beta_frac * 0.5 * sigma * (1.0 - lam * L)
    return ParameterSchedule(lam, beta, M)


@dataclass(frozen=True)
class ParameterWindow:
    """The admissible interval [m_lo, m_hi] for the merit weight M."""

    m_lo: float
    m_hi: float

    @property
    def feasible(self) -> bool:
        return self.m_lo <= self.m_hi

    @property
    def strictly_feasible(self) -> bool:
        return self.m_lo < self.m_hi

    @property
    def default_m(self) -> float:
        return self.m_hi


def parameter_window(L: float, sigma: float, schedule: ParameterSchedule) -> ParameterWindow:
    """The M-window [beta_max/(lambda_min*sigma), 1/lambda_max - L - beta_max/(sigma*lambda_min)].

    Never raises on an empty window; use :func:`validate_parameters` for the
    raising form.
    """
    lam_min, lam_max = schedule.lambda_min, schedule.lambda_max
    beta_max = schedule.beta_max
    m_lo = beta_max / (lam_min * sigma)
    m_hi = 1.0 / lam_max - L - beta_max / (sigma * lam_min)
    return ParameterWindow(m_lo, m_hi)


def validate_parameters(L: float, sigma: float, schedule: ParameterSchedule) -> ParameterWindow:
    """Check the schedule against the descent conditions and return the M-window.

    Raises :class:`InfeasibleParametersError` naming the violated inequality:
    the step-size cap 0 < lam_k <= 1/L, the inertia cap 0 <= beta_k < 1, the
    window condition beta_max < (sigma/2)*(lambda_min/lambda_max - lambda_min*L)
    required for a nonempty open window, or an explicit M falling outside
    [m_lo, m_hi].
    """
    if L <= 0:
        raise InfeasibleParametersError(f"need L > 0, got L={L:g}")
    if sigma <= 0:
        raise InfeasibleParametersError(f"need sigma > 0, got sigma={sigma:g}")
    if schedule.lambda_min <= 0:
        raise InfeasibleParametersError(
            f"violated 0 < lambda_k: lambda_min={schedule.lambda_min:g}"
        )
    if schedule.lambda_max > 1.0 / L * (1.0 + 1e-12):
        raise InfeasibleParametersError(
            f"violated lambda_k <= 1/L: lambda_max={schedule.lambda_max:g} > 1/L={1.0 / L:g}"
        )
    if not 0.0 <= schedule.beta_max < 1.0 or min(schedule.betas) < 0.0:
        raise InfeasibleParametersError(
            f"violated 0 <= beta_k < 1: beta range [{min(schedule.betas):g}, {schedule.beta_max:g}]"
        )
    window = parameter_window(L, sigma, schedule)
    if not window.feasible:
        bound = 0.5 * sigma * (schedule.lambda_min / schedule.lambda_max
                               - schedule.lambda_min * L)
        raise InfeasibleParametersError(
            "empty M-window: violated beta_max < (sigma/2)*(lambda_min/lambda_max - lambda_min*L) "
            f"(beta_max={schedule.beta_max:g}, bound={bound:g}; "
            f"window [{window.m_lo:g}, {window.m_hi:g}])"
        )
    if schedule.M is not None:
        slack = 1e-12 * max(1.0, abs(window.m_hi))
        if not (window.m_lo - slack <= schedule.M <= window.m_hi + slack):
            raise InfeasibleParametersError(
                f"M={schedule.M:g} outside the feasible window "
                f"[{window.m_lo:g}, {window.m_hi:g}]"
            )
    return window


@dataclass(frozen=True)
class SolverState:
    """Iterate pair (x_k, x_{k-1}); at k = 0 the two coincide."""

    k: int
    x_curr: np.ndarray
    x_prev: np.ndarray


@dataclass(frozen=True)
class TraceRecord:
    """Per-iterate measurements.

    ``lambda_k``/``beta_k`` are the parameters of the step *leaving* iterate k
    (forward convention), so the residual recorded at k was built from the
    previous record's parameters.  At k = 0 all difference-based fields are
    trivially zero because x_0 = x_{-1}.
    """

    k: int
    psi: float
    lyapunov: float
    bregman_step: float
    step_norm: float
    residual_norm: float
    lambda_k: float
    beta_k: float


TRACE_FIELDS = ("k", "psi", "lyapunov", "bregman_step", "step_norm",
                "residual_norm", "lambda", "beta")


def lyapunov(psi_k: float, dh_k: float, M: float) -> float:
    """Merit value Psi(x_k) + M * D_h(x_k, x_{k-1})."""
    return psi_k + M * dh_k


def ibpg_step(state: SolverState, problem: CompositeProblem, lambda_k: float,
              beta_k: float) -> SolverState:
    """One inertial Bregman proximal gradient update."""
    x = state.x_curr
    _, grad_f = eval_smooth(problem.f, x)
    _, grad_h = eval_kernel(problem.h, x)
    p = grad_h - lambda_k * grad_f + beta_k * (x - state.x_prev)
    x_next = bregman_prox(problem.g, problem.h, p, lambda_k)
    return SolverState(state.k + 1, x_next, x)


def stationarity_residual(x_k: np.ndarray, x_km1: np.ndarray, x_km2: np.ndarray,
                          lambda_km1: float, beta_km1: float,
                          problem: CompositeProblem) -> np.ndarray:
    """An explicit subgradient of Psi at x_k, built from the optimality
    condition of the step that produced x_k:

        v = grad f(x_k) - grad f(x_km1) + (beta/lam)*(x_km1 - x_km2)
            - (1/lam)*(grad h(x_k) - grad h(x_km1))

    ||v|| is the solver's convergence measure; v = 0 certifies criticality.
    """
    _, gf_k = eval_smooth(problem.f, x_k)
    _, gf_km1 = eval_smooth(problem.f, x_km1)
    _, gh_k = eval_kernel(problem.h, x_k)
    _, gh_km1 = eval_kernel(problem.h, x_km1)
    return (gf_k - gf_km1
            + (beta_km1 / lambda_km1) * (x_km1 - x_km2)
            - (gh_k - gh_km1) / lambda_km1)


@dataclass(frozen=True)
class StoppingRule:
    max_iter: int = 1000
    residual_tol: float = 1e-8
    step_tol: float = 0.0


@dataclass
class RunResult:
    records: list[TraceRecord]
    termination_reason: str
    state: SolverState
    M: float
    window: ParameterWindow
    iterates: list[np.ndarray] | None = field(default=None)

    @property
    def x_final(self) -> np.ndarray:
        return self.state.x_curr

    @property
    def final(self) -> TraceRecord:
        return self.records[-1]


def run(problem: CompositeProblem, schedule: ParameterSchedule, x0: np.ndarray,
        stop: StoppingRule | None = None, validate: bool = True,
        keep_iterates: bool = False) -> RunResult:
    """Iterate from (x0, x0) until a stopping criterion fires.

    Produces one :class:`TraceRecord` per iterate (including k = 0) and reports
    which criterion terminated the run: "residual_tol", "step_tol", or
    "max_iter".  ``validate=False`` skips the feasibility gate, which is useful
    for falsification experiments; the merit weight then still defaults to the
    (possibly meaningless) window top unless set explicitly.
    """
    stop = stop or StoppingRule()
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    L = problem.smad_L
    sigma = problem.h.sigma
    if validate:
        window = validate_parameters(L, sigma, schedule)
    else:
        window = parameter_window(L, sigma, schedule)
    M = schedule.M if schedule.M is not None else window.default_m

    state = SolverState(0, x0.copy(), x0.copy())
    with np.errstate(over="ignore", invalid="ignore"):
        psi0 = problem.psi(x0)
        if not np.isfinite(psi0):
            raise DivergenceError("Psi(x0) is not finite", [])
        records = [TraceRecord(0, psi0, lyapunov(psi0, 0.0, M), 0.0, 0.0, 0.0,
                               schedule.lambda_at(0), schedule.beta_at(0))]
        iterates = [x0.copy()] if keep_iterates else None

        reason = "max_iter"
        for k in range(stop.max_iter):
            lam, beta = schedule.lambda_at(k), schedule.beta_at(k)
            new_state = ibpg_step(state, problem, lam, beta)
            x_next = new_state.x_curr
            psi = problem.psi(x_next)
            dh = bregman_distance(problem.h, x_next, state.x_curr)
            step_norm = float(np.linalg.norm(x_next - state.x_curr))
            v = stationarity_residual(x_next, state.x_curr, state.x_prev, lam, beta,
                                      problem)
            res_norm = float(np.linalg.norm(v))
            if not (np.all(np.isfinite(x_next)) and np.isfinite(psi)
                    and np.isfinite(dh) and np.isfinite(res_norm)):
                raise DivergenceError(f"non-finite values at iteration {k + 1}", records)
            records.append(TraceRecord(k + 1, psi, lyapunov(psi, dh, M), dh, step_norm,
                                       res_norm, schedule.lambda_at(k + 1),
                                       schedule.beta_at(k + 1)))
            if iterates is not None:
                iterates.append(x_next.copy())
            state = new_state
            if res_norm <= stop.residual_tol:
                reason = "residual_tol"
                break
            if step_norm <= stop.step_tol:
                reason = "step_tol"
                break
    return RunResult(records, reason, state, M, window, iterates)


def write_trace_csv(records: list[TraceRecord], path) -> None:
    """Serialize a trace; floats use repr so identical runs are byte-identical."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_FIELDS)
        for r in records:
            vals = (r.psi, r.lyapunov, r.bregman_step, r.step_norm,
                    r.residual_norm, r.lambda_k, r.beta_k)
            for v in vals:
                if not np.isfinite(v):
                    raise DivergenceError(f"non-finite value in trace row k={r.k}", records)
            writer.writerow([r.k] + [repr(float(v)) for v in vals])
