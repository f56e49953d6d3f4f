"""Runtime checks of the descent and rate inequalities along solver traces.

Every check is a pure function of its inputs and reports the most negative
margin it observed, so a re-run on the same trace reproduces the same report.
None of these certify anything beyond the sampled points or the recorded
trace; they are executable counterparts of the convergence theory, not proofs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .kernels import Kernel, bregman_distance_many
from .problems import SmoothPart
from .solver import ParameterSchedule, TraceRecord, parameter_window


@dataclass(frozen=True)
class DiagnosticReport:
    """Outcome of one check: pass/fail plus the worst slack and where it occurred.

    ``worst_slack`` is the most negative margin over all inequalities tested;
    the check passes iff worst_slack >= -tolerance.  ``location`` is the
    iteration or sample index attaining the worst case.
    """

    check_name: str
    passed: bool
    worst_slack: float
    location: int
    tolerance: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "check_name": self.check_name,
            "passed": bool(self.passed),
            "worst_slack": float(self.worst_slack),
            "location": int(self.location),
            "tolerance": float(self.tolerance),
            "details": self.details,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _sample_ball(rng, n: int, d: int, radius: float) -> np.ndarray:
    u = rng.standard_normal((n, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / d)
    return u * r[:, None]


def certify_smad(f: SmoothPart, h: Kernel, L: float, n_samples: int = 100_000,
                 radius: float = 3.0, seed: int = 0) -> DiagnosticReport:
    """Sampled certification of f(x) - f(y) - <grad f(y), x - y> <= L*D_h(x, y).

    Pairs are drawn uniformly in the ball of the given radius, with a third of
    the draws rescaled by 10 and another third by 100 to probe the
    non-globally-Lipschitz regime far from the origin.  The margin per pair is
    L*D_h - df with a relative allowance of 1e-9*L*D_h folded in, so the check
    passes iff df <= L*D_h + 1e-9*(1 + L*D_h) everywhere.  The empirically
    minimal constant max(df/D_h) is reported for comparison against L.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    X = _sample_ball(rng, n_samples, h.dimension, radius)
    Y = _sample_ball(rng, n_samples, h.dimension, radius)
    scales = np.ones(n_samples)
    scales[1::3] = 10.0
    scales[2::3] = 100.0
    X *= scales[:, None]
    Y *= scales[:, None]

    fx = f.value_many(X)
    fy = f.value_many(Y)
    gy = f.grad_many(Y)
    df = fx - fy - np.einsum("ij,ij->i", gy, X - Y)
    dh = bregman_distance_many(h, X, Y)

    tol = 1e-9
    margins = L * dh * (1.0 + tol) - df
    worst = int(np.argmin(margins))
    usable = dh > 1e-12
    empirical_L = float(np.max(df[usable] / dh[usable])) if np.any(usable) else 0.0
    return DiagnosticReport(
        check_name="smad_certification",
        passed=bool(margins[worst] >= -tol),
        worst_slack=float(margins[worst]),
        location=worst,
        tolerance=tol,
        details={
            "declared_L": float(L),
            "empirical_L": empirical_L,
            "n_samples": n_samples,
            "radius": radius,
            "seed": seed,
        },
    )


def check_descent(trace: list[TraceRecord], M: float, L: float, sigma: float,
                  schedule: ParameterSchedule) -> DiagnosticReport:
    """Per-step verification of the descent inequalities along a trace.

    Three families are checked at absolute tolerance 1e-9, using the recorded
    per-step lam_k, beta_k:

    * the raw one-step estimate
        Psi_{k+1} + (1/lam - L - beta/(sigma*lam)) * D_{k+1}
          <= Psi_k + (beta/(sigma*lam)) * D_k,
    * its merit-sequence form
        H_{k+1} - H_k <= [M - (1/lam - L - beta/(sigma*lam))]*D_{k+1}
                         - (M - beta/(sigma*lam))*D_k,
    * the sufficient-decrease form H_{k+1} + a*||x_k - x_{k-1}||^2 <= H_k with
      a = (sigma/2)*(M - m_lo), checked whenever a >= 0 (at M = m_hi this is
      the largest admissible constant, (sigma/2)*(m_hi - m_lo); at a = 0 it
      degenerates to plain merit monotonicity, the part that can actually
      break on an infeasible schedule).

    Here D_k = D_h(x_k, x_{k-1}) is the recorded ``bregman_step``.
    """
    if len(trace) < 2:
        raise ValueError("trace too short: need at least 2 records")
    tol = 1e-9
    window = parameter_window(L, sigma, schedule)
    a = 0.5 * sigma * (M - window.m_lo)

    worst = np.inf
    worst_k = 0
    family_worst = {"one_step": np.inf, "merit": np.inf, "sufficient_decrease": np.inf}
    for prev, cur in zip(trace[:-1], trace[1:]):
        lam, beta = prev.lambda_k, prev.beta_k
        coef = 1.0 / lam - L - beta / (sigma * lam)
        inertia = beta / (sigma * lam)

        s1 = (prev.psi + inertia * prev.bregman_step
              - cur.psi - coef * cur.bregman_step)
        s2 = ((M - coef) * cur.bregman_step - (M - inertia) * prev.bregman_step
              - (cur.lyapunov - prev.lyapunov))
        slacks = [("one_step", s1), ("merit", s2)]
        if a >= 0.0:
            s3 = prev.lyapunov - cur.lyapunov - a * prev.step_norm ** 2
            slacks.append(("sufficient_decrease", s3))
        for name, s in slacks:
            family_worst[name] = min(family_worst[name], s)
            if s < worst:
                worst = s
                worst_k = prev.k
    details = {
        "families": {k: (None if not np.isfinite(v) else float(v))
                     for k, v in family_worst.items()},
        "sufficient_decrease_constant": float(a),
        "M": float(M),
        "window": [window.m_lo, window.m_hi],
    }
    return DiagnosticReport("descent", bool(worst >= -tol), float(worst),
                            worst_k, tol, details)


class InfeasibleRateConstantError(ValueError):
    """The telescoping constant is nonpositive for the given parameters."""


def check_rate_bound(trace: list[TraceRecord], M: float, sigma: float,
                     lambda_min: float, beta_max: float) -> DiagnosticReport:
    """Telescoped sufficient-decrease bound behind the O(1/K) rate.

    For every K the trace covers,

        min_{1<=k<=K} ||x_k - x_{k-1}||^2  <=  (H_1 - H_{K+1}) / (K*c),

    with c = (sigma/2)*(M - beta_max/(lambda_min*sigma)), the constant the
    per-step merit decrease actually telescopes to.  Checked at absolute
    tolerance 1e-12; requires strict feasibility, i.e. c > 0.
    """
    if len(trace) < 3:
        raise ValueError("trace too short: need at least 3 records (K >= 1)")
    c = 0.5 * sigma * (M - beta_max / (lambda_min * sigma))
    if c <= 0.0:
        raise InfeasibleRateConstantError(
            f"rate constant c = (sigma/2)*(M - beta_max/(lambda_min*sigma)) = {c:g} <= 0; "
            "need a strictly feasible schedule"
        )
    tol = 1e-12
    h1 = trace[1].lyapunov
    running_min = np.inf
    worst = np.inf
    worst_K = 1
    for K in range(1, len(trace) - 1):
        running_min = min(running_min, trace[K].step_norm ** 2)
        bound = (h1 - trace[K + 1].lyapunov) / (K * c)
        slack = bound - running_min
        if slack < worst:
            worst = slack
            worst_K = K
    return DiagnosticReport(
        "rate_bound", bool(worst >= -tol), float(worst), worst_K, tol,
        details={"c": float(c), "K_max": len(trace) - 2},
    )


@dataclass(frozen=True)
class FiniteLengthReport:
    """Trajectory-length summary: a proxy for the finite-length property.

    ``tail_slope`` is the least-squares slope of log step norms against the
    iteration index over the tail of the trace (a geometric trace with ratio
    1/2 gives -log 2 per step).  ``h2_constant`` is the smallest b with
    ||v_k|| <= (b/2)*(||x_k - x_{k-1}|| + ||x_{k-1} - x_{k-2}||) along the
    trace; it always exists on bounded traces but its value is
    instance-dependent, so it is reported, never gated.
    """

    cumulative_length: float
    tail_slope: float
    h2_constant: float

    def to_dict(self) -> dict:
        return {
            "cumulative_length": float(self.cumulative_length),
            "tail_slope": float(self.tail_slope),
            "h2_constant": float(self.h2_constant),
        }


def finite_length_report(trace: list[TraceRecord]) -> FiniteLengthReport:
    if len(trace) < 3:
        raise ValueError("trace too short: need at least 3 records")
    steps = np.array([r.step_norm for r in trace])
    cumulative = float(np.sum(steps))

    tail = steps[len(steps) // 2:]
    ks = np.arange(len(steps) - len(tail), len(steps), dtype=float)
    positive = tail > 0
    if np.count_nonzero(positive) >= 2:
        slope = float(np.polyfit(ks[positive], np.log(tail[positive]), 1)[0])
    else:
        slope = 0.0

    b = 0.0
    for k in range(2, len(trace)):
        denom = trace[k].step_norm + trace[k - 1].step_norm
        if denom > 0.0:
            b = max(b, 2.0 * trace[k].residual_norm / denom)
    return FiniteLengthReport(cumulative, slope, b)
