"""Independent brute-force references for validating the closed forms.

Nothing here calls the kernel or prox routines under test: gradients, kernel
values, thresholds, and the radial cubic are recomputed locally (the cubic via
numpy's companion-matrix root finder), so agreement between the two paths is
evidence rather than tautology.  Reference solutions are criticality
references, not certified global optima, except for the convex lasso
reduction where sign enumeration is exact.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .kernels import QUADRATIC, QUARTIC, Kernel
from .problems import L0, L1, ZERO, CompositeProblem, NonsmoothPart


class GridBoundaryError(RuntimeError):
    """The grid incumbent sits on the search boundary; enlarge the bounds."""


class OracleBudgetError(RuntimeError):
    """The requested enumeration exceeds the method's budget."""


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned search box with a fixed number of points per dimension."""

    lower: np.ndarray
    upper: np.ndarray
    points_per_dim: int = 41

    def __init__(self, lower, upper, points_per_dim: int = 41):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape or np.any(lower >= upper):
            raise ValueError("need elementwise lower < upper")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValueError("bounds must be finite")
        if points_per_dim < 3:
            raise ValueError("points_per_dim must be >= 3")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "points_per_dim", int(points_per_dim))

    @classmethod
    def cube(cls, half_width: float, d: int, points_per_dim: int = 41) -> "GridSpec":
        return cls(-half_width * np.ones(d), half_width * np.ones(d), points_per_dim)


def fd_gradient(f, x: np.ndarray, epsilon: float = 1e-6) -> np.ndarray:
    """Central-difference gradient (f(x + eps*e_i) - f(x - eps*e_i)) / (2*eps)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    e = np.zeros_like(x)
    for i in range(x.size):
        e[i] = epsilon
        grad[i] = (f(x + e) - f(x - e)) / (2.0 * epsilon)
        e[i] = 0.0
    return grad


# ---------------------------------------------------------------------------
# Local (oracle-side) formulas


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _hard(v, t):
    return np.where(0.5 * v * v > t, v, 0.0)


def _cubic_scale(norm_sq: float) -> float:
    """Positive root of norm_sq*t^3 + t - 1 via np.roots, Newton-polished."""
    rho = float(norm_sq)
    if rho == 0.0:
        return 1.0
    roots = np.roots([rho, 0.0, 1.0, -1.0])
    real = roots[np.abs(roots.imag) < 1e-8 * (1.0 + np.abs(roots.real))].real
    t = float(real[(real > 0)][0])
    for _ in range(3):
        t -= (rho * t**3 + t - 1.0) / (3.0 * rho * t * t + 1.0)
    return t


def _grad_inverse_local(kernel_kind: str, p: np.ndarray) -> np.ndarray:
    if kernel_kind == QUADRATIC:
        return np.array(p, dtype=float)
    return _cubic_scale(float(p @ p)) * p


def _prox_local(g: NonsmoothPart, kernel_kind: str, p: np.ndarray, lam: float) -> np.ndarray:
    if g.kind == ZERO:
        return _grad_inverse_local(kernel_kind, p)
    level = lam * g.weight
    if g.kind == L1:
        q = _soft(p, level)
        if kernel_kind == QUADRATIC:
            return q
        return _cubic_scale(float(q @ q)) * q
    return _hard(p, level)


def _kernel_values(kernel_kind: str, X: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,ij->i", X, X)
    if kernel_kind == QUADRATIC:
        return 0.5 * sq
    return 0.25 * sq * sq + 0.5 * sq


def _penalty_values(g: NonsmoothPart, X: np.ndarray) -> np.ndarray:
    if g.kind == ZERO:
        return np.zeros(X.shape[0])
    if g.kind == L1:
        return g.weight * np.sum(np.abs(X), axis=1)
    return g.weight * np.count_nonzero(X, axis=1).astype(float)


def _grad_f_local(problem: CompositeProblem, x: np.ndarray) -> np.ndarray:
    A, b = problem.f.A, problem.f.b
    if problem.f.kind == "least_squares":
        return (x @ A.T - b) @ A
    s = x @ A.T
    return ((s * s - b) * s) @ A


def _psi_local(problem: CompositeProblem, x: np.ndarray) -> float:
    A, b = problem.f.A, problem.f.b
    if problem.f.kind == "least_squares":
        r = x @ A.T - b
        fval = 0.5 * float(r @ r)
    else:
        s = x @ A.T
        r = s * s - b
        fval = 0.25 * float(r @ r)
    return fval + float(_penalty_values(problem.g, x[None, :])[0])


def _smad_L_local(problem: CompositeProblem) -> float:
    A, b = problem.f.A, problem.f.b
    if problem.f.kind == "least_squares":
        return float(np.linalg.eigvalsh(A.T @ A)[-1])
    row_sq = np.einsum("ij,ij->i", A, A)
    return float(np.sum(3.0 * row_sq * row_sq + row_sq * np.abs(b)))


# ---------------------------------------------------------------------------
# Grid search for the prox subproblem


def _prox_objective(g: NonsmoothPart, kernel_kind: str, p: np.ndarray,
                    lam: float, X: np.ndarray) -> np.ndarray:
    # Snap roundoff-level coordinates to exact zero so the counting penalty
    # sees its lower-semicontinuous value there; zoomed grids otherwise miss
    # the zero branch by one ulp.
    X = np.where(np.abs(X) < 1e-12, 0.0, X)
    return lam * _penalty_values(g, X) + _kernel_values(kernel_kind, X) - X @ p


def _grid_minimize(obj, lower, upper, n, refinements=2):
    """Exhaustive mesh search plus local zooms; returns (x, final_cell)."""
    d = lower.size
    lo, hi = lower.copy(), upper.copy()
    incumbent = None
    cell = (hi - lo) / (n - 1)
    for round_idx in range(refinements + 1):
        cell = (hi - lo) / (n - 1)
        axes = [np.linspace(lo[i], hi[i], n) for i in range(d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        X = np.stack([m.ravel() for m in mesh], axis=1)
        vals = obj(X)
        best = int(np.argmin(vals))
        incumbent = X[best]
        idx = np.unravel_index(best, (n,) * d)
        if round_idx == 0:
            if any(j == 0 or j == n - 1 for j in idx):
                raise GridBoundaryError(
                    f"incumbent {incumbent} on the grid boundary; enlarge bounds"
                )
        if round_idx < refinements:
            half = np.maximum((hi - lo) / 20.0, cell)
            lo, hi = incumbent - half, incumbent + half
    return incumbent, cell


def prox_oracle(g: NonsmoothPart, h: Kernel, p: np.ndarray, lam: float,
                grid: GridSpec | None = None,
                method: str = "auto") -> tuple[np.ndarray, float]:
    """Brute-force minimizer of lam*g(x) + h(x) - <p, x>.

    Full mesh search (d <= 3) followed by two zoom rounds around the incumbent;
    for the quartic kernel the problem may instead be reduced to a 1-d search
    over the radius along the thresholded direction, which works in any
    dimension.  Returns (x, cell_diameter): the closed form is expected to
    agree within one refined grid cell.
    """
    p = np.asarray(p, dtype=float)
    d = p.size
    if method == "auto":
        method = "radial" if (h.kind == QUARTIC and d > 3) else "grid"

    if method == "grid":
        if d > 3:
            raise OracleBudgetError("full grid search supports d <= 3")
        if grid is None:
            half = 2.0 * float(np.linalg.norm(p)) + 1.0
            grid = GridSpec.cube(half, d)
        if grid.lower.size != d:
            raise ValueError("grid dimension does not match p")
        x, cell = _grid_minimize(
            lambda X: _prox_objective(g, h.kind, p, lam, X),
            grid.lower, grid.upper, grid.points_per_dim,
        )
        x = np.where(np.abs(x) < 1e-12, 0.0, x)
        return x, float(np.linalg.norm(cell))

    if method != "radial":
        raise ValueError(f"unknown method {method!r}")
    if h.kind != QUARTIC or g.kind == L0:
        raise ValueError("radial reduction applies to the quartic kernel with g zero or l1")
    q = p if g.kind == ZERO else _soft(p, lam * g.weight)
    qn = float(np.linalg.norm(q))
    if qn == 0.0:
        return np.zeros(d), 0.0
    u = q / qn
    n = grid.points_per_dim if grid is not None else 1001
    s_max = 1.0 + float(np.linalg.norm(p))

    def radial_obj(S):
        return _prox_objective(g, h.kind, p, lam, S * u[None, :])

    s, cell = _grid_minimize(radial_obj, np.array([0.0]), np.array([s_max]), n)
    s = max(float(s[0]), 0.0)
    return s * u, float(cell[0])


# ---------------------------------------------------------------------------
# Reference solutions and reference iterations


def sign_enumeration_lasso(A: np.ndarray, b: np.ndarray, weight: float) -> tuple[np.ndarray, float]:
    """Exact lasso solution by enumerating sign patterns (d <= 8).

    For every pattern s in {-1, 0, +1}^d the stationarity system on the
    support, A_S^T A_S x_S = A_S^T b - weight*s_S, produces one candidate; the
    candidate with the lowest true objective is the optimum, since the pattern
    of the true solution is among them and every candidate is a feasible point.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    d = A.shape[1]
    if d > 8:
        raise OracleBudgetError(f"sign enumeration over 3^{d} patterns exceeds budget (d <= 8)")

    def objective(x):
        r = A @ x - b
        return 0.5 * float(r @ r) + weight * float(np.sum(np.abs(x)))

    best_x = np.zeros(d)
    best_val = objective(best_x)
    for pattern in itertools.product((-1.0, 0.0, 1.0), repeat=d):
        s = np.array(pattern)
        support = np.flatnonzero(s)
        if support.size == 0:
            continue
        As = A[:, support]
        try:
            xs = np.linalg.solve(As.T @ As, As.T @ b - weight * s[support])
        except np.linalg.LinAlgError:
            continue
        x = np.zeros(d)
        x[support] = xs
        val = objective(x)
        if val < best_val:
            best_val = val
            best_x = x
    return best_x, best_val


def bpg_reference_iterates(problem: CompositeProblem, x0: np.ndarray, lam: float,
                           n_steps: int, residual_tol: float = 0.0) -> np.ndarray:
    """Plain (no-inertia) Bregman proximal gradient, coded from scratch.

    Returns the iterates as rows (the starting point included); stops early if
    an independent residual measure drops below ``residual_tol``.
    """
    kind = problem.h.kind
    x = np.asarray(x0, dtype=float).copy()
    out = [x.copy()]
    for _ in range(n_steps):
        gf = _grad_f_local(problem, x)
        gh = (x if kind == QUADRATIC else (float(x @ x) + 1.0) * x)
        x_new = _prox_local(problem.g, kind, gh - lam * gf, lam)
        out.append(x_new.copy())
        gf_new = _grad_f_local(problem, x_new)
        gh_new = (x_new if kind == QUADRATIC else (float(x_new @ x_new) + 1.0) * x_new)
        v = gf_new - gf - (gh_new - gh) / lam
        x = x_new
        if residual_tol > 0.0 and float(np.linalg.norm(v)) <= residual_tol:
            break
    return np.array(out)


def inertial_proxgrad_reference(A: np.ndarray, b: np.ndarray, weight: float,
                                x0: np.ndarray, lam: float, beta: float,
                                n_steps: int) -> np.ndarray:
    """Heavy-ball proximal gradient for 0.5*||Ax-b||^2 + weight*||x||_1.

    The classical Euclidean update x+ = soft(x - lam*grad f(x) + beta*(x - x_prev)),
    written directly against the data; used as the reduction reference for the
    quadratic-kernel solver.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    x = np.asarray(x0, dtype=float).copy()
    x_prev = x.copy()
    out = [x.copy()]
    for _ in range(n_steps):
        grad = A.T @ (A @ x - b)
        x_new = _soft(x - lam * grad + beta * (x - x_prev), lam * weight)
        x_prev, x = x, x_new
        out.append(x.copy())
    return np.array(out)


def reference_solution(problem: CompositeProblem, method: str,
                       x0: np.ndarray | None = None, seed: int = 0,
                       max_iter: int = 1_000_000,
                       residual_tol: float = 1e-12) -> tuple[np.ndarray, float]:
    """Best-point references for Psi.

    ``sign_enumeration`` is exact for the convex lasso configuration
    (quadratic kernel, l1 penalty, least-squares fit, d <= 8).  ``long_run``
    runs the independent no-inertia iteration with lam = 0.5/L until the
    residual tolerance or the iteration budget; on a nonconvex objective the
    result is a critical-point reference only, not a certified optimum.
    """
    if method == "sign_enumeration":
        if (problem.h.kind != QUADRATIC or problem.g.kind != L1
                or problem.f.kind != "least_squares"):
            raise ValueError("sign_enumeration needs quadratic kernel, l1 penalty, least squares")
        return sign_enumeration_lasso(problem.f.A, problem.f.b, problem.g.weight)
    if method != "long_run":
        raise ValueError(f"unknown method {method!r}")
    d = problem.dimension
    if x0 is None:
        x0 = np.random.default_rng(seed).standard_normal(d)
    lam = 0.5 / _smad_L_local(problem)
    iterates = bpg_reference_iterates(problem, x0, lam, max_iter, residual_tol)
    x = iterates[-1]
    return x, _psi_local(problem, x)
