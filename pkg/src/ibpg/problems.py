"""Problem instances: smooth parts f, nonsmooth parts g, and the Bregman
proximal subproblem.

Two smooth families are shipped, each tied to the kernel that makes it
relatively smooth:

* ``LeastSquares``      f(x) = 0.5*||Ax - b||^2          paired with the quadratic kernel,
                        L = lambda_max(A^T A).
* ``QuadraticInverse``  f(x) = 0.25*sum_i (<a_i,x>^2 - b_i)^2   paired with the quartic
                        kernel, L = sum_i (3*||a_i||^4 + ||a_i||^2*|b_i|).

The quadratic inverse family has no globally Lipschitz gradient, which is the
whole point of working relative to the quartic kernel.

Nonsmooth parts are zero, a weighted l1 norm, or a weighted l0 counting
penalty; l0 is admitted only with the quadratic kernel, where the subproblem
has a closed-form hard threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .kernels import (
    QUADRATIC,
    QUARTIC,
    DimensionMismatchError,
    Kernel,
    grad_inverse,
    radial_scale,
)

ZERO = "zero"
L1 = "l1"
L0 = "l0"


class ConfigurationError(ValueError):
    """An inadmissible pairing or malformed instance configuration."""


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ConfigurationError(f"expected a 2-d matrix, got shape {A.shape}")
    return A


def _as_vector(b, m: int, name: str) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.ndim != 1 or b.shape[0] != m:
        raise ConfigurationError(f"{name} has shape {b.shape}, expected ({m},)")
    return b


@dataclass(frozen=True)
class LeastSquares:
    """f(x) = 0.5*||Ax - b||^2."""

    A: np.ndarray
    b: np.ndarray

    kind = "least_squares"
    kernel_kind = QUADRATIC

    def __post_init__(self):
        A = _as_matrix(self.A)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", _as_vector(self.b, A.shape[0], "b"))

    @property
    def dimension(self) -> int:
        return self.A.shape[1]

    def value_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        r = self.A @ x - self.b
        return 0.5 * float(r @ r), self.A.T @ r

    def value(self, x: np.ndarray) -> float:
        r = self.A @ x - self.b
        return 0.5 * float(r @ r)

    def value_many(self, X: np.ndarray) -> np.ndarray:
        R = X @ self.A.T - self.b
        return 0.5 * np.einsum("ij,ij->i", R, R)

    def grad_many(self, X: np.ndarray) -> np.ndarray:
        return (X @ self.A.T - self.b) @ self.A

    @cached_property
    def smad_L(self) -> float:
        return largest_eigenvalue_gram(self.A)


@dataclass(frozen=True)
class QuadraticInverse:
    """f(x) = 0.25*sum_i (<a_i, x>^2 - b_i)^2 with rows a_i of A."""

    A: np.ndarray
    b: np.ndarray

    kind = "quadratic_inverse"
    kernel_kind = QUARTIC

    def __post_init__(self):
        A = _as_matrix(self.A)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", _as_vector(self.b, A.shape[0], "b"))

    @property
    def dimension(self) -> int:
        return self.A.shape[1]

    def value_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        s = self.A @ x
        r = s * s - self.b
        return 0.25 * float(r @ r), (r * s) @ self.A

    def value(self, x: np.ndarray) -> float:
        s = self.A @ x
        r = s * s - self.b
        return 0.25 * float(r @ r)

    def value_many(self, X: np.ndarray) -> np.ndarray:
        S = X @ self.A.T
        R = S * S - self.b
        return 0.25 * np.einsum("ij,ij->i", R, R)

    def grad_many(self, X: np.ndarray) -> np.ndarray:
        S = X @ self.A.T
        return ((S * S - self.b) * S) @ self.A

    @cached_property
    def smad_L(self) -> float:
        row_sq = np.einsum("ij,ij->i", self.A, self.A)
        return float(np.sum(3.0 * row_sq * row_sq + row_sq * np.abs(self.b)))


SmoothPart = LeastSquares | QuadraticInverse


def largest_eigenvalue_gram(A: np.ndarray, rel_tol: float = 1e-10,
                            max_iter: int = 100_000) -> float:
    """Largest eigenvalue of A^T A by power iteration on v -> A^T (A v).

    The start vector is a fixed-seed Gaussian draw, so it has a nonzero
    component along the top eigenspace with probability one and the estimate
    is deterministic.  Converged when the Rayleigh quotient is stable to
    ``rel_tol``.
    """
    A = _as_matrix(A)
    d = A.shape[1]
    rng = np.random.default_rng(0)
    v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        lam_new = float(v @ w)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            raise ConfigurationError("A^T A is the zero matrix; no positive smad constant")
        v = w / norm_w
        if abs(lam_new - lam) <= rel_tol * max(abs(lam_new), 1e-300):
            return lam_new
        lam = lam_new
    return lam


def eval_smooth(f: SmoothPart, x: np.ndarray) -> tuple[float, np.ndarray]:
    """Return (f(x), grad f(x)) with exact closed-form gradient."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != f.dimension:
        raise DimensionMismatchError(f"x has shape {x.shape}, expected ({f.dimension},)")
    return f.value_grad(x)


def smad_constant(f: SmoothPart, h: Kernel) -> float:
    """Relative-smoothness constant L of the admissible pairing (f, h)."""
    if h.kind != f.kernel_kind:
        raise ConfigurationError(
            f"inadmissible pairing: {f.kind} requires the {f.kernel_kind} kernel, "
            f"got {h.kind}"
        )
    if h.dimension != f.dimension:
        raise DimensionMismatchError(
            f"kernel dimension {h.dimension} != problem dimension {f.dimension}"
        )
    return f.smad_L


@dataclass(frozen=True)
class NonsmoothPart:
    """g(x): zero, weight*||x||_1, or weight*#{i: x_i != 0}."""

    kind: str
    weight: float = 0.0

    def __post_init__(self):
        if self.kind not in (ZERO, L1, L0):
            raise ConfigurationError(f"unknown nonsmooth kind {self.kind!r}")
        if self.kind in (L1, L0) and self.weight <= 0:
            raise ConfigurationError(f"{self.kind} penalty needs a positive weight")

    @classmethod
    def zero(cls) -> "NonsmoothPart":
        return cls(ZERO)

    @classmethod
    def l1(cls, weight: float) -> "NonsmoothPart":
        return cls(L1, weight)

    @classmethod
    def l0(cls, weight: float) -> "NonsmoothPart":
        return cls(L0, weight)


def eval_nonsmooth(g: NonsmoothPart, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if g.kind == ZERO:
        return 0.0
    if g.kind == L1:
        return g.weight * float(np.sum(np.abs(x)))
    return g.weight * float(np.count_nonzero(x))


def _check_prox_pairing(g: NonsmoothPart, h: Kernel) -> None:
    if g.kind == L0 and h.kind != QUADRATIC:
        raise ConfigurationError(
            "l0 penalty is only admitted with the quadratic kernel "
            "(closed-form hard threshold)"
        )


def soft_threshold(p: np.ndarray, level: float) -> np.ndarray:
    return np.sign(p) * np.maximum(np.abs(p) - level, 0.0)


def bregman_prox(g: NonsmoothPart, h: Kernel, p: np.ndarray, lam: float) -> np.ndarray:
    """Global minimizer of lam*g(x) + h(x) - <p, x>.

    This is the subproblem every solver step reduces to once constants are
    dropped, with p collecting the gradient, inertial, and grad h terms.  All
    supported pairings have closed forms:

    * g = 0:                x = grad_inverse(h, p)
    * l1, quadratic h:      componentwise soft threshold at lam*weight
    * l1, quartic h:        soft threshold to q, then rescale by the positive
                            root t of ||q||^2 t^3 + t - 1 = 0 (the separable
                            threshold fixes the direction, the radial cubic the length)
    * l0, quadratic h:      keep p_i iff 0.5*p_i^2 > lam*weight; ties go to zero
                            so runs are reproducible (any selection is optimal)
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    _check_prox_pairing(g, h)
    if g.kind == ZERO:
        return grad_inverse(h, p)
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.shape[0] != h.dimension:
        raise DimensionMismatchError(f"p has shape {p.shape}, expected ({h.dimension},)")
    level = lam * g.weight
    if g.kind == L1:
        q = soft_threshold(p, level)
        if h.kind == QUADRATIC:
            return q
        t = radial_scale(float(q @ q))
        return t * q
    # l0 with quadratic kernel
    keep = 0.5 * p * p > level
    return np.where(keep, p, 0.0)


@dataclass(frozen=True)
class CompositeProblem:
    """The composite objective Psi = f + g with its paired kernel h.

    ``known_optimum`` is an optional reference value for inf Psi, available
    for synthetic instances with planted solutions.
    """

    f: SmoothPart
    g: NonsmoothPart
    h: Kernel
    known_optimum: float | None = None

    def __post_init__(self):
        smad_constant(self.f, self.h)  # raises on inadmissible pairing
        _check_prox_pairing(self.g, self.h)

    @property
    def dimension(self) -> int:
        return self.h.dimension

    @cached_property
    def smad_L(self) -> float:
        return smad_constant(self.f, self.h)

    def psi(self, x: np.ndarray) -> float:
        return self.f.value(x) + eval_nonsmooth(self.g, x)


def validate_problem(problem: CompositeProblem, seed: int = 0, n_rays: int = 8,
                     t_max: float = 1e6) -> dict:
    """Sampled surrogate for boundedness below and supercoercivity of Psi.

    Both shipped families are supercoercive analytically (quadratic or quartic
    growth beats the linear denominator); this check probes random rays with a
    geometric ladder of radii up to ``t_max`` and requires Psi finite, bounded
    below, and Psi(t*u)/t net-increasing along each ray, including over the
    last two decades.
    """
    rng = np.random.default_rng(seed)
    d = problem.dimension
    ts = np.logspace(0.0, np.log10(t_max), num=13)
    min_psi = np.inf
    for _ in range(n_rays):
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        ratios = []
        for t in ts:
            with np.errstate(over="ignore", invalid="ignore"):
                val = problem.psi(t * u)
            if not np.isfinite(val):
                raise ConfigurationError(
                    f"Psi is non-finite at radius {t:g} along a sampled ray"
                )
            min_psi = min(min_psi, val)
            ratios.append(val / t)
        if not (ratios[-1] > ratios[0] and ratios[-1] > ratios[-2] > ratios[-3]):
            raise ConfigurationError(
                "Psi(u)/||u|| fails to grow along a sampled ray; "
                "objective does not look supercoercive"
            )
    return {"min_psi_sampled": float(min_psi), "rays": n_rays, "t_max": t_max}


# ---------------------------------------------------------------------------
# Synthetic instance generation and text-matrix I/O


def random_quadratic_inverse(d: int, m: int, seed: int):
    """Gaussian rows a_i and consistent data b_i = <a_i, xbar>^2.

    Returns (A, b, xbar) with ||xbar|| = 1; Psi* = 0 at +-xbar when g = 0.
    """
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, d))
    xbar = rng.standard_normal(d)
    xbar /= np.linalg.norm(xbar)
    s = A @ xbar
    return A, s * s, xbar


def random_least_squares(d: int, m: int, seed: int, noise: float = 0.1):
    """Gaussian design A and b = A xbar + noise * standard normal."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, d))
    xbar = rng.standard_normal(d)
    b = A @ xbar + noise * rng.standard_normal(m)
    return A, b, xbar


def load_matrix(path) -> np.ndarray:
    """Read a dense matrix from a text file.

    First line is "m d"; the next m lines hold d entries each, separated by
    whitespace and/or commas.  A vector is a matrix with d = 1.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ConfigurationError(f"{path}: empty matrix file")
    header = lines[0].replace(",", " ").split()
    if len(header) != 2:
        raise ConfigurationError(f"{path}: first line must be 'm d', got {lines[0]!r}")
    try:
        m, d = int(header[0]), int(header[1])
    except ValueError as exc:
        raise ConfigurationError(f"{path}: bad header {lines[0]!r}") from exc
    if len(lines) - 1 != m:
        raise ConfigurationError(f"{path}: expected {m} data rows, found {len(lines) - 1}")
    rows = []
    for i, ln in enumerate(lines[1:], start=2):
        parts = ln.replace(",", " ").split()
        if len(parts) != d:
            raise ConfigurationError(f"{path}: line {i} has {len(parts)} entries, expected {d}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise ConfigurationError(f"{path}: line {i} has a non-numeric entry") from exc
    return np.array(rows, dtype=float)


def save_matrix(path, M: np.ndarray) -> None:
    """Write a matrix in the format read by :func:`load_matrix`."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{M.shape[0]} {M.shape[1]}\n")
        for row in M:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
