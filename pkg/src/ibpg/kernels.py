"""Kernel generating distances and their Bregman geometry.

Two kernels are shipped, both finite and differentiable on all of R^d and
1-strongly convex:

* ``quadratic``:  h(x) = 0.5*||x||^2,            grad h(x) = x
* ``quartic``:    h(x) = 0.25*||x||^4 + 0.5*||x||^2,  grad h(x) = (||x||^2 + 1)*x

The quartic kernel is the standard companion of quartic data-fit terms whose
gradients are not globally Lipschitz; the quadratic kernel recovers the
Euclidean proximal setting, where the Bregman distance collapses to
0.5*||x - y||^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

QUADRATIC = "quadratic"
QUARTIC = "quartic"

_KINDS = (QUADRATIC, QUARTIC)


class DimensionMismatchError(ValueError):
    """A vector argument does not match the declared dimension."""


@dataclass(frozen=True)
class Kernel:
    """A kernel generating distance h on R^d.

    ``sigma`` is the strong-convexity modulus: D_h(x, y) >= (sigma/2)*||x - y||^2.
    Both shipped kernels have sigma = 1 analytically (for the quartic kernel the
    0.5*||x||^2 part supplies it), so sigma is stored, never estimated.
    """

    kind: str
    dimension: int
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {_KINDS}")
        if self.dimension < 1:
            raise ValueError("kernel dimension must be a positive integer")
        if self.sigma <= 0:
            raise ValueError("strong-convexity modulus sigma must be positive")

    @classmethod
    def quadratic(cls, dimension: int) -> "Kernel":
        return cls(QUADRATIC, dimension)

    @classmethod
    def quartic(cls, dimension: int) -> "Kernel":
        return cls(QUARTIC, dimension)


def _check_dim(h: Kernel, v: np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != h.dimension:
        raise DimensionMismatchError(
            f"{name} has shape {v.shape}, expected ({h.dimension},)"
        )
    return v


def eval_kernel(h: Kernel, x: np.ndarray) -> tuple[float, np.ndarray]:
    """Return (h(x), grad h(x)); the gradient is closed form, not numerical."""
    x = _check_dim(h, x, "x")
    sq = float(x @ x)
    if h.kind == QUADRATIC:
        return 0.5 * sq, x.copy()
    return 0.25 * sq * sq + 0.5 * sq, (sq + 1.0) * x


def radial_scale(norm_sq: float, tol: float = 1e-14) -> float:
    """Positive root t of ``norm_sq * t^3 + t - 1 = 0``.

    This is the radial factor inverting p -> (||x||^2 + 1) x: the solution is
    x = t * p with t solving the cubic for norm_sq = ||p||^2.  The polynomial is
    strictly increasing and convex on t > 0 with a sign change on (0, 1], so a
    safeguarded Newton iteration started at min(1, 1/||p||) converges
    unconditionally; bisection takes over whenever a Newton step leaves the
    current bracket.
    """
    rho = float(norm_sq)
    if rho < 0:
        raise ValueError("norm_sq must be nonnegative")
    if rho == 0.0:
        return 1.0

    def poly(t):
        return rho * t * t * t + t - 1.0

    lo, hi = 0.0, 1.0
    t = min(1.0, 1.0 / np.sqrt(rho))
    for _ in range(200):
        u = poly(t)
        if u > 0.0:
            hi = t
        else:
            lo = t
        du = 3.0 * rho * t * t + 1.0
        step = u / du
        t_new = t - step
        if not (lo < t_new < hi):
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= tol * 0.01 + 1e-17:
            t = t_new
            break
        t = t_new
    return t


def grad_inverse(h: Kernel, p: np.ndarray) -> np.ndarray:
    """The unique x with grad h(x) = p (the map is a bijection on R^d)."""
    p = _check_dim(h, p, "p")
    if h.kind == QUADRATIC:
        return p.copy()
    t = radial_scale(float(p @ p))
    return t * p


def bregman_distance(h: Kernel, x: np.ndarray, y: np.ndarray) -> float:
    """D_h(x, y) = h(x) - h(y) - <grad h(y), x - y>.

    Nonnegative by convexity and zero only at x = y.  For the quadratic kernel
    this is computed directly as 0.5*||x - y||^2, to which the definition
    reduces exactly.
    """
    x = _check_dim(h, x, "x")
    y = _check_dim(h, y, "y")
    if h.kind == QUADRATIC:
        d = x - y
        return 0.5 * float(d @ d)
    hx, _ = eval_kernel(h, x)
    hy, gy = eval_kernel(h, y)
    return hx - hy - float(gy @ (x - y))


def kernel_value_many(h: Kernel, X: np.ndarray) -> np.ndarray:
    """h evaluated on the rows of X."""
    X = np.asarray(X, dtype=float)
    sq = np.einsum("ij,ij->i", X, X)
    if h.kind == QUADRATIC:
        return 0.5 * sq
    return 0.25 * sq * sq + 0.5 * sq


def kernel_grad_many(h: Kernel, X: np.ndarray) -> np.ndarray:
    """grad h evaluated on the rows of X."""
    X = np.asarray(X, dtype=float)
    if h.kind == QUADRATIC:
        return X.copy()
    sq = np.einsum("ij,ij->i", X, X)
    return (sq + 1.0)[:, None] * X


def bregman_distance_many(h: Kernel, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Rowwise D_h(X[i], Y[i]); vectorized twin of :func:`bregman_distance`."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if h.kind == QUADRATIC:
        D = X - Y
        return 0.5 * np.einsum("ij,ij->i", D, D)
    gy = kernel_grad_many(h, Y)
    return (
        kernel_value_many(h, X)
        - kernel_value_many(h, Y)
        - np.einsum("ij,ij->i", gy, X - Y)
    )
