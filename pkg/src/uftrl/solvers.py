"""Closed-form and one-dimensional solvers for the per-coordinate subproblems.

Every per-round optimization of the unified update reduces, coordinate-wise,
to minimizing ``a*x + (q/2)*(x - b)^2 + c*|x|`` (soft-thresholding), to a
diagonally-weighted projection onto an L2 ball, or — in implicit mode — to a
one-dimensional fixed point in the folded gradient scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (
    ConvergenceError,
    LossKind,
    NumericError,
    _require_finite,
    loss_margin_derivative,
)

FIXED_POINT_WIDTH_TOL = 1e-12  # bisection bracket width
FIXED_POINT_RESIDUAL_TOL = 1e-10  # guaranteed |s - w*l'(m(s))| at the result
FIXED_POINT_MAX_ITERS = 200
BALL_NORM_TOL = 1e-10


@dataclass(frozen=True)
class ScalarCompositeProblem:
    """min_x  a*x + (q/2)*(x - b)^2 + c*|x|  with q > 0, c >= 0."""

    a: float
    b: float
    q: float
    c: float = 0.0

    def __post_init__(self):
        for name in ("a", "b", "q", "c"):
            _require_finite(getattr(self, name), name)
        if self.q <= 0:
            raise NumericError(f"quadratic curvature must be > 0, got {self.q}")
        if self.c < 0:
            raise NumericError(f"absolute-value weight must be >= 0, got {self.c}")


def soft_threshold(u: float, thr: float) -> float:
    """Shrink u toward zero by thr, snapping to exactly 0 inside the kink."""
    au = abs(u)
    if au <= thr:
        return 0.0
    return math.copysign(au - thr, u)


def composite_scalar_argmin(p: ScalarCompositeProblem) -> float:
    """Exact minimizer of the scalar composite problem.

    The tie at |b - a/q| == c/q returns exactly 0, which maximizes sparsity.
    """
    u = p.b - p.a / p.q
    return soft_threshold(u, p.c / p.q)


def ball_project_argmin(
    a: np.ndarray, b: np.ndarray, q: np.ndarray, radius: float
) -> np.ndarray:
    """argmin over the L2 ball of radius r of sum_i a_i x_i + (q_i/2)(x_i-b_i)^2.

    Minimizes without the constraint first; if the result lies outside the
    ball, bisects the Lagrange multiplier of the norm constraint until
    ``| ||x|| - r | <= 1e-10``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    q = np.asarray(q, dtype=float)
    if not (radius > 0 and math.isfinite(radius)):
        raise NumericError(f"ball radius must be positive and finite, got {radius}")
    if np.any(q <= 0):
        raise NumericError("all quadratic curvatures must be > 0")
    u = b - a / q
    norm = math.sqrt(float(np.dot(u, u)))
    if norm <= radius:
        return u
    # x(mu) = q*u / (q + mu); ||x(mu)|| is continuous and strictly decreasing
    qu = q * u
    lo = 0.0
    hi = float(np.max(q)) * norm / radius
    x = u
    for _ in range(FIXED_POINT_MAX_ITERS):
        mid = 0.5 * (lo + hi)
        x = qu / (q + mid)
        nm = math.sqrt(float(np.dot(x, x)))
        if abs(nm - radius) <= BALL_NORM_TOL:
            return x
        if nm > radius:
            lo = mid
        else:
            hi = mid
    raise ConvergenceError(
        f"ball projection multiplier bisection did not reach {BALL_NORM_TOL}"
    )


def implicit_fixed_point(
    kind: LossKind,
    label: int,
    weight: float,
    margin_of: Callable[[float], float],
) -> float:
    """Solve s = weight * l'(margin_of(s), label) for the gradient scale s.

    ``margin_of`` must be non-increasing in s (true for every per-round
    subproblem here: increasing the folded gradient moves the new point
    against the features).  The residual s - weight*l'(margin_of(s)) is then
    strictly increasing with slope >= 1, so bisection on a sign-changing
    bracket is globally convergent.
    """
    if weight < 0:
        raise NumericError(f"weight must be >= 0, got {weight}")
    if weight == 0.0:
        return 0.0

    def residual(s: float) -> float:
        return s - weight * loss_margin_derivative(kind, margin_of(s), label)

    lo, hi = kind.solver_bracket(label, weight, margin_of(0.0))
    rlo, rhi = residual(lo), residual(hi)
    # widen if the initial bracket does not change sign (possible for the
    # unbounded squared-loss derivative with extreme curvature)
    grow = 0
    while rlo > 0 and grow < 60:
        lo -= max(1.0, abs(lo))
        rlo = residual(lo)
        grow += 1
    while rhi < 0 and grow < 120:
        hi += max(1.0, abs(hi))
        rhi = residual(hi)
        grow += 1
    if rlo > 0 or rhi < 0:
        raise NumericError("no sign change in implicit-solver bracket")
    if rlo == 0.0:
        return lo
    if rhi == 0.0:
        return hi

    mid = 0.5 * (lo + hi)
    for _ in range(FIXED_POINT_MAX_ITERS):
        mid = 0.5 * (lo + hi)
        rm = residual(mid)
        if rm == 0.0:
            return mid
        if rm < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= FIXED_POINT_WIDTH_TOL and abs(rm) <= FIXED_POINT_RESIDUAL_TOL:
            return mid
    if abs(residual(mid)) > FIXED_POINT_RESIDUAL_TOL:
        raise ConvergenceError(
            f"implicit fixed point residual {residual(mid):.3e} above tolerance"
        )
    return mid


def glm_implicit_solve(
    kind: LossKind, label: int, weight: float, m0: float, kappa: float
) -> float:
    """Gradient scale s* of the penalty-free implicit GLM update.

    ``m0`` is the margin the new point would attain with no loss term and
    ``kappa = sum_i theta_i^2 / sigma_i`` the curvature-scaled feature norm;
    the new margin is then ``m0 - kappa*s``.  With kappa = 0 this reduces to
    the explicit gradient ``weight * l'(m0)``.
    """
    _require_finite(m0, "m0")
    _require_finite(kappa, "kappa")
    if kappa < 0:
        raise NumericError(f"kappa must be >= 0, got {kappa}")
    return implicit_fixed_point(kind, label, weight, lambda s: m0 - kappa * s)
