import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uftrl.core import Linear, Logistic, NumericError, Squared
from uftrl.solvers import (
    ScalarCompositeProblem,
    ball_project_argmin,
    composite_scalar_argmin,
    glm_implicit_solve,
)


def grid_argmin(fn, lo=-10.0, hi=10.0, step=1e-4):
    """Brute-force scalar minimizer, the independent check for closed forms."""
    xs = np.arange(lo, hi + step, step)
    vals = fn(xs)
    return float(xs[np.argmin(vals)])


class TestCompositeScalarArgmin:
    def test_unconstrained_center(self):
        assert composite_scalar_argmin(ScalarCompositeProblem(a=0, b=5, q=2, c=0)) == 5

    def test_pure_gradient_step(self):
        assert composite_scalar_argmin(ScalarCompositeProblem(a=1, b=0, q=1, c=0)) == -1

    def test_threshold_zeroes_inside_kink(self):
        # grid oracle: min of 0.5*(x-2)^2 + 3|x| over [-10, 10]
        got = composite_scalar_argmin(ScalarCompositeProblem(a=0, b=2, q=1, c=3))
        ref = grid_argmin(lambda x: 0.5 * (x - 2) ** 2 + 3 * np.abs(x))
        assert got == 0.0
        assert abs(ref - got) < 1e-3

    def test_kink_tie_returns_exact_zero(self):
        # |b - a/q| == c/q exactly
        got = composite_scalar_argmin(ScalarCompositeProblem(a=0, b=3, q=1, c=3))
        assert got == 0.0

    def test_invalid_curvature(self):
        with pytest.raises(NumericError):
            ScalarCompositeProblem(a=0, b=0, q=0, c=0)
        with pytest.raises(NumericError):
            ScalarCompositeProblem(a=0, b=0, q=-1, c=0)

    @settings(max_examples=300, deadline=None)
    @given(
        st.floats(-100, 100),
        st.floats(-100, 100),
        st.floats(0.01, 100),
        st.floats(0, 100),
    )
    def test_subgradient_optimality(self, a, b, q, c):
        x = composite_scalar_argmin(ScalarCompositeProblem(a=a, b=b, q=q, c=c))
        resid = a + q * (x - b)
        if x != 0.0:
            # 0 = a + q(x-b) + c*sign(x)
            assert resid + c * math.copysign(1.0, x) == pytest.approx(
                0.0, abs=1e-9 * max(1.0, abs(a), q * (abs(b) + abs(x)))
            )
        else:
            # 0 in [resid - c, resid + c]
            assert abs(resid) <= c + 1e-9 * max(1.0, abs(a), q * abs(b))

    @settings(max_examples=200, deadline=None)
    @given(
        st.floats(-50, 50),
        st.floats(-50, 50),
        st.floats(0.01, 50),
        st.floats(0, 50),
        st.floats(0.001, 10),
    )
    def test_larger_threshold_never_grows_magnitude(self, a, b, q, c, dc):
        lo = composite_scalar_argmin(ScalarCompositeProblem(a=a, b=b, q=q, c=c))
        hi = composite_scalar_argmin(ScalarCompositeProblem(a=a, b=b, q=q, c=c + dc))
        assert abs(hi) <= abs(lo) + 1e-12


class TestBallProject:
    def test_interior_optimum(self):
        b = np.array([0.1, -0.2])
        out = ball_project_argmin(np.zeros(2), b, np.ones(2), 1.0)
        assert np.allclose(out, b)

    def test_radial_projection(self):
        out = ball_project_argmin(np.zeros(2), np.array([3.0, 0.0]), np.ones(2), 1.0)
        assert np.allclose(out, [1.0, 0.0], atol=1e-9)

    def test_weighted_case_against_grid(self):
        a = np.array([1.0, 0.0])
        q = np.array([2.0, 2.0])
        out = ball_project_argmin(a, np.zeros(2), q, 0.25)
        # 2-D grid oracle at step 1e-4 on the feasible disk
        step = 1e-4
        xs = np.arange(-0.25, 0.25 + step, step)
        best, best_val = None, math.inf
        for x0 in xs:
            rem = math.sqrt(max(0.25**2 - x0 * x0, 0.0))
            for x1 in (-rem, 0.0, rem):
                val = a[0] * x0 + 0.5 * q[0] * x0 * x0 + 0.5 * q[1] * x1 * x1
                if val < best_val:
                    best, best_val = (x0, x1), val
        assert out == pytest.approx([-0.25, 0.0], abs=1e-6)
        assert best == pytest.approx(out, abs=1e-3)

    def test_norm_tolerance(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            dim = int(rng.integers(1, 8))
            a = rng.normal(size=dim)
            b = rng.normal(size=dim) * 3
            q = rng.uniform(0.1, 5.0, size=dim)
            r = rng.uniform(0.1, 2.0)
            out = ball_project_argmin(a, b, q, r)
            nm = float(np.linalg.norm(out))
            u = b - a / q
            if np.linalg.norm(u) <= r:
                assert np.allclose(out, u)
            else:
                assert abs(nm - r) <= 1e-10

    def test_bad_radius(self):
        with pytest.raises(NumericError):
            ball_project_argmin(np.zeros(2), np.ones(2), np.ones(2), 0.0)


class TestGlmImplicitSolve:
    def test_zero_kappa_is_explicit_gradient(self):
        for kind, label, m0 in [
            (Logistic(), 1, 0.3),
            (Logistic(), -1, -2.0),
            (Squared(3.0), 1, 2.0),
            (Linear(), 1, 0.7),
        ]:
            s = glm_implicit_solve(kind, label, 1.5, m0, 0.0)
            assert s == pytest.approx(
                1.5 * kind.dmargin(m0, label), abs=1e-10
            )

    def test_squared_closed_form_never_overshoots(self):
        # from x_t = 2 toward the minimizer at 3: x_new = (2 + 3*eta)/(1 + eta)
        for eta in [10.0**k for k in range(-2, 4)]:
            s = glm_implicit_solve(Squared(3.0), 1, 1.0, 2.0, eta)
            x_new = 2.0 - eta * s
            assert x_new == pytest.approx((2 + 3 * eta) / (1 + eta), rel=1e-10)
            assert 2.0 < x_new <= 3.0

    def test_squared_approaches_target(self):
        s = glm_implicit_solve(Squared(3.0), 1, 1.0, 2.0, 1e9)
        assert 2.0 - 1e9 * s == pytest.approx(3.0, abs=1e-6)

    def test_logistic_fixed_point_against_scan(self):
        # independent oracle: scan the fixed-point residual at 1e-6 steps
        got = glm_implicit_solve(Logistic(), 1, 1.0, 0.0, 1.0)
        ss = np.arange(-1.0, 0.0, 1e-6)
        resid = np.abs(ss + 1.0 / (1.0 + np.exp(0.0 - ss)))
        ref = float(ss[np.argmin(resid)])
        assert got == pytest.approx(ref, abs=2e-6)
        # frozen value from the scan oracle
        assert got == pytest.approx(-0.4010581375, abs=1e-6)

    def test_residual_tolerance(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            kind = [Logistic(), Squared(float(rng.normal()))][int(rng.integers(2))]
            label = int(rng.choice([-1, 1]))
            w = float(rng.uniform(0, 3))
            m0 = float(rng.normal() * 2)
            kappa = float(rng.uniform(0, 1000))
            s = glm_implicit_solve(kind, label, w, m0, kappa)
            assert abs(s - w * kind.dmargin(m0 - kappa * s, label)) <= 1e-10

    def test_implicit_close_to_explicit_for_tiny_kappa(self):
        for kappa in (1e-7, 1e-6):
            for label in (-1, 1):
                s_impl = glm_implicit_solve(Logistic(), label, 1.0, 0.4, kappa)
                s_expl = 1.0 * Logistic().dmargin(0.4, label)
                # Lipschitz bound: |implicit - explicit| <= L * kappa, L = 1/4
                assert abs(s_impl - s_expl) <= 0.25 * kappa + 1e-12

    def test_negative_kappa_rejected(self):
        with pytest.raises(NumericError):
            glm_implicit_solve(Logistic(), 1, 1.0, 0.0, -1.0)

    def test_zero_weight(self):
        assert glm_implicit_solve(Logistic(), 1, 0.0, 0.5, 2.0) == 0.0
