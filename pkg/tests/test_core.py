import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uftrl.core import (
    ConfigError,
    DataError,
    Linear,
    Logistic,
    NumericError,
    PenaltyKind,
    PenaltyMode,
    PenaltySchedule,
    SparseExample,
    Squared,
    WeightVector,
    loss_margin_derivative,
    loss_value,
    penalty_value,
)

FINITE_MARGINS = st.floats(min_value=-30, max_value=30)


class TestLossValues:
    def test_logistic_zero_margin(self):
        assert loss_value(Logistic(), 0.0, 1) == pytest.approx(math.log(2), abs=1e-12)
        assert loss_value(Logistic(), 0.0, -1) == pytest.approx(math.log(2), abs=1e-12)

    def test_squared_paper_point(self):
        # f(x) = 0.5*(x-3)^2 at x = 2
        assert loss_value(Squared(3.0), 2.0, 1) == 0.5

    def test_logistic_large_margin_positive_label(self):
        # high-precision reference computed with mpmath
        import mpmath

        mpmath.mp.dps = 50
        expected = float(mpmath.log(1 + mpmath.exp(-10)))
        got = loss_value(Logistic(), 10.0, 1)
        assert got == pytest.approx(expected, rel=1e-12)
        assert got == pytest.approx(4.5398899216870535e-05, rel=1e-9)

    def test_logistic_no_overflow(self):
        assert loss_value(Logistic(), -2000.0, 1) == pytest.approx(2000.0)
        assert loss_value(Logistic(), 2000.0, 1) == 0.0

    def test_non_finite_margin_rejected(self):
        with pytest.raises(NumericError):
            loss_value(Logistic(), math.inf, 1)
        with pytest.raises(NumericError):
            loss_margin_derivative(Squared(1.0), math.nan, 1)


class TestLossDerivatives:
    def test_logistic_zero_margin(self):
        assert loss_margin_derivative(Logistic(), 0.0, 1) == -0.5
        assert loss_margin_derivative(Logistic(), 0.0, -1) == 0.5

    def test_squared_paper_gradient(self):
        assert loss_margin_derivative(Squared(3.0), 2.0, 1) == -1.0

    def test_logistic_margin_two_negative_label(self):
        # finite-difference oracle at h = 1e-6
        h = 1e-6
        fd = (
            loss_value(Logistic(), 2 + h, -1) - loss_value(Logistic(), 2 - h, -1)
        ) / (2 * h)
        got = loss_margin_derivative(Logistic(), 2.0, -1)
        assert got == pytest.approx(fd, rel=1e-6)
        assert got == pytest.approx(1 / (1 + math.exp(-2)), rel=1e-12)

    def test_logistic_derivative_range(self):
        for m in (-20, -1, 0, 1, 20):
            d_pos = loss_margin_derivative(Logistic(), m, 1)
            d_neg = loss_margin_derivative(Logistic(), m, -1)
            assert -1 < d_pos < 0
            assert 0 < d_neg < 1

    @settings(max_examples=200, deadline=None)
    @given(FINITE_MARGINS, st.sampled_from([-1, 1]),
           st.sampled_from([Logistic(), Squared(3.0), Squared(-1.5), Linear()]))
    def test_finite_difference_matches(self, m, label, kind):
        h = 1e-6
        fd = (loss_value(kind, m + h, label) - loss_value(kind, m - h, label)) / (2 * h)
        d = loss_margin_derivative(kind, m, label)
        assert d == pytest.approx(fd, rel=1e-5, abs=1e-7)

    @settings(max_examples=200, deadline=None)
    @given(FINITE_MARGINS, FINITE_MARGINS,
           st.floats(min_value=0, max_value=1), st.sampled_from([-1, 1]))
    def test_logistic_convex_in_margin(self, m1, m2, theta, label):
        mix = theta * m1 + (1 - theta) * m2
        lhs = loss_value(Logistic(), mix, label)
        rhs = theta * loss_value(Logistic(), m1, label) + (1 - theta) * loss_value(
            Logistic(), m2, label
        )
        assert lhs <= rhs + 1e-12


class TestPenaltySchedule:
    def test_l1_constant(self):
        sched = PenaltySchedule(lam=0.5)
        x = WeightVector.of({1: 2.0, 3: -4.0})
        for t in (1, 2, 7):
            assert penalty_value(sched, x, t) == pytest.approx(3.0)

    def test_l1_prior_once(self):
        sched = PenaltySchedule(lam=0.5, mode=PenaltyMode.PRIOR_ONCE)
        x = WeightVector.of({1: 2.0, 3: -4.0})
        assert penalty_value(sched, x, 1) == pytest.approx(3.0)
        assert penalty_value(sched, x, 2) == 0.0
        assert sched.alpha_cum(10) == 1.0

    def test_ball_indicator(self):
        sched = PenaltySchedule(kind=PenaltyKind.BALL, radius=1.0)
        outside = WeightVector.of({0: 2.0})
        inside = WeightVector.of({0: 0.5})
        assert penalty_value(sched, outside, 1) == math.inf
        assert penalty_value(sched, inside, 1) == 0.0

    def test_custom_validation(self):
        with pytest.raises(ConfigError):
            PenaltySchedule(lam=1.0, mode=PenaltyMode.CUSTOM, custom=(0.5, 0.7))
        with pytest.raises(ConfigError):
            PenaltySchedule(lam=1.0, mode=PenaltyMode.CUSTOM, custom=())
        with pytest.raises(ConfigError):
            PenaltySchedule(lam=-1.0)

    def test_custom_continues_with_last_value(self):
        sched = PenaltySchedule(lam=1.0, mode=PenaltyMode.CUSTOM, custom=(1.0, 0.5))
        assert sched.alpha(1) == 1.0
        assert sched.alpha(2) == 0.5
        assert sched.alpha(9) == 0.5
        assert sched.alpha_cum(4) == pytest.approx(2.5)

    @settings(max_examples=100, deadline=None)
    @given(st.sampled_from([PenaltyMode.CONSTANT, PenaltyMode.PRIOR_ONCE]),
           st.integers(min_value=1, max_value=50))
    def test_alphas_non_increasing_and_cum_monotone(self, mode, t):
        sched = PenaltySchedule(lam=1.0, mode=mode)
        assert sched.alpha(t + 1) <= sched.alpha(t)
        assert sched.alpha_cum(t) <= sched.alpha_cum(t + 1)
        assert sched.alpha(t) >= 0


class TestDomainTypes:
    def test_weight_vector_drops_zeros(self):
        wv = WeightVector.of({0: 1.0, 1: 0.0, 5: -2.0})
        assert wv.nnz() == 2
        assert wv.get(1) == 0.0
        assert wv.norm1() == 3.0
        assert wv.norm2() == pytest.approx(math.sqrt(5))

    def test_weight_vector_rejects_non_finite(self):
        with pytest.raises(NumericError):
            WeightVector.of({0: math.inf})

    def test_example_validation(self):
        with pytest.raises(DataError):
            SparseExample({0: 1.0}, label=2)
        with pytest.raises(DataError):
            SparseExample({0: 0.0}, label=1)
        with pytest.raises(DataError):
            SparseExample({0: 1.0}, label=1, weight=-1.0)

    def test_example_default_weight(self):
        ex = SparseExample({3: 1.5, 7: 2.0}, label=1)
        assert ex.weight == 1.0
