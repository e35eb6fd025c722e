import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from moving_obstacles.boundary import (
    CircleCurve,
    FourierSeries,
    TranslatingCurve,
    orbiting_breathing_circle,
)
from moving_obstacles.characteristics import (
    SpeedField,
    classify_orbit,
    fan_criterion,
    integrate_characteristic,
    lambda_pm,
    poincare_map,
)
from moving_obstacles.errors import DomainError, TimelikeViolation

TWO_PI = 2.0 * math.pi

# Orbiting circle with a radius tuned just past resonance: the Lambda_+ return
# map has an attracting fixed point near sigma = 0.
R0 = (1 + 1.5e-5) / TWO_PI - 0.1
ATTRACTOR = orbiting_breathing_circle(0.1, R0, 5e-6)

# Stationary, non-circular closed curve (an ellipse).
ELLIPSE = FourierSeries.from_terms([(1, 0, (1.0, 0.0), (0.0, 0.6))], time_period=1.0)

WOBBLY = FourierSeries.from_terms(
    [(1, 0, (1.0, 0.0), (0.0, 1.0)), (2, 1, (0.05, 0.02), (-0.01, 0.04)),
     (0, 1, (0.03, 0.0), (0.0, 0.02))],
    time_period=2.0,
)


class TestLambdas:
    def test_unit_circle(self, unit_circle):
        lm, lp = lambda_pm(unit_circle, 0.3, 0.0)
        assert lm == pytest.approx(-1 / TWO_PI, rel=1e-14)
        assert lp == pytest.approx(1 / TWO_PI, rel=1e-14)

    @pytest.mark.parametrize("curve", [WOBBLY, TranslatingCurve(0.5, (0.1, 0.05), time_period=4.0),
                                       ATTRACTOR], ids=["fourier", "translating", "orbiting"])
    def test_vieta_product(self, curve, rng):
        sig = rng.uniform(0, 1, 1000)
        t = rng.uniform(0, 4, 1000)
        _, xs, xt = curve.evaluate(sig, t)
        lm, lp = lambda_pm(curve, sig, t)
        expected = -(1 - np.sum(xt * xt, -1)) / np.sum(xs * xs, -1)
        np.testing.assert_allclose(lm * lp, expected, rtol=1e-10)
        assert np.all(lm < lp)
        slow = np.sum(xt * xt, -1) < 1
        assert slow.any()
        assert np.all(lm[slow] * lp[slow] < 0)
        assert np.all(lm[~slow] * lp[~slow] >= 0)

    def test_translating_circle_against_numeric_roots(self, rng):
        curve = TranslatingCurve(0.7, (0.08, -0.05), time_period=3.0)
        for _ in range(200):
            s, t = rng.uniform(0, 1), rng.uniform(0, 3)
            _, xs, xt = curve.evaluate(s, t)
            # 0 = 1 - |x_t|^2 - 2 (x_s . x_t) l - |x_s|^2 l^2
            roots = np.sort(np.roots([-(xs @ xs), -2 * (xs @ xt), 1 - xt @ xt]).real)
            lm, lp = lambda_pm(curve, s, t)
            np.testing.assert_allclose([lm, lp], roots, rtol=1e-10, atol=1e-12)

    def test_superluminal_boundary_raises(self):
        fast = TranslatingCurve(0.5, (0.3, 0.0), time_period=1.0)
        with pytest.raises(TimelikeViolation):
            lambda_pm(fast, 0.0, 0.0)


class TestIntegration:
    def test_unit_circle_one_lap(self, unit_circle):
        tr = integrate_characteristic(SpeedField(unit_circle, 0.0), 0.0, 0.0, TWO_PI)
        assert tr.sigma_end == pytest.approx(1.0, abs=1e-12)
        assert tr.winding == 1
        assert tr.termination == "HorizonReached"

    def test_backward_lap(self, unit_circle):
        tr = integrate_characteristic(SpeedField(unit_circle, 0.0), 0.0, 0.0, -TWO_PI)
        assert tr.sigma_end == pytest.approx(-1.0, abs=1e-12)
        assert tr.winding == -1

    @pytest.mark.parametrize("curve", [CircleCurve(), ELLIPSE])
    def test_half_blend_is_stationary(self, curve):
        tr = integrate_characteristic(SpeedField(curve, 0.5), 0.3, 0.0, 5.0)
        np.testing.assert_allclose(tr.sigma, 0.3, atol=1e-14)

    def test_wall_leftmost_characteristic_never_reaches_minus_M(self, wall):
        tr = integrate_characteristic(SpeedField(wall, 1.0), 0.0, 0.0, 100.0)
        assert tr.sigma.min() > -2.0
        assert tr.termination == "HorizonReached"

    def test_leaves_interval(self, wall):
        tr = integrate_characteristic(SpeedField(wall, 0.0), 3.9, 0.0, 10.0)
        assert tr.termination == "LeftInterval(hi)"
        assert tr.sigma_end <= 4.0

    def test_start_outside_interval(self, wall):
        with pytest.raises(DomainError):
            integrate_characteristic(SpeedField(wall, 0.0), 5.0, 0.0, 1.0)

    def test_step_halving_tolerance(self):
        tr = integrate_characteristic(SpeedField(WOBBLY, 0.3), 0.1, 0.0, 6.0)
        assert tr.ode_difference < 1e-8

    @given(s0=st.floats(0.0, 1.0), t0=st.floats(0.0, 2.0), span=st.floats(0.5, 4.0),
           alpha=st.floats(0.0, 1.0))
    def test_time_reversal(self, s0, t0, span, alpha):
        field = SpeedField(WOBBLY, alpha)
        fwd = integrate_characteristic(field, s0, t0, t0 + span)
        back = integrate_characteristic(field, fwd.sigma_end, t0 + span, t0)
        assert back.sigma_end == pytest.approx(s0, abs=1e-7)

    def test_trajectory_samples_satisfy_ode(self):
        field = SpeedField(WOBBLY, 0.2)
        tr = integrate_characteristic(field, 0.4, 0.0, 2.0)
        # trapezoid estimate of the increment on the returned grid
        rate = field.rate(tr.sigma, tr.t)
        inc = 0.5 * (rate[1:] + rate[:-1]) * np.diff(tr.t)
        assert np.max(np.abs(np.diff(tr.sigma) - inc)) < 1e-5


class TestPoincare:
    def test_unit_circle(self, unit_circle):
        P = poincare_map(SpeedField(unit_circle, 0.0), 0.25)
        assert P == pytest.approx(0.25 + 1 / TWO_PI, abs=1e-12)

    def test_monotone(self, rng):
        field = SpeedField(WOBBLY, 0.7)
        a = rng.uniform(0, 1, 100)
        b = a + rng.uniform(1e-3, 0.5, 100)
        assert np.all(poincare_map(field, a) < poincare_map(field, b))

    @pytest.mark.parametrize("alpha", [0.0, 0.4, 1.0])
    def test_semigroup(self, alpha):
        field = SpeedField(WOBBLY, alpha)
        T = WOBBLY.time_period
        for s0 in (0.0, 0.37, 0.81):
            twice = poincare_map(field, poincare_map(field, s0, 0.0), T)
            direct = integrate_characteristic(field, s0, 0.0, 2 * T).sigma_end
            assert twice == pytest.approx(direct, abs=1e-8)


class TestClassification:
    def test_unit_circle_rotation_number(self, unit_circle):
        res = classify_orbit(SpeedField(unit_circle, 0.0), 0.0, horizon_periods=200)
        assert res.kind == "UnboundedUp"
        assert res.rotation_number == pytest.approx(1 / TWO_PI, abs=1e-6)
        down = classify_orbit(SpeedField(unit_circle, 1.0), 0.0, horizon_periods=50)
        assert down.kind == "UnboundedDown"
        assert down.rotation_number == pytest.approx(-1 / TWO_PI, abs=1e-6)

    def test_stationary_ellipse_half_blend_is_periodic(self):
        res = classify_orbit(SpeedField(ELLIPSE, 0.5), 0.2, horizon_periods=50)
        assert res.kind == "Periodic"
        assert res.fixed_point == 0.2

    def test_attracting_orbit(self):
        res = classify_orbit(SpeedField(ATTRACTOR, 0.0), -0.02, horizon_periods=200)
        assert res.kind == "AsymptoticFromBelow"
        assert res.fixed_point_residual < 1e-6
        assert len(res.residuals) == 10
        assert np.all(np.diff(res.residuals) <= 0)
        # sections approach the fixed point from below, monotonically
        assert np.all(np.diff(res.sections) > 0)
        assert res.sections[-1] < res.fixed_point

    def test_horizon_minimum(self, unit_circle):
        with pytest.raises(ValueError):
            classify_orbit(SpeedField(unit_circle, 0.0), 0.0, horizon_periods=10)

    @pytest.mark.parametrize("alpha,kind", [(0.0, "UnboundedUp"), (0.5, "UnboundedDown"),
                                            (1.0, "UnboundedDown")])
    def test_drifts_single_signed(self, alpha, kind):
        res = classify_orbit(SpeedField(WOBBLY, alpha), 0.1, horizon_periods=50)
        assert res.kind == kind
        d = res.drifts[1:]
        assert np.all(d > 0) or np.all(d < 0)

    def test_dichotomy_on_bounded_orbit(self):
        # the attracting orbit stays bounded, so it must be periodic or asymptotic
        res = classify_orbit(SpeedField(ATTRACTOR, 0.0), 0.01, horizon_periods=50)
        assert res.kind in ("Periodic", "AsymptoticFromBelow", "AsymptoticFromAbove")
        assert np.all(res.drifts[1:] <= 0) or np.all(res.drifts[1:] >= 0)


class TestFanCriterion:
    def test_unit_circle(self, unit_circle):
        fc = fan_criterion(unit_circle, 64)
        assert fc.min_lambda_plus == pytest.approx(1 / TWO_PI)
        assert fc.max_lambda_minus == pytest.approx(-1 / TWO_PI)
        assert fc.satisfied and fc.margin == pytest.approx(1 / math.pi)

    def test_wall_extrema_follow_closed_form(self, wall):
        # On the flat part Lambda_pm = (2s +- sqrt(1 + 3s)) / (1 + 4s) with
        # s = k^2 f'^2 in [0, 4 pi^2].  Lambda_+ decreases and Lambda_- increases
        # in s, so both extremes sit at s = 4 pi^2 and do not overlap.
        s = 4 * math.pi**2
        lp_min = (2 * s + math.sqrt(1 + 3 * s)) / (1 + 4 * s)
        lm_max = (2 * s - math.sqrt(1 + 3 * s)) / (1 + 4 * s)
        fc = fan_criterion(wall, 512)
        assert fc.min_lambda_plus == pytest.approx(lp_min, rel=1e-4)
        assert fc.max_lambda_minus == pytest.approx(lm_max, rel=1e-4)
        assert fc.satisfied

    def test_slow_translating_circle(self):
        curve = TranslatingCurve(1.0, (0.01 / TWO_PI, 0.0), time_period=1.0)  # |l'| <= 0.01
        fc = fan_criterion(curve, 256)
        assert fc.satisfied and fc.margin > 0
