import math

import numpy as np
import pytest

from moving_obstacles.boundary import (
    PeriodicProfile,
    StefanovWallParams,
    build_stefanov_wall,
)
from moving_obstacles.characteristics import lambda_pm
from moving_obstacles.errors import ConfigError
from moving_obstacles.stefanov import (
    abs_derivative_integral,
    analyze,
    build_channel,
    choose_k,
    compute_H0,
    drift_rate,
    quadrature_time,
    verify_channel_inaccessibility,
    verify_wall_bound,
    widened_lambdas,
)

SINE = PeriodicProfile.sine()
QUARTER = PeriodicProfile.sine(0.25)  # int_0^1 |f'| = 1


@pytest.fixture(scope="module")
def channel(wall):
    return build_channel(wall)


class TestDriftRate:
    def test_critical_points(self):
        # f' vanishes at z = 1/4 and 3/4
        np.testing.assert_allclose(drift_rate(1, SINE, [0.25, 0.75]), 3.0, rtol=1e-12)
        assert drift_rate(5, PeriodicProfile.constant(2.0), 0.3) == 3.0

    def test_large_slope_asymptote(self):
        # with s = k^2 f'^2 = 1e6, F ~ sqrt(3 / (4 s)); 1/F grows like sqrt(s)
        k = 1e3 / (2 * math.pi)
        F = float(drift_rate(k, SINE, 0.0))
        assert F * 1e3 == pytest.approx(math.sqrt(3) / 2, rel=1e-3)

    def test_positive(self, rng):
        z = rng.uniform(0, 1, 5000)
        for k in (1, 3, 10):
            assert np.all(drift_rate(k, SINE, z) > 0)

    def test_matches_leftmost_speed_on_wall(self, wall, rng):
        # w = 2 sigma - t satisfies w' = 2 Lambda_- - 1 = -F(k w, k) on the flat part
        sig = rng.uniform(-2, 2, 1000)
        t = rng.uniform(0, 1, 1000)
        lm, _ = lambda_pm(wall, sig, t)
        w = 2 * sig - t
        np.testing.assert_allclose(2 * lm - 1, -drift_rate(1, SINE, w), rtol=1e-10, atol=1e-12)


class TestH0:
    def test_constant_profile(self):
        assert compute_H0(1, PeriodicProfile.constant(0.7)) == pytest.approx(1 / 3, abs=1e-12)

    def test_sine_exceeds_one(self):
        assert compute_H0(1, SINE) > 1

    def test_monotone_in_k(self):
        h = [compute_H0(k, SINE) for k in range(1, 12)]
        assert np.all(np.diff(h) >= 0)

    def test_analysis_slope(self):
        a = analyze(1, SINE)
        assert 0 < a.drift_slope < 1
        assert a.drift_slope == pytest.approx(1 - 1 / a.H0)
        assert a.abs_fprime_integral == pytest.approx(4.0, rel=1e-10)

    def test_quadrature_split(self):
        H0 = compute_H0(1, SINE)
        val, m, r = quadrature_time(1, SINE, -2.3, 0.0, H0)
        assert m == 2 and r == pytest.approx(0.3)
        # whole periods contribute H0 each, independent of phase
        val2, _, _ = quadrature_time(1, SINE, -2.0, 0.0, H0)
        assert val2 == pytest.approx(2 * H0, rel=1e-12)
        assert val > val2


class TestChooseK:
    def test_sine(self):
        assert abs_derivative_integral(SINE) == pytest.approx(4.0, rel=1e-12)
        assert choose_k(SINE) == 1 and choose_k(SINE, channel=True) == 1

    def test_unit_variation(self):
        assert abs_derivative_integral(QUARTER) == pytest.approx(1.0, rel=1e-12)
        assert choose_k(QUARTER) == 2
        assert choose_k(QUARTER, channel=True) == 3

    @pytest.mark.parametrize("f", [SINE, QUARTER, PeriodicProfile(sin=(0.1, 0.05), cos=(0.02,))])
    def test_chosen_k_gives_H0_above_one(self, f):
        for channel in (False, True):
            assert compute_H0(choose_k(f, channel), f) > 1

    def test_flat_profile_rejected(self):
        with pytest.raises(ConfigError):
            choose_k(PeriodicProfile.constant(1.0))


class TestWallBound:
    def test_sine_holds(self):
        rep = verify_wall_bound(1, SINE, horizon=100.0)
        assert rep.status == "Holds" and rep.ok
        assert rep.min_sigma > -0.5
        assert rep.identity_residual < 1e-6
        assert rep.bound_margin >= -1e-6

    def test_later_start(self):
        rep = verify_wall_bound(1, SINE, sigma0=1.0, t0=0.37, horizon=30.0)
        assert rep.ok and rep.min_sigma > -2.0

    def test_flat_profile_not_applicable(self):
        rep = verify_wall_bound(1, PeriodicProfile.constant(0.0), horizon=1.5)
        assert rep.status == "NotApplicable"
        assert rep.analysis.H0 == pytest.approx(1 / 3)
        # w' = -3, so sigma_- moves left at unit speed
        t, s = rep.trajectory.t, rep.trajectory.sigma
        np.testing.assert_allclose(s, -(t - t[0]), atol=1e-9)

    def test_sigma0_outside_flat_part(self):
        with pytest.raises(ConfigError):
            verify_wall_bound(1, SINE, sigma0=3.0)


class TestChannel:
    def test_geometry(self, channel):
        assert channel.R(0.0) == 0.0
        eta = np.linspace(0, channel.delta, 50)
        assert np.all(np.diff(channel.R(eta)) >= 0)
        assert channel.delta > 0
        assert channel.eps == pytest.approx(channel.delta / 2)
        assert channel.remainder_at_eps < 1
        assert channel.min_offset_jacobian > 0

    def test_eps_bounds(self, wall, channel):
        build_channel(wall, channel.delta * 0.9, n_sigma=1025, n_t=64)
        with pytest.raises(ConfigError) as info:
            build_channel(wall, channel.delta * 1.01)
        assert "delta" in str(info.value)

    def test_widened_ordering(self, wall, rng):
        sig = rng.uniform(-4, 4, 2000)
        t = rng.uniform(0, 1, 2000)
        lm, lp = lambda_pm(wall, sig, t)
        wm, wp = widened_lambdas(wall, sig, t, 2.0)
        assert np.all(wm <= lm + 1e-12) and np.all(lp <= wp + 1e-12)
        # cone constant 1 recovers the wall's own speeds
        um, up = widened_lambdas(wall, sig, t, 1.0)
        np.testing.assert_allclose(um, lm, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(up, lp, rtol=1e-9, atol=1e-12)

    def test_no_traversal(self, channel):
        rep = verify_channel_inaccessibility(channel, 100.0)
        assert rep.inaccessible and rep.counterexample is None
        assert np.all(rep.min_sigma > -2.0)
        assert rep.widened_H0 > 1

    def test_negative_control_detects_traversal(self):
        # f = sin with amplitude 1/4 and k = 2 clears only the sqrt 2 threshold;
        # a huge cone constant then lets the leftmost speed sweep through
        wall = build_stefanov_wall(StefanovWallParams(k=2, M=2, L=2, f=QUARTER))
        ch = build_channel(wall, n_sigma=1025, n_t=64)
        rep = verify_channel_inaccessibility(ch, 40.0, cone_constant=10.0)
        assert not rep.inaccessible
        assert rep.counterexample is not None
        assert rep.counterexample.sigma.min() <= -2.0
        assert rep.widened_H0 < 1
