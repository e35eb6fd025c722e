import math

import numpy as np
import pytest

from moving_obstacles.accessibility import (
    ApexSeed,
    CurveObstacleDomain,
    DiskDomain,
    EmptyDomain,
    ReachSet,
    StefanovChannelDomain,
    apex_seeds,
    boundary_fan,
    disk_geodesic_distance,
    domain_from_config,
    fan_certificate,
    inaccessible_report,
    interior_access_path,
    reach_forward,
)
from moving_obstacles.boundary import BreathingCircle, CircleCurve, TranslatingCurve
from moving_obstacles.characteristics import fan_criterion
from moving_obstacles.errors import ConfigError, Inaccessible
from moving_obstacles.stefanov import build_channel

DISK = DiskDomain(radius=0.3, center=(0.0, 0.0), rho=1.0)


def _free_cells(reach, k=-1):
    return reach.inside & ~reach.obstacle[k]


class TestApexSeeds:
    def test_unit_circle(self, unit_circle):
        seeds = apex_seeds(unit_circle, periods=range(3))
        assert [s.t for s in seeds] == [0.0, 1.0, 2.0]
        assert all(s.sigma == 0.0 for s in seeds)
        assert seeds[0].radius == pytest.approx(1.0)

    def test_breathing_circle(self):
        seeds = apex_seeds(BreathingCircle(1.0, 0.1, time_period=1.0), periods=range(2))
        assert seeds[0].t == pytest.approx(0.25, abs=1e-6)
        assert seeds[1].t == pytest.approx(1.25, abs=1e-6)
        assert seeds[0].radius == pytest.approx(1.1, abs=1e-10)

    def test_translating_circle(self, slow_circle):
        (seed,) = apex_seeds(slow_circle)
        # rightmost point at the moment of largest displacement
        assert seed.radius == pytest.approx(0.6, abs=1e-8)
        assert seed.x1 == pytest.approx(0.6, abs=1e-6)

    def test_channel_domain_apex_is_off_the_wall(self, wall):
        dom = StefanovChannelDomain(wall, 1e-3)
        (seed,) = dom.apex_seeds()
        assert math.isnan(seed.sigma)
        assert seed.radius < dom.rho
        # it sits on the stationary block boundary at every time
        for t in (0.0, 0.3, 0.7):
            near = np.array([seed.x1, seed.x2]) * (1 - 1e-6)
            assert not dom.free(near[0], near[1], t)
            far = np.array([seed.x1, seed.x2]) * (1 + 1e-6)
            assert dom.free(far[0], far[1], t)


class TestBoundaryFan:
    def test_unit_circle_coverage(self, unit_circle):
        fan = boundary_fan(unit_circle, (0.0, 0.0), 4.0)
        assert fan.coverage_time == pytest.approx(math.pi, abs=1e-9)
        np.testing.assert_allclose(fan.sigma_plus, fan.t / (2 * math.pi), atol=1e-12)
        np.testing.assert_allclose(fan.sigma_minus, -fan.t / (2 * math.pi), atol=1e-12)
        assert np.all(fan.sigma_minus <= fan.sigma_plus)

    def test_coverage_bound_from_margin(self, slow_circle):
        fc = fan_criterion(slow_circle, 512)
        assert fc.satisfied
        (seed,) = apex_seeds(slow_circle)
        fan = boundary_fan(slow_circle, seed, 20.0)
        bound = 1.0 / fc.margin + 2 * slow_circle.time_period
        assert fan.coverage_time is not None and fan.coverage_time <= bound

    def test_wall_fan_never_reaches_minus_M(self, wall):
        fan = boundary_fan(wall, (2.0, 0.0), 50.0)
        lo = fan.sigma_minus[np.isfinite(fan.sigma_minus)]
        assert lo.min() > -2.0
        assert fan.coverage_time is None

    def test_seed_must_be_on_curve(self, unit_circle):
        with pytest.raises(ConfigError):
            boundary_fan(unit_circle, ApexSeed(math.nan, 0.0, 1.0, 0.0, 1.0), 1.0)


class TestCertificates:
    def test_inside_fan(self, slow_circle):
        fan = boundary_fan(slow_circle, (0.0, 0.0), 6.0)
        lo, hi = fan.interval(3.0)
        target = 0.5 * (lo + hi) + 0.01
        cert = fan_certificate(fan, target, 3.0)
        assert 0.0 <= cert.alpha <= 1.0
        assert cert.residual < 1e-8
        assert cert.max_speed < 1.0

    def test_outside_fan(self, slow_circle):
        fan = boundary_fan(slow_circle, (0.0, 0.0), 2.0)
        with pytest.raises(Inaccessible):
            fan_certificate(fan, 0.5, 0.5)

    def test_certificate_positions_stay_on_curve(self, slow_circle):
        fan = boundary_fan(slow_circle, (0.0, 0.0), 6.0)
        cert = fan_certificate(fan, 0.3, 5.0)
        pts = cert.points()
        l, _ = slow_circle.offset(cert.trajectory.t)
        np.testing.assert_allclose(np.linalg.norm(pts - l, axis=-1), 0.5, atol=1e-12)


class TestReachForward:
    def test_empty_domain_inward_cone(self):
        reach = reach_forward(EmptyDomain(1.0), "ring", (0.0, 1.2), resolution=120)
        X1, X2 = reach.mesh()
        expected = 1.0 - np.hypot(X1, X2)
        ok = reach.inside & np.isfinite(reach.first_arrival)
        assert np.max(np.abs(reach.first_arrival[ok] - expected[ok])) <= 2 * reach.dx
        # everything inside the cylinder is reached by t = 1
        assert np.all(reach.ever_reached[reach.inside])

    def test_disk_point_source_matches_geodesic(self):
        src = (-0.99, 0.0)
        reach = reach_forward(DISK, {"points": [src], "time": 0.0}, (0.0, 2.5), resolution=100)
        X1, X2 = reach.mesh()
        free = _free_cells(reach) & np.isfinite(reach.first_arrival)
        d = disk_geodesic_distance(np.column_stack([X1[free], X2[free]]), src, 0.3)
        assert np.max(np.abs(reach.first_arrival[free] - d)) <= 3 * reach.dx

    def test_reachable_cells_are_free_and_inside(self):
        dom = CurveObstacleDomain(TranslatingCurve(0.4, (0.1, 0.0), time_period=2.0), 1.0)
        reach = reach_forward(dom, "ring", (0.0, 3.0), resolution=80)
        assert not np.any(reach.reachable & reach.obstacle)
        assert not np.any(reach.reachable & ~reach.inside[None])

    def test_monotone_in_time_for_stationary_obstacle(self):
        reach = reach_forward(DISK, "ring", (0.0, 2.0), resolution=80)
        for k in range(len(reach.times) - 1):
            assert np.all(reach.reachable[k] <= reach.reachable[k + 1])

    def test_monotone_in_sources(self):
        small = reach_forward(DISK, {"points": [(0.9, 0.0)], "time": 0.0}, (0.0, 1.0),
                              resolution=80)
        big = reach_forward(DISK, {"points": [(0.9, 0.0), (-0.9, 0.1)], "time": 0.0},
                            (0.0, 1.0), resolution=80)
        assert np.all(small.reachable <= big.reachable)
        assert big.measure() > small.measure()

    def test_grid_convergence_of_measure(self):
        coarse = reach_forward(DISK, {"points": [(-0.99, 0.0)], "time": 0.0}, (0.0, 1.0),
                               resolution=100)
        fine = reach_forward(DISK, {"points": [(-0.99, 0.0)], "time": 0.0}, (0.0, 1.0),
                             resolution=200)
        assert abs(fine.measure() - coarse.measure()) / fine.measure() < 0.05

    def test_cfl_violation(self):
        with pytest.raises(ConfigError) as info:
            reach_forward(DISK, "ring", (0.0, 1.0), resolution=50, dt=0.03)
        assert info.value.payload["key"] == "dt"

    def test_save_load_roundtrip(self, tmp_path):
        reach = reach_forward(DISK, "ring", (0.0, 0.5), resolution=40)
        path = tmp_path / "r.bin"
        reach.save(path)
        back = ReachSet.load(path)
        assert back.dx == reach.dx and back.n_steps == reach.n_steps
        for name in ("reachable", "obstacle", "ever_reached", "inside", "snapshot_steps"):
            assert np.array_equal(getattr(back, name), getattr(reach, name))
        np.testing.assert_array_equal(back.first_arrival, reach.first_arrival)

    def test_load_rejects_foreign_file(self, tmp_path):
        p = tmp_path / "x.bin"
        p.write_bytes(b"not a reach set")
        with pytest.raises(ConfigError):
            ReachSet.load(p)


class TestGeodesicOracle:
    def test_unblocked_is_straight(self):
        d = disk_geodesic_distance([[0.9, 0.5]], (0.9, -0.5), 0.3)
        assert d[0] == pytest.approx(1.0)

    def test_antipodal_wrap(self):
        # from (-1, 0) to (1, 0) around a unit-ish disk: two tangents plus an arc
        r, a = 0.5, 1.0
        d = disk_geodesic_distance([[a, 0.0]], (-a, 0.0), r)
        tangent = math.sqrt(a * a - r * r)
        arc = r * (math.pi - 2 * math.acos(r / a))
        assert d[0] == pytest.approx(2 * tangent + arc, rel=1e-12)

    def test_source_inside_disk(self):
        with pytest.raises(ConfigError):
            disk_geodesic_distance([[1, 0]], (0.1, 0.0), 0.3)


class TestInteriorPaths:
    def test_empty_domain_radial(self):
        path = interior_access_path(EmptyDomain(1.0), (0.3, 0.2, 2.0))
        assert [s.kind for s in path.segments] == ["radial"]
        assert path.max_speed == pytest.approx(1.0, abs=1e-12)
        x, y, t = path.start
        assert math.hypot(x, y) == pytest.approx(1.0)
        assert 2.0 - t == pytest.approx(1.0 - math.hypot(0.3, 0.2))

    def test_behind_disk_matches_oracle(self):
        target = (-0.5, 0.05, 2.5)
        path = interior_access_path(DISK, target)
        assert path.max_speed <= 1.0 + 1e-9
        kinds = [s.kind for s in path.segments]
        assert kinds[0] == "radial" and "boundary" in kinds
        assert path.segments[-1].kind == "descent"
        assert path.segments[-1].max_speed == pytest.approx(0.5, abs=1e-9)
        reach = reach_forward(DISK, "ring", (0.0, 2.5), resolution=100)
        i, j = reach.cell_of(target[:2])
        # the oracle reaches the cell no later than the constructed path arrives
        assert reach.first_arrival[i, j] <= target[2] + 3 * reach.dx
        # and the path start is a genuine cylinder point
        x, y, _ = path.start
        assert math.hypot(x, y) == pytest.approx(1.0)

    def test_vertical_line_case(self, slow_circle):
        dom = CurveObstacleDomain(slow_circle, 1.5)
        # at t = 3 the circle sits at its leftmost position; x = 0.55 was covered earlier
        path = interior_access_path(dom, (0.55, 0.0, 3.0))
        assert path.sigma0 == 0.0
        assert path.segments[-1].kind == "vertical"
        assert path.segments[-1].max_speed == 0.0
        np.testing.assert_allclose(path.segments[-1].x, [[0.55, 0.0]] * len(path.segments[-1].t))

    def test_targets_must_be_free(self):
        with pytest.raises(ConfigError):
            interior_access_path(DISK, (0.0, 0.1, 1.0))
        with pytest.raises(ConfigError):
            interior_access_path(DISK, (1.5, 0.0, 1.0))

    def test_every_segment_is_timelike(self, slow_circle):
        dom = CurveObstacleDomain(slow_circle, 1.5)
        for target in [(0.62, 0.0, 5.0), (-0.7, 0.3, 7.0), (0.0, -0.9, 4.0)]:
            path = interior_access_path(dom, target)
            assert path.max_speed <= 1.0 + 1e-9
            end = path.segments[-1]
            np.testing.assert_allclose(end.x[-1], target[:2], atol=1e-9)
            assert end.t[-1] == pytest.approx(target[2])


class TestInaccessibleReport:
    def test_unit_circle_obstacle_is_fully_accessible(self):
        rep = inaccessible_report(CurveObstacleDomain(CircleCurve(), 1.5), (0.0, 6.0),
                                  resolution=100, n_sigma=32)
        assert rep.empty and rep.never_reached_sigma.size == 0

    def test_slow_translating_circle_is_fully_accessible(self, slow_circle):
        rep = inaccessible_report(CurveObstacleDomain(slow_circle, 1.5), (0.0, 12.0),
                                  resolution=100, n_sigma=32)
        assert rep.empty

    def test_channel_domain_has_unreached_wall_samples(self, wall):
        dom = StefanovChannelDomain(wall, build_channel(wall).eps)
        rep = inaccessible_report(dom, (0.0, 20.0), resolution=200, n_sigma=33)
        assert not rep.empty
        assert -2.0 in rep.never_reached_sigma.tolist()

    def test_resolved_wide_channel_still_blocks_minus_M(self, wall):
        # eps = 0.12 spans several cells, so the wall samples near sigma = -M are
        # represented on the lattice; they are still never reached
        dom = StefanovChannelDomain(wall, 0.12)
        rep = inaccessible_report(dom, (0.0, 20.0), resolution=200, n_sigma=33)
        k = int(np.argmin(np.abs(rep.sigma + 2.0)))
        assert not rep.reached[k].any()
        assert not rep.unresolved[k].all()


class TestDomainConfig:
    def test_kinds(self):
        assert isinstance(domain_from_config({"kind": "EmptyDomain", "rho": 2}), EmptyDomain)
        d = domain_from_config({"kind": "DiskDomain", "radius": 0.2, "center": [0.1, 0]})
        assert d.radius == 0.2
        c = domain_from_config({"kind": "CurveObstacleDomain", "rho": 1.5,
                                "curve": {"family": "Circle", "radius": 0.5}})
        assert c.curve.radius == 0.5
        s = domain_from_config({"kind": "StefanovChannelDomain", "eps": 0.01})
        assert s.rho == 5.0 and s.eps == 0.01

    @pytest.mark.parametrize("cfg", [
        {"kind": "Torus"},
        {"kind": "DiskDomain", "radius": 0.2, "height": 1},
        {"kind": "DiskDomain", "radius": 0.5, "center": [0.6, 0], "rho": 1.0},
        {"kind": "CurveObstacleDomain"},
        {"kind": "StefanovChannelDomain", "eps": -0.1},
    ])
    def test_rejections(self, cfg):
        with pytest.raises(ConfigError):
            domain_from_config(cfg)
