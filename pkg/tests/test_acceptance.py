"""Acceptance run: one test per criterion, each printing a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the summary lines
(they are printed with output capture disabled, so plain ``pytest`` shows
them as well).
"""

import math
import time

import numpy as np
import pytest

from moving_obstacles.accessibility import (
    CurveObstacleDomain,
    DiskDomain,
    apex_seeds,
    boundary_fan,
    disk_geodesic_distance,
    inaccessible_report,
    reach_forward,
)
from moving_obstacles.boundary import (
    CircleCurve,
    PeriodicProfile,
    StefanovWallParams,
    TranslatingCurve,
    build_stefanov_wall,
    normal_speed,
    orbiting_breathing_circle,
    sample_grid,
)
from moving_obstacles.characteristics import SpeedField, classify_orbit, fan_criterion, lambda_pm
from moving_obstacles.cone_geometry import (
    cone_algebra_survey,
    finite_difference_jacobian,
    flow_from_field,
    jacobian_bound_check,
    pulse_swirl_field,
    rigid_rotation_field,
)
from moving_obstacles.stefanov import (
    abs_derivative_integral,
    build_channel,
    choose_k,
    compute_H0,
    verify_channel_inaccessibility,
    verify_wall_bound,
)

SINE = PeriodicProfile.sine()
TWO_PI = 2 * math.pi


@pytest.fixture
def report(capsys, request):
    """Print ``criterion N: PASS|FAIL  detail`` and assert the verdict."""

    def emit(number, ok, detail, elapsed=None, limit=None):
        timing = ""
        if elapsed is not None:
            timing = f"  [{elapsed:.1f} s"
            if limit is not None:
                timing += f" / limit {limit:g} s"
                ok = ok and elapsed < limit
            timing += "]"
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}{timing}"
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return emit


@pytest.fixture(scope="module")
def default_wall():
    return build_stefanov_wall(StefanovWallParams(k=choose_k(SINE, channel=True), M=2.0,
                                                  L=2.0, f=SINE))


def test_criterion_01_wall_normal_speed(report, default_wall):
    t0 = time.perf_counter()
    S, T = sample_grid(default_wall, 1024)
    ns = normal_speed(default_wall, S, T)
    worst = float(np.max(np.abs(ns)))
    bound = 1 / math.sqrt(2) + 1e-9
    report(1, worst <= bound, f"max |nu_x . x_t| = {worst:.12f} <= 1/sqrt2 + 1e-9 "
                              f"on {S.size} samples", time.perf_counter() - t0, 5)


def test_criterion_02_lambda_minus_bound(report, default_wall):
    t0 = time.perf_counter()
    S, T = sample_grid(default_wall, 1024)
    flat = np.abs(S) <= default_wall.params.M
    lm, _ = lambda_pm(default_wall, S[flat], T[flat])
    lo = float(lm.min())
    report(2, lo >= -1 - 1e-9, f"min Lambda_- on |sigma| <= M = {lo:.12f} >= -1 - 1e-9",
           time.perf_counter() - t0, 5)


def test_criterion_03_threshold_and_H0(report):
    t0 = time.perf_counter()
    k = choose_k(SINE, channel=True)
    total = abs_derivative_integral(SINE)
    H0 = compute_H0(k, SINE)
    ok = k * total > math.sqrt(6) and H0 > 1 and choose_k(SINE, channel=True) == k
    report(3, ok, f"k = {k}, k int|f'| = {k * total:.6f} > sqrt6, H0 = {H0:.10f} > 1",
           time.perf_counter() - t0, 1)


@pytest.fixture(scope="module")
def long_wall_run():
    # M = 60 keeps the whole 100-period run on the flat part, where the bound
    # and the quadrature identity are derived
    t0 = time.perf_counter()
    rep = verify_wall_bound(choose_k(SINE, channel=True), SINE, 0.0, 0.0, 100.0,
                            M=60.0, L=2.0, tol=1e-5)
    return rep, time.perf_counter() - t0


def test_criterion_04_drift_lower_bound(report, long_wall_run):
    rep, elapsed = long_wall_run
    t0 = time.perf_counter()
    short = verify_wall_bound(rep.analysis.k, SINE, 0.0, 0.0, 100.0, M=2.0, L=2.0)
    elapsed += time.perf_counter() - t0
    ok = (rep.status == "Holds" and rep.bound_margin >= -1e-5
          and rep.checked_until == pytest.approx(100.0)
          and not rep.reached_minus_M and not short.reached_minus_M)
    report(4, ok, f"min gap = {rep.bound_margin:.6f} >= -1e-5 over t in [0, "
                  f"{rep.checked_until:g}]; min sigma_- = {min(rep.min_sigma, short.min_sigma):.4f}"
                  f" > -M (M = 2 wall: {short.termination})", elapsed, 30)


def test_criterion_05_ode_quadrature_identity(report, long_wall_run):
    rep, _ = long_wall_run
    ok = rep.identity_residual < 1e-6
    report(5, ok, f"max |(t - t0) - quadrature| = {rep.identity_residual:.3e} < 1e-6 "
                  f"at {rep.identity_samples} points")


def test_criterion_06_channel_inaccessibility(report, default_wall):
    t0 = time.perf_counter()
    channel = build_channel(default_wall)
    rep = verify_channel_inaccessibility(channel, 100.0, grid_check=True, grid_resolution=400)
    g = rep.grid
    ok_a = rep.counterexample is None and bool(np.all(rep.min_sigma > -default_wall.params.M))
    ok_b = not g["mouth_reached"] and g["resolution"] == 400 and g["dt"] <= g["dx"] / 2
    report(6, ok_a and ok_b,
           f"eps = {channel.eps:.3e}, cone 2+R = {rep.cone_constant:.4f}; (a) min sigma over "
           f"{rep.start_times.size} phases = {rep.min_sigma.min():.4f} > -M; (b) mouth reached = "
           f"{g['mouth_reached']} ({g['mouth_cells']} mouth cells, {g['free_mouth_cells']} free, "
           f"channel resolved = {g['channel_resolved']})",
           time.perf_counter() - t0, 600)


def test_criterion_07_fan_criterion(report):
    t0 = time.perf_counter()
    curve = TranslatingCurve(0.5, (0.1, 0.0), time_period=4.0)
    fc = fan_criterion(curve, 512)
    (seed,) = apex_seeds(curve)
    fan = boundary_fan(curve, seed, 20.0)
    bound = curve.sigma_domain.period / fc.margin + 2 * curve.time_period
    cover = fan.coverage_time - seed.t if fan.coverage_time is not None else math.inf
    rep = inaccessible_report(CurveObstacleDomain(curve, 1.5), (0.0, 12.0),
                              resolution=200, n_sigma=64)
    ok = fc.satisfied and cover <= bound and rep.empty
    report(7, ok, f"margin = {fc.margin:.4f}, coverage = {cover:.4f} <= {bound:.4f}; "
                  f"unreached boundary samples after burn-in: {rep.never_reached_sigma.size}",
           time.perf_counter() - t0, 120)


def test_criterion_08_orbit_trichotomy(report):
    r0 = (1 + 1.5e-5) / TWO_PI - 0.1
    field = SpeedField(orbiting_breathing_circle(0.1, r0, 5e-6), 0.0)
    res = classify_orbit(field, -0.02, horizon_periods=200)
    circ = classify_orbit(SpeedField(CircleCurve(), 0.0), 0.0, horizon_periods=200)
    mono = bool(np.all(np.diff(res.residuals) <= 0)) and len(res.residuals) == 10
    ok = (res.kind.startswith("Asymptotic") and mono and res.fixed_point_residual < 1e-6
          and circ.kind == "UnboundedUp"
          and abs(circ.rotation_number - 1 / TWO_PI) <= 1e-6)
    report(8, ok, f"{res.kind}, |P(s*) - s*| = {res.fixed_point_residual:.2e}, last-10 "
                  f"residuals monotone = {mono}; circle {circ.kind} rotation "
                  f"{circ.rotation_number:.9f} (1/2pi = {1 / TWO_PI:.9f})")


def test_criterion_09_cone_algebra(report):
    t0 = time.perf_counter()
    s = cone_algebra_survey(1000, seed=0)
    ok = (s.det_identity <= 1e-10 and s.tau_residual <= 1e-10 and s.tau_sign_failures == 0
          and s.orthogonality_violations == 0 and s.tangent_identity <= 1e-10
          and s.orthogonality_tested > 0)
    report(9, ok, f"det {s.det_identity:.1e}, tau {s.tau_residual:.1e} ({s.tau_sign_failures} "
                  f"sign failures), orthogonality {s.orthogonality_violations}/"
                  f"{s.orthogonality_tested} violations, tangent {s.tangent_identity:.1e}",
           time.perf_counter() - t0, 10)


def test_criterion_10_flow_bounds(report):
    seeds = np.array([[0.5, 0.0], [0.0, -0.8], [0.3, 0.4], [-0.9, 0.1]])
    pulse = flow_from_field(pulse_swirl_field(0.4, 0.2, 0.8, 0.3, 1.2), seeds, (0.0, 2.0),
                            n_steps=400)
    _, fd_err = finite_difference_jacobian(pulse)
    gw = jacobian_bound_check(pulse, rel_tol=1e-6, strict=False)
    rot = flow_from_field(rigid_rotation_field(0.7), seeds, (0.0, 3.0), n_steps=300)
    norms = np.linalg.norm(rot.J, ord=2, axis=(-2, -1))
    rot_err = float(np.max(np.abs(norms - 1)))
    ok = fd_err < 1e-5 and gw.ok and rot_err <= 1e-10
    report(10, ok, f"FD vs variational {fd_err:.2e} < 1e-5; Gronwall ratios "
                   f"{gw.max_forward_ratio:.8f} / {gw.min_backward_ratio:.8f}; "
                   f"rotation | ||J|| - 1 | = {rot_err:.1e}")


def _disk_error(n):
    dom = DiskDomain(0.3, (0.0, 0.0), 1.0)
    src = (-0.99, 0.0)
    reach = reach_forward(dom, {"points": [src], "time": 0.0}, (0.0, 2.5), resolution=n)
    X1, X2 = reach.mesh()
    exact = disk_geodesic_distance(np.column_stack([X1.ravel(), X2.ravel()]), src,
                                   dom.radius).reshape(X1.shape)
    mask = reach.inside & ~reach.obstacle[0] & (exact <= reach.t_end - 2 * reach.dx)
    fa = np.where(np.isfinite(reach.first_arrival), reach.first_arrival, np.inf)
    return reach.dx, float(np.abs(fa - exact)[mask].max())


def test_criterion_11_oracle_convergence(report):
    t0 = time.perf_counter()
    coarse_dx, coarse = _disk_error(100)
    dx, err = _disk_error(200)
    half_dx, half = _disk_error(400)
    ok = abs(dx - 0.01) < 1e-12 and err <= 3 * dx and half <= err / 2
    report(11, ok, f"max error at dx = {dx:g}: {err:.2e} ({err / dx:.3f} dx <= 3 dx); "
                   f"at dx = {half_dx:g}: {half:.2e} (ratio {err / half:.2f} >= 2); "
                   f"for reference dx = {coarse_dx:g}: {coarse:.2e} (ratio {coarse / err:.2f})",
           time.perf_counter() - t0, 300)
