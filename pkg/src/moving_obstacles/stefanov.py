"""Quantitative analysis of the oscillating-wall counterexample.

On the flat part ``|s| <= M`` of the wall ``(s, phi(s) f(k(2s - t)))`` the
leftmost characteristic obeys an autonomous equation in ``w = 2 sigma - t``:

    w' = -F(k w, k),   F(z, k) = (1 + 2 sqrt(c + (4c - 1) s)) / (1 + 4 s),

with ``s = k^2 f'(z)^2`` and cone constant ``c = 1``.  Because ``F > 0``,
``t - t0 = (1/k) int_{k w(t)}^{k w(t0)} dz / F``, and splitting the range into
whole periods shows that ``sigma_-`` drifts right at average rate
``(1 - 1/H0) / 2`` where ``H0 = int_0^1 dz / F``.

A thin channel under the wall widens the admissible cone: ``c = 2 + R(eta)``
with ``R`` an explicit bound on the terms dropped in the offset coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .boundary import (
    PeriodicProfile,
    StefanovWall,
    StefanovWallParams,
    build_stefanov_wall,
)
from .characteristics import (
    SpeedField,
    Trajectory,
    compiled_runner,
    integrate_characteristic,
    integrate_scalar,
)
from .errors import ConfigError, NumericalError

__all__ = [
    "drift_rate",
    "compute_H0",
    "abs_derivative_integral",
    "choose_k",
    "StefanovAnalysis",
    "analyze",
    "quadrature_time",
    "WallBoundReport",
    "verify_wall_bound",
    "widened_lambdas",
    "ChannelGeometry",
    "build_channel",
    "ChannelReport",
    "verify_channel_inaccessibility",
]

SQRT2 = math.sqrt(2.0)
SQRT6 = math.sqrt(6.0)


def drift_rate(k: float, f: PeriodicProfile, z, cone: float = 1.0):
    """``F(z, k)`` for cone constant ``cone`` (1 for the wall itself)."""
    s = (k * f.d1(z)) ** 2
    return (1.0 + 2.0 * np.sqrt(cone + (4.0 * cone - 1.0) * s)) / (1.0 + 4.0 * s)


def compute_H0(k: float, f: PeriodicProfile, cone: float = 1.0) -> float:
    """``int_0^1 dz / F(z, k)`` by adaptive quadrature (absolute error 1e-8 or better)."""
    val, err = integrate.quad(lambda z: 1.0 / float(drift_rate(k, f, z, cone)), 0.0, 1.0,
                              epsabs=1e-11, epsrel=1e-12, limit=400)
    if err > 1e-8:
        raise NumericalError(f"H0 quadrature error estimate {err:.2e} exceeds 1e-8")
    return float(val)


def abs_derivative_integral(f: PeriodicProfile) -> float:
    """``int_0^1 |f'|``, split at the zeros of ``f'``."""
    return f.abs_derivative_integral()


def choose_k(f: PeriodicProfile, channel: bool = False) -> int:
    """Smallest integer ``k`` with ``k int|f'| > sqrt 2`` (``sqrt 6`` for the channel)."""
    total = abs_derivative_integral(f)
    if total <= 1e-12:
        raise ConfigError("f' vanishes identically; no admissible k")
    threshold = SQRT6 if channel else SQRT2
    k = int(math.floor(threshold / total)) + 1
    while k * total <= threshold:  # guards the floor against rounding
        k += 1
    return k


@dataclass
class StefanovAnalysis:
    """Drift data for a given ``(k, f)``."""

    k: int
    f: PeriodicProfile
    abs_fprime_integral: float
    H0: float
    drift_slope: float
    cone: float = 1.0

    def F(self, z):
        return drift_rate(self.k, self.f, z, self.cone)

    def to_dict(self) -> dict:
        return {"k": self.k, "f": self.f.describe(),
                "abs_fprime_integral": self.abs_fprime_integral,
                "H0": self.H0, "drift_slope": self.drift_slope, "cone": self.cone}


def analyze(k: int, f: PeriodicProfile, cone: float = 1.0) -> StefanovAnalysis:
    H0 = compute_H0(k, f, cone)
    return StefanovAnalysis(int(k), f, abs_derivative_integral(f), H0, 1.0 - 1.0 / H0, cone)


def _inv_F_integral(k, f, a, b, cone=1.0):
    if b == a:
        return 0.0
    val, _ = integrate.quad(lambda z: 1.0 / float(drift_rate(k, f, z, cone)), a, b,
                            epsabs=1e-12, epsrel=1e-12, limit=400)
    return float(val)


def quadrature_time(k: int, f: PeriodicProfile, w_end: float, w_start: float, H0: float,
                    cone: float = 1.0):
    """``(1/k) int_{k w_end}^{k w_start} dz / F`` via whole periods plus a remainder.

    Returns ``(value, m, r)`` where ``k (w_start - w_end) = m + r``.
    """
    a, b = k * w_end, k * w_start
    span = b - a
    m = int(math.floor(span))
    r = span - m
    val = m * H0 + _inv_F_integral(k, f, a, a + r, cone)
    return val / k, m, r


# ---------------------------------------------------------------------------
# wall bound


@dataclass
class WallBoundReport:
    """Result of integrating the leftmost characteristic on the wall."""

    status: str                      # "Holds", "Violated" or "NotApplicable"
    analysis: StefanovAnalysis
    trajectory: Trajectory
    sigma0: float
    t0: float
    M: float
    bound_margin: float              # min over t of 2 sigma - (2 sigma0 + slope (t - t0) - 1/k)
    violating_t: float | None
    min_sigma: float
    reached_minus_M: bool
    checked_until: float             # last time used for the bound (the flat region)
    identity_residual: float
    identity_samples: int
    termination: str

    @property
    def ok(self) -> bool:
        return self.status == "Holds" and not self.reached_minus_M

    def to_dict(self) -> dict:
        return {
            "status": self.status, "analysis": self.analysis.to_dict(),
            "sigma0": self.sigma0, "t0": self.t0, "M": self.M,
            "bound_margin": self.bound_margin, "violating_t": self.violating_t,
            "min_sigma": self.min_sigma, "reached_minus_M": self.reached_minus_M,
            "checked_until": self.checked_until,
            "identity_residual": self.identity_residual,
            "identity_samples": self.identity_samples,
            "termination": self.termination,
        }


def verify_wall_bound(
    k: int,
    f: PeriodicProfile | None = None,
    sigma0: float = 0.0,
    t0: float = 0.0,
    horizon: float = 100.0,
    *,
    M: float = 2.0,
    L: float = 2.0,
    tol: float = 1e-6,
    identity_samples: int = 400,
) -> WallBoundReport:
    """Integrate ``sigma_-`` from ``(sigma0, t0)`` and test the drift lower bound.

    The bound ``2 sigma(t) >= 2 sigma0 + (1 - 1/H0)(t - t0) - 1/k`` and the
    quadrature identity are checked while the trajectory stays in the flat
    region ``|sigma| <= M`` (where they are derived).  ``sigma > -M`` is
    checked over the whole run.
    """
    f = f or PeriodicProfile.sine()
    wall = build_stefanov_wall(StefanovWallParams(k=k, M=M, L=L, f=f))
    if abs(sigma0) > M:
        raise ConfigError("sigma0 must lie in the flat region |sigma| <= M")
    info = analyze(k, f)
    traj = integrate_characteristic(SpeedField(wall, 1.0), sigma0, t0, t0 + horizon,
                                    h0=1.0 / 64.0)
    t, s = traj.t, traj.sigma
    inside = np.abs(s) <= M
    flat_end = len(s) if inside.all() else int(np.argmin(inside))
    tt, ss = t[:flat_end], s[:flat_end]
    lower = 2.0 * sigma0 + info.drift_slope * (tt - t0) - 1.0 / k
    gap = 2.0 * ss - lower
    margin = float(gap.min())
    status = "NotApplicable" if info.H0 <= 1.0 else ("Holds" if margin >= -tol else "Violated")
    violating = float(tt[np.argmin(gap)]) if margin < -tol else None
    # quadrature identity on an even subsample of the flat part
    pick = np.unique(np.linspace(0, flat_end - 1, min(identity_samples, flat_end)).astype(int))
    w = 2.0 * ss - tt
    w0 = 2.0 * sigma0 - t0
    resid = 0.0
    for i in pick:
        q, _, _ = quadrature_time(k, f, w[i], w0, info.H0)
        resid = max(resid, abs((tt[i] - t0) - q))
    return WallBoundReport(
        status=status, analysis=info, trajectory=traj, sigma0=sigma0, t0=t0, M=M,
        bound_margin=margin, violating_t=violating, min_sigma=float(s.min()),
        reached_minus_M=bool(np.any(s <= -M)), checked_until=float(tt[-1]),
        identity_residual=float(resid), identity_samples=int(len(pick)),
        termination=traj.termination,
    )


# ---------------------------------------------------------------------------
# channel


def widened_lambdas(wall: StefanovWall, sigma, t, cone: float):
    """Speeds of the cone ``|x_s|^2 l^2 + 2 (x_s . x_t) l + |x_t|^2 <= cone``."""
    s1, s2, u1, u2 = wall.tangent_components(sigma, t)
    A = s1 * s1 + s2 * s2
    b = s1 * u1 + s2 * u2
    C = u1 * u1 + u2 * u2 - cone
    root = np.sqrt(np.maximum(b * b - A * C, 0.0))
    return (-b - root) / A, (-b + root) / A


@dataclass
class ChannelGeometry:
    """Offset strip ``x + eta nu``, ``0 <= eta <= eps``, under the wall."""

    wall: StefanovWall
    eps: float
    delta: float
    delta_remainder: float
    delta_injective: float
    nu_dot_bound: float
    speed_bound: float
    remainder_coeffs: tuple[float, float]
    remainder_at_eps: float
    remainder_at_eps_initial: float
    min_offset_jacobian: float
    samples: tuple[int, int]

    def R(self, eta):
        """Remainder bound ``a1 eta + a2 eta^2`` (after the fixed-point pass)."""
        a1, a2 = self.remainder_coeffs
        eta = np.asarray(eta, dtype=float)
        return a1 * eta + a2 * eta * eta

    @property
    def cone_constant(self) -> float:
        return 2.0 + self.remainder_at_eps

    def to_dict(self) -> dict:
        return {
            "eps": self.eps, "delta": self.delta, "delta_remainder": self.delta_remainder,
            "delta_injective": self.delta_injective, "nu_dot_bound": self.nu_dot_bound,
            "speed_bound": self.speed_bound, "remainder_coeffs": list(self.remainder_coeffs),
            "remainder_at_eps": self.remainder_at_eps,
            "remainder_at_eps_initial": self.remainder_at_eps_initial,
            "cone_constant": self.cone_constant,
            "min_offset_jacobian": self.min_offset_jacobian, "samples": list(self.samples),
            "wall": self.wall.params.describe(),
        }


def _wall_grid(wall: StefanovWall, n_sigma: int, n_t: int):
    dom = wall.sigma_domain
    sig = np.linspace(dom.lo, dom.hi, n_sigma)
    ts = np.arange(n_t) / n_t
    return np.meshgrid(sig, ts, indexing="ij")


def _remainder_coeffs(wall, S, T, V):
    y, p, pt, ps, pst, _ = wall.graph(S, T)
    g = 1.0 + p * p
    nu_s = np.abs(ps) / g      # |d nu / d sigma|
    nu_t = np.abs(pst) / g     # |d nu / d t|
    n = nu_s * V + nu_t
    xs = np.sqrt(g)
    xt = np.abs(pt)
    a1 = float(np.max(2.0 * V * xs * n + 2.0 * xt * n))
    a2 = float(np.max(n * n))
    return a1, a2, float(np.max(nu_s + nu_t)), (p, ps, pst)


def _delta_from(a1, a2):
    if a2 <= 0:
        return 1.0 / a1 if a1 > 0 else math.inf
    return (-a1 + math.sqrt(a1 * a1 + 4.0 * a2)) / (2.0 * a2)


def build_channel(wall: StefanovWall, eps: float | None = None, *, n_sigma: int = 4097,
                  n_t: int = 256) -> ChannelGeometry:
    """Size the channel from sampled bounds on the offset-coordinate remainder.

    ``delta`` is the largest ``eta`` with ``R(eta) < 1`` that also keeps the
    offset map orientation-preserving; ``eps`` defaults to ``delta / 2``.
    """
    S, T = _wall_grid(wall, n_sigma, n_t)
    # initial speed bound uses the widest admissible cone, c = 2 + 1
    lm, lp = widened_lambdas(wall, S, T, 3.0)
    V0 = float(np.max(np.maximum(np.abs(lm), np.abs(lp))))
    a1, a2, nudot, (p, ps, pst) = _remainder_coeffs(wall, S, T, V0)
    d_rem = _delta_from(a1, a2)
    # Jacobian of (sigma, eta) -> x + eta nu is det0 + eta det1 with
    # det0 = -sqrt(1 + p^2) and det1 = -p_s / (1 + p^2)
    g = 1.0 + p * p
    det0 = -np.sqrt(g)
    det1 = -ps / g
    flips = det1 * det0 < 0
    d_inj = float(np.min(-det0[flips] / det1[flips])) if flips.any() else math.inf
    delta = min(d_rem, d_inj)
    if eps is None:
        eps = 0.5 * delta
    if not 0 < eps < delta:
        raise ConfigError(f"channel width eps={eps:.6g} must lie in (0, delta={delta:.6g})",
                          delta=delta)
    R0 = a1 * eps + a2 * eps * eps
    # one fixed-point pass: the speed bound for cone 2 + R0(eps) is smaller
    lm, lp = widened_lambdas(wall, S, T, 2.0 + R0)
    V1 = float(np.max(np.maximum(np.abs(lm), np.abs(lp))))
    b1, b2, _, _ = _remainder_coeffs(wall, S, T, V1)
    R1 = b1 * eps + b2 * eps * eps
    jac = np.abs(det0 + eps * det1)
    return ChannelGeometry(
        wall=wall, eps=float(eps), delta=float(delta), delta_remainder=float(d_rem),
        delta_injective=float(d_inj), nu_dot_bound=nudot, speed_bound=V1,
        remainder_coeffs=(b1, b2), remainder_at_eps=float(R1),
        remainder_at_eps_initial=float(R0), min_offset_jacobian=float(jac.min()),
        samples=(n_sigma, n_t),
    )


@dataclass
class ChannelReport:
    """Outcome of the worst-case leftward sweep through the channel."""

    inaccessible: bool
    cone_constant: float
    start_times: np.ndarray
    min_sigma: np.ndarray
    M: float
    horizon: float
    widened_H0: float
    counterexample: Trajectory | None = None
    trajectories: list = field(default_factory=list)
    grid: dict | None = None
    reach: object | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {
            "inaccessible": self.inaccessible, "cone_constant": self.cone_constant,
            "start_times": self.start_times.tolist(), "min_sigma": self.min_sigma.tolist(),
            "M": self.M, "horizon": self.horizon, "widened_H0": self.widened_H0,
        }
        if self.counterexample is not None:
            tr = self.counterexample
            out["counterexample"] = {"t": tr.t[::max(1, len(tr.t) // 200)].tolist(),
                                     "sigma": tr.sigma[::max(1, len(tr.t) // 200)].tolist()}
        if self.grid is not None:
            out["grid"] = self.grid
        return out


def verify_channel_inaccessibility(
    channel: ChannelGeometry,
    horizon: float = 100.0,
    *,
    start_times=None,
    cone_constant: float | None = None,
    grid_check: bool = False,
    grid_resolution: int = 400,
    tol: float = 1e-8,
) -> ChannelReport:
    """Sweep ``sigma' = Lambda~_-`` from ``sigma = M`` and look for arrival at ``-M``.

    Several phases of the start time are integrated together.  With
    ``grid_check`` the assembled channel domain is also run through the grid
    reachability oracle, whose verdict is stored under ``grid``.
    """
    wall = channel.wall
    M = wall.params.M
    c = channel.cone_constant if cone_constant is None else float(cone_constant)
    taus = np.arange(8) / 8.0 if start_times is None else np.asarray(start_times, float)

    def rate(y, t):
        return widened_lambdas(wall, y, t + taus, c)[0]

    runner = compiled_runner(wall, 1.0, cone=c, taus=taus)
    run, _ = integrate_scalar(rate, np.full(taus.size, float(M)), 0.0, horizon, tol=tol,
                              h0=1.0 / 64.0, domain=wall.sigma_domain, runner=runner)
    mins = np.nanmin(run.y, axis=0)
    crossed = mins <= -M
    counter = None
    trajs = []
    for j in range(taus.size):
        ok = np.isfinite(run.y[:, j])
        tr = Trajectory(run.t[ok] + taus[j], run.y[ok, j], None,
                        "HorizonReached" if run.exit_side[j] == 0 else
                        ("LeftInterval(lo)" if run.exit_side[j] < 0 else "LeftInterval(hi)"),
                        horizon / (len(run.t) - 1))
        trajs.append(tr)
        if crossed[j] and counter is None:
            counter = tr
    grid = reach = None
    if grid_check:
        from .accessibility import StefanovChannelDomain, channel_mouth_check

        dom = StefanovChannelDomain(wall, channel.eps)
        grid, reach = channel_mouth_check(dom, horizon=horizon, resolution=grid_resolution,
                                          keep_reach=True)
    inacc = not crossed.any()
    if grid is not None:
        inacc = inacc and not grid["mouth_reached"]
    kw = wall.params
    return ChannelReport(
        inaccessible=bool(inacc), cone_constant=c, start_times=taus, min_sigma=mins, M=M,
        horizon=horizon, widened_H0=compute_H0(kw.k, kw.f, c), counterexample=counter,
        trajectories=trajs, grid=grid, reach=reach,
    )
