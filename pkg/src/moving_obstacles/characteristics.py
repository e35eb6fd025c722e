"""Null characteristics on a time-like boundary.

A curve ``t -> x(sigma(t), t)`` on the boundary is null when

    |x_s|^2 s'^2 + 2 (x_s . x_t) s' - (1 - |x_t|^2) = 0,

whose two roots are the speeds ``Lambda_-`` < ``Lambda_+``.  Blending them,
``s' = alpha Lambda_- + (1 - alpha) Lambda_+``, sweeps all time-like
directions along the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .boundary import BoundaryCurve2D, CircleDomain, IntervalDomain, sample_grid
from . import _kernels
from .errors import DomainError, StepFailure, TimelikeViolation, Undetermined

__all__ = [
    "lambda_pm",
    "lambdas_from_derivatives",
    "SpeedField",
    "Trajectory",
    "integrate_scalar",
    "integrate_characteristic",
    "poincare_map",
    "OrbitClassification",
    "classify_orbit",
    "FanCriterion",
    "fan_criterion",
]

TOL_ODE = 1e-8
TOL_ORBIT = 1e-6
DISC_CLAMP = 1e-12


def lambdas_from_derivatives(xs, xt):
    """Roots of the null-speed quadratic from ``x_sigma`` and ``x_t``.

    Uses the cancellation-free form of the quadratic formula, so the Vieta
    product ``Lambda_+ Lambda_- = -(1 - |x_t|^2) / |x_s|^2`` holds to rounding.
    """
    return _lambdas_components(xs[..., 0], xs[..., 1], xt[..., 0], xt[..., 1])


def _lambdas_components(s1, s2, u1, u2):
    A = s1 * s1 + s2 * s2
    b = s1 * u1 + s2 * u2
    C = u1 * u1 + u2 * u2 - 1.0
    disc = b * b - A * C
    if np.any(disc < -DISC_CLAMP):
        raise TimelikeViolation(
            f"negative discriminant {np.min(disc):.3e}: boundary not time-like",
            discriminant=float(np.min(disc)),
        )
    root = np.sqrt(np.maximum(disc, 0.0))
    q = -(b + np.copysign(root, b))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = q / A
        r2 = np.where(q != 0.0, C / q, 0.0)
    return np.minimum(r1, r2), np.maximum(r1, r2)


def _scalar_lambdas(s1, s2, u1, u2):
    A = s1 * s1 + s2 * s2
    b = s1 * u1 + s2 * u2
    C = u1 * u1 + u2 * u2 - 1.0
    disc = b * b - A * C
    if disc < -DISC_CLAMP:
        raise TimelikeViolation(f"negative discriminant {disc:.3e}: boundary not time-like",
                                discriminant=disc)
    q = -(b + math.copysign(math.sqrt(max(disc, 0.0)), b))
    r1 = q / A
    r2 = C / q if q != 0.0 else 0.0
    return (r1, r2) if r1 <= r2 else (r2, r1)


def lambda_pm(curve: BoundaryCurve2D, sigma, t, check: bool = True):
    """``(Lambda_-, Lambda_+)`` at ``(sigma, t)``."""
    _, xs, xt = curve.evaluate(sigma, t, check=check)
    return lambdas_from_derivatives(xs, xt)


@dataclass(frozen=True)
class SpeedField:
    """The blended field ``alpha Lambda_- + (1 - alpha) Lambda_+`` on a curve."""

    curve: BoundaryCurve2D
    alpha: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    def rate(self, sigma, t):
        lm, lp = _lambdas_components(*self.curve.tangent_components(sigma, t))
        return self.alpha * lm + (1.0 - self.alpha) * lp

    def runner(self, cone: float = 1.0, taus=None):
        """Compiled RK4 runner for ``integrate_scalar``, or ``None``."""
        return compiled_runner(self.curve, self.alpha, cone, taus)

    def scalar_rate(self, sigma: float, t: float) -> float:
        lm, lp = _scalar_lambdas(*self.curve.scalar_tangent(sigma, t))
        return self.alpha * lm + (1.0 - self.alpha) * lp

    @property
    def period(self) -> float | None:
        return self.curve.time_period


# ---------------------------------------------------------------------------
# integration


@dataclass
class _Run:
    t: np.ndarray          # (n+1,)
    y: np.ndarray          # (n+1, m); NaN after exit
    exit_step: np.ndarray  # (m,) index of last in-domain sample, -1 if never exited
    exit_side: np.ndarray  # (m,) -1 low end, +1 high end, 0 none


def _rk4_run(rate, y0, t0, t1, n, domain) -> _Run:
    y = np.array(y0, dtype=float, copy=True)
    m = y.size
    h = (t1 - t0) / n
    ts = t0 + h * np.arange(n + 1)
    out = np.full((n + 1, m), np.nan)
    out[0] = y
    alive = np.ones(m, dtype=bool)
    exit_step = np.full(m, -1)
    exit_side = np.zeros(m, dtype=int)
    interval = isinstance(domain, IntervalDomain)
    for i in range(n):
        if not alive.any():
            break
        t = ts[i]
        # every element is advanced so that rate closures may rely on fixed
        # positions; exited elements are simply frozen afterwards
        k1 = rate(y, t)
        k2 = rate(y + 0.5 * h * k1, t + 0.5 * h)
        k3 = rate(y + 0.5 * h * k2, t + 0.5 * h)
        k4 = rate(y + h * k3, t + h)
        ynew = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(ynew[alive])):
            raise StepFailure(f"non-finite state at t={t:.6g}", t=float(t))
        if interval:
            low = alive & (ynew < domain.lo)
            high = alive & (ynew > domain.hi)
            gone = low | high
            if gone.any():
                exit_step[gone] = i
                exit_side[low] = -1
                exit_side[high] = 1
                alive &= ~gone
        y = np.where(alive, ynew, y)
        out[i + 1, alive] = y[alive]
    return _Run(ts, out, exit_step, exit_side)


def _rk4_run_single(rate1, y0, t0, t1, n, domain) -> _Run:
    """Pure-float loop for one trajectory; avoids array overhead per step."""
    h = (t1 - t0) / n
    ts = t0 + h * np.arange(n + 1)
    out = np.full(n + 1, np.nan)
    y = float(y0)
    out[0] = y
    interval = isinstance(domain, IntervalDomain)
    lo, hi = (domain.lo, domain.hi) if interval else (-math.inf, math.inf)
    side, last = 0, -1
    hh = 0.5 * h
    for i in range(n):
        t = t0 + i * h
        k1 = rate1(y, t)
        k2 = rate1(y + hh * k1, t + hh)
        k3 = rate1(y + hh * k2, t + hh)
        k4 = rate1(y + h * k3, t + h)
        ynew = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not math.isfinite(ynew):
            raise StepFailure(f"non-finite state at t={t:.6g}", t=float(t))
        if ynew < lo or ynew > hi:
            side, last = (-1 if ynew < lo else 1), i
            break
        y = ynew
        out[i + 1] = y
    return _Run(ts, out[:, None], np.array([last]), np.array([side]))


def compiled_runner(curve: BoundaryCurve2D, alpha: float, cone: float = 1.0, taus=None):
    """Wrap the numba kernel for ``curve`` as ``run(y0, t0, t1, n, domain)``."""
    if not _kernels.HAVE_NUMBA:
        return None
    spec = curve.kernel_spec()
    if spec is None:
        return None
    kind, P, W, A, B, C4 = spec

    def run(y0, t0, t1, n, domain):
        y0 = np.ascontiguousarray(y0, dtype=float)
        tau = np.zeros(y0.size) if taus is None else np.ascontiguousarray(taus, dtype=float)
        if isinstance(domain, IntervalDomain):
            lo, hi = domain.lo, domain.hi
        else:
            lo, hi = -math.inf, math.inf
        h = (t1 - t0) / n
        out, step, side = _kernels.rk4_kernel(kind, y0, tau, float(t0), float(h), int(n),
                                              float(alpha), float(cone), lo, hi,
                                              P, W, A, B, C4)
        if np.any(side == 2):
            raise StepFailure("non-finite state (time-likeness lost mid-integration)")
        return _Run(t0 + h * np.arange(n + 1), out, step, side)

    return run


def integrate_scalar(
    rate: Callable[[np.ndarray, float], np.ndarray],
    y0,
    t0: float,
    t1: float,
    *,
    tol: float = TOL_ODE,
    n0: int | None = None,
    h0: float = 1.0 / 64.0,
    domain=None,
    max_halvings: int = 14,
    scalar_rate: Callable[[float, float], float] | None = None,
    runner=None,
):
    """Fixed-step RK4 with Richardson acceptance by step halving.

    The number of steps doubles until two successive runs agree to ``tol`` at
    every common sample (both still inside the domain).  Returns the finer
    run together with the achieved difference.
    """
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    span = t1 - t0
    if span == 0.0:
        run = _Run(np.array([t0]), y0[None, :].copy(), np.full(y0.size, -1),
                   np.zeros(y0.size, dtype=int))
        return run, 0.0
    n = n0 if n0 is not None else max(1, int(math.ceil(abs(span) / h0)))

    def run_n(steps):
        if runner is not None:
            return runner(y0, t0, t1, steps, domain)
        if scalar_rate is not None and y0.size == 1:
            return _rk4_run_single(scalar_rate, y0[0], t0, t1, steps, domain)
        return _rk4_run(rate, y0, t0, t1, steps, domain)

    coarse = run_n(n)
    diff = math.inf
    for _ in range(max_halvings):
        fine = run_n(2 * n)
        a = coarse.y
        b = fine.y[::2]
        both = np.isfinite(a) & np.isfinite(b)
        diff = float(np.max(np.abs(a[both] - b[both]))) if both.any() else 0.0
        same_exit = np.array_equal(coarse.exit_side, fine.exit_side)
        if diff < tol and same_exit:
            return fine, diff
        coarse, n = fine, 2 * n
    raise StepFailure(
        f"step halving did not reach tolerance {tol:g} (last difference {diff:.3e})",
        difference=diff, steps=n,
    )


@dataclass
class Trajectory:
    """Samples ``(t_i, sigma_i)`` of one characteristic.

    ``sigma`` is unwrapped (no reduction modulo the period) so that lap counts
    are exact.  ``termination`` is ``"HorizonReached"``, ``"LeftInterval(lo)"``,
    ``"LeftInterval(hi)"`` or ``"StepFailure"``.
    """

    t: np.ndarray
    sigma: np.ndarray
    winding: int | None
    termination: str
    step: float
    field: SpeedField | None = None
    ode_difference: float = 0.0

    @property
    def sigma_end(self) -> float:
        return float(self.sigma[-1])

    def lambdas(self):
        if self.field is None:
            raise ValueError("trajectory has no field attached")
        return lambda_pm(self.field.curve, self.sigma, self.t, check=False)

    def rows(self):
        """``(t, sigma, Lambda_-, Lambda_+)`` rows for CSV export."""
        lm, lp = self.lambdas()
        return np.column_stack([self.t, self.sigma, lm, lp])

    def value_at(self, t: float) -> float:
        """Linear interpolation in time (for plotting and checks)."""
        order = np.argsort(self.t)
        return float(np.interp(t, self.t[order], self.sigma[order]))


def _winding(curve: BoundaryCurve2D, sigma0: float, sigma_end: float) -> int | None:
    if not isinstance(curve.sigma_domain, CircleDomain):
        return None
    laps = (sigma_end - sigma0) / curve.sigma_domain.period
    return int(math.copysign(math.floor(abs(laps) + 1e-9), laps))


def integrate_characteristic(
    field: SpeedField,
    sigma0: float,
    t0: float,
    t_end: float,
    *,
    tol: float = TOL_ODE,
    h0: float = 1.0 / 64.0,
    n0: int | None = None,
) -> Trajectory:
    """Integrate ``sigma' = alpha Lambda_- + (1 - alpha) Lambda_+`` from ``(sigma0, t0)``.

    ``t_end`` may precede ``t0``.  On interval domains the trajectory stops at
    the last sample inside the interval.
    """
    dom = field.curve.sigma_domain
    if isinstance(dom, IntervalDomain) and not dom.contains(sigma0):
        raise DomainError(f"sigma0={sigma0} outside [{dom.lo}, {dom.hi}]")
    run, diff = integrate_scalar(field.rate, [sigma0], t0, t_end, tol=tol, h0=h0, n0=n0,
                                 domain=dom, scalar_rate=field.scalar_rate, runner=field.runner())
    ys = run.y[:, 0]
    ok = np.isfinite(ys)
    last = int(np.flatnonzero(ok)[-1])
    ts, ys = run.t[: last + 1], ys[: last + 1]
    side = int(run.exit_side[0])
    term = "HorizonReached" if side == 0 else ("LeftInterval(lo)" if side < 0 else "LeftInterval(hi)")
    h = (t_end - t0) / (len(run.t) - 1) if len(run.t) > 1 else 0.0
    return Trajectory(ts, ys, _winding(field.curve, sigma0, float(ys[-1])), term, h,
                      field, diff)


def _require_period(field: SpeedField) -> float:
    T = field.curve.time_period
    if not T:
        raise ValueError("the curve has no time period")
    return float(T)


def poincare_map(field: SpeedField, sigma0, t0: float = 0.0, *, tol: float = TOL_ODE,
                 steps_per_period: int = 64):
    """One-period flow map ``sigma0 -> sigma(t0 + T)`` (vectorized in ``sigma0``).

    Orbits that leave an interval domain within the period map to NaN.
    """
    T = _require_period(field)
    s0 = np.asarray(sigma0, dtype=float)
    run, _ = integrate_scalar(field.rate, s0.ravel(), t0, t0 + T, tol=tol,
                              n0=steps_per_period, domain=field.curve.sigma_domain,
                              scalar_rate=field.scalar_rate, runner=field.runner())
    out = run.y[-1].reshape(s0.shape)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# orbit classification


@dataclass
class OrbitClassification:
    """Outcome of the Poincare-section analysis of one orbit."""

    kind: str
    sections: np.ndarray
    drifts: np.ndarray
    limit_orbit: tuple[np.ndarray, np.ndarray] | None = None
    fixed_point: float | None = None
    fixed_point_residual: float | None = None
    convergence_rate: float | None = None
    rotation_number: float | None = None
    residuals: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "fixed_point": self.fixed_point,
            "fixed_point_residual": self.fixed_point_residual,
            "convergence_rate": self.convergence_rate,
            "rotation_number": self.rotation_number,
            "sections_head": self.sections[:5].tolist(),
            "sections_tail": self.sections[-5:].tolist(),
            "last_drifts": self.drifts[-10:].tolist(),
        }
        if self.residuals is not None:
            out["tail_residuals"] = self.residuals.tolist()
        return out


def _section_run(field, sigma0, t0, N, T, tol, steps_per_period):
    run, _ = integrate_scalar(field.rate, [sigma0], t0, t0 + N * T, tol=tol,
                              n0=N * steps_per_period, domain=field.curve.sigma_domain,
                              scalar_rate=field.scalar_rate, runner=field.runner())
    per = (len(run.t) - 1) // N
    return run, per


def classify_orbit(
    field: SpeedField,
    sigma0: float,
    t0: float = 0.0,
    horizon_periods: int = 200,
    *,
    tol_orbit: float = TOL_ORBIT,
    tol: float = TOL_ODE,
    steps_per_period: int = 64,
    tail: int = 10,
) -> OrbitClassification:
    """Classify the orbit through ``(sigma0, t0)`` by its Poincare sections.

    Decision order: periodic if the first return moves less than
    ``tol_orbit``; asymptotic if the section sequence is monotone and a fixed
    point of the return map lies ahead of it (found by bracketing and
    bisection); unbounded if the orbit leaves an interval domain or, on a
    closed curve, no fixed point exists within one lap.  Anything else raises
    ``Undetermined``.
    """
    N = int(horizon_periods)
    if N < 50:
        raise ValueError("horizon_periods must be at least 50")
    T = _require_period(field)
    dom = field.curve.sigma_domain
    run, per = _section_run(field, sigma0, t0, N, T, tol, steps_per_period)
    ys = run.y[:, 0]
    sections = ys[::per]
    drifts = np.diff(sections)

    side = int(run.exit_side[0])
    if side != 0:
        kind = "UnboundedUp" if side > 0 else "UnboundedDown"
        return OrbitClassification(kind, sections, drifts)

    first = ys[: per + 1]
    if abs(drifts[0]) < tol_orbit:
        shift = np.abs(ys[per: 2 * per + 1] - first)
        if np.max(shift) < tol_orbit:
            return OrbitClassification(
                "Periodic", sections, drifts,
                limit_orbit=(run.t[: per + 1] - t0, first.copy()),
                fixed_point=float(sigma0), fixed_point_residual=float(abs(drifts[0])),
                rotation_number=0.0 if isinstance(dom, CircleDomain) else None,
            )

    direction = 1.0 if drifts[-1] > 0 or (drifts[-1] == 0 and drifts[0] > 0) else -1.0

    def g(u):
        return poincare_map(field, u, t0, tol=tol, steps_per_period=steps_per_period) - u

    bracket = _search_bracket(g, float(sections[-1]), direction, abs(drifts[-1]), dom)
    if bracket is None:
        if isinstance(dom, CircleDomain):
            rot = float((sections[-1] - sections[0]) / N)
            kind = "UnboundedUp" if direction > 0 else "UnboundedDown"
            return OrbitClassification(kind, sections, drifts, rotation_number=rot)
        raise Undetermined(
            "no exit and no fixed point found within the horizon",
            drifts=drifts.tolist(),
        )
    star = _bisect(g, *bracket)
    resid = abs(g(star))
    limit = integrate_scalar(field.rate, [star], t0, t0 + T, tol=tol, n0=per,
                             domain=dom, scalar_rate=field.scalar_rate, runner=field.runner())[0]
    stride = (len(limit.t) - 1) // per
    w_inf = limit.y[::stride, 0]
    tails = []
    for n in range(N - tail, N):
        seg = ys[n * per: (n + 1) * per + 1]
        tails.append(float(np.max(np.abs(seg - w_inf))))
    tails = np.array(tails)
    rate = None
    nz = drifts[:-1] != 0
    if np.count_nonzero(nz[-tail:]) > 0:
        ratios = drifts[1:][nz] / drifts[:-1][nz]
        rate = float(np.mean(ratios[-tail:]))
    if not np.all(np.diff(tails) <= 0.0):
        raise Undetermined(
            "section sequence approaches a fixed point but tail residuals are not monotone",
            drifts=drifts.tolist(), residuals=tails.tolist(), fixed_point=star,
        )
    kind = "AsymptoticFromBelow" if sections[-1] < star else "AsymptoticFromAbove"
    if sections[-1] == star:
        kind = "AsymptoticFromBelow" if direction > 0 else "AsymptoticFromAbove"
    return OrbitClassification(
        kind, sections, drifts,
        limit_orbit=(limit.t[::stride] - t0, w_inf.copy()), fixed_point=star,
        fixed_point_residual=float(resid), convergence_rate=rate,
        rotation_number=0.0 if isinstance(dom, CircleDomain) else None,
        residuals=tails,
    )


def _search_bracket(g, start, direction, step, dom):
    """Walk from ``start`` in ``direction`` until ``g`` changes sign."""
    window = dom.period if isinstance(dom, CircleDomain) else dom.length
    step = max(step, 1e-9)
    u0, g0 = start, g(start)
    if not np.isfinite(g0):
        return None
    if g0 == 0.0:
        return (u0, u0)
    if np.sign(g0) != direction:
        # already past the fixed point: it lies behind, between the last two sections
        return None
    travelled = 0.0
    while travelled <= window:
        u1 = u0 + direction * step
        if isinstance(dom, IntervalDomain) and not dom.contains(u1):
            return None
        g1 = g(u1)
        if not np.isfinite(g1):
            return None
        if np.sign(g1) != direction:
            return (min(u0, u1), max(u0, u1))
        travelled += step
        u0, step = u1, step * 2.0
    return None


def _bisect(g, lo, hi, xtol=1e-13, maxiter=200):
    if lo == hi:
        return lo
    glo = g(lo)
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0:
            return mid
        if np.sign(gm) == np.sign(glo):
            lo, glo = mid, gm
        else:
            hi = mid
        if hi - lo < xtol:
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# fan criterion


class FanCriterion(NamedTuple):
    min_lambda_plus: float
    max_lambda_minus: float
    satisfied: bool
    margin: float


def fan_criterion(curve: BoundaryCurve2D, grid_resolution: int = 512) -> FanCriterion:
    """Grid extrema ``min Lambda_+`` and ``max Lambda_-`` and their gap."""
    S, T = sample_grid(curve, grid_resolution)
    lm, lp = lambda_pm(curve, S, T)
    lo, hi = float(lp.min()), float(lm.max())
    return FanCriterion(lo, hi, lo > hi, lo - hi)
