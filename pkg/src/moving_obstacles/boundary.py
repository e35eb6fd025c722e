"""Moving boundary curves in 2+1 spacetime.

A boundary is a map ``(sigma, t) -> x(sigma, t)`` in the plane together with
its exact partial derivatives.  Closed curves use a periodic parameter
(``CircleDomain``); open walls use a bounded interval (``IntervalDomain``).

The time-like condition on a boundary is tested through the margin

    m = |x_s|^2 + (x_t . x_s)^2 - |x_s|^2 |x_t|^2 = |x_s|^2 (1 - v_n^2),

where ``v_n`` is the normal speed of the boundary.  A boundary is time-like
at a point exactly when ``m > 0``.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property
from typing import ClassVar, NamedTuple

import numpy as np
from scipy import integrate, optimize

from .errors import ConfigError, CurveRejected, DegenerateCurve, DomainError

TWO_PI = 2.0 * math.pi

__all__ = [
    "CircleDomain",
    "IntervalDomain",
    "BoundaryCurve2D",
    "CircleCurve",
    "TranslatingCurve",
    "BreathingCircle",
    "FourierSeries",
    "orbiting_breathing_circle",
    "PeriodicProfile",
    "SmoothstepBump",
    "StefanovWallParams",
    "StefanovWall",
    "UniformConstants",
    "eval_boundary",
    "timelike_margin",
    "normal_speed",
    "uniform_constants",
    "sample_grid",
    "validation_report",
    "periodicity_residual",
    "build_stefanov_wall",
    "curve_from_config",
]


# ---------------------------------------------------------------------------
# parameter domains


@dataclass(frozen=True)
class CircleDomain:
    """Periodic parameter domain of the given period."""

    period: float = 1.0

    def reduce(self, sigma):
        return np.mod(sigma, self.period)

    def grid(self, n: int) -> np.ndarray:
        return np.arange(n) * (self.period / n)

    @property
    def length(self) -> float:
        return self.period


@dataclass(frozen=True)
class IntervalDomain:
    """Closed parameter interval ``[lo, hi]``."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ConfigError(f"empty interval domain [{self.lo}, {self.hi}]")

    def contains(self, sigma, slack: float = 0.0):
        sigma = np.asarray(sigma, dtype=float)
        return (sigma >= self.lo - slack) & (sigma <= self.hi + slack)

    def grid(self, n: int) -> np.ndarray:
        return np.linspace(self.lo, self.hi, n)

    @property
    def length(self) -> float:
        return self.hi - self.lo


# ---------------------------------------------------------------------------
# curve families


def _stack(a, b):
    a, b = np.broadcast_arrays(a, b)
    return np.stack([a, b], axis=-1)


class BoundaryCurve2D(ABC):
    """Abstract moving boundary ``x(sigma, t)``.

    Subclasses implement ``_evaluate`` returning ``(x, x_sigma, x_t)`` for
    broadcastable arrays ``sigma`` and ``t``; each output has a trailing axis
    of length 2.
    """

    family_tag: ClassVar[str] = "abstract"
    sigma_domain: CircleDomain | IntervalDomain
    time_period: float | None

    @abstractmethod
    def _evaluate(self, sigma: np.ndarray, t: np.ndarray):
        """Return position and first partial derivatives."""

    def evaluate(self, sigma, t, check: bool = True):
        """Evaluate the curve, reducing periodic parameters first.

        With ``check`` set, parameters outside an interval domain raise
        ``DomainError``.  Integrators pass ``check=False`` and handle exits
        themselves.
        """
        sigma = np.asarray(sigma, dtype=float)
        t = np.asarray(t, dtype=float)
        dom = self.sigma_domain
        if isinstance(dom, CircleDomain):
            sigma = dom.reduce(sigma)
        elif check:
            bad = ~dom.contains(sigma, slack=1e-12)
            if np.any(bad):
                first = np.asarray(sigma)[bad].ravel()[0]
                raise DomainError(
                    f"sigma={first!r} outside interval [{dom.lo}, {dom.hi}]",
                    sigma=float(first),
                )
        return self._evaluate(sigma, t)

    def tangent_components(self, sigma, t):
        """``(xs1, xs2, xt1, xt2)`` without stacking; used by hot integration loops.

        ``sigma`` must already lie in the domain (or be reducible); no checks.
        """
        sigma = np.asarray(sigma, dtype=float)
        if isinstance(self.sigma_domain, CircleDomain):
            sigma = self.sigma_domain.reduce(sigma)
        _, xs, xt = self._evaluate(sigma, np.asarray(t, dtype=float))
        return xs[..., 0], xs[..., 1], xt[..., 0], xt[..., 1]

    def scalar_tangent(self, sigma: float, t: float):
        """Scalar version of ``tangent_components`` returning Python floats."""
        a, b, c, d = self.tangent_components(np.array([sigma]), np.array([t]))
        return float(a[0]), float(b[0]), float(c[0]), float(d[0])

    def kernel_spec(self):
        """Arrays for the compiled integrator, or ``None`` when unsupported."""
        fs = self.as_fourier()
        return None if fs is None else fs.kernel_spec()

    def as_fourier(self) -> "FourierSeries | None":
        """Exact Fourier representation when the family admits one."""
        return None

    def position(self, sigma, t, check: bool = True) -> np.ndarray:
        return self.evaluate(sigma, t, check=check)[0]

    def contains(self, x1, x2, t) -> np.ndarray:
        """Whether spatial points lie inside the obstacle bounded by the curve."""
        raise NotImplementedError(f"{self.family_tag} does not bound a region")

    @property
    def is_closed(self) -> bool:
        return isinstance(self.sigma_domain, CircleDomain)

    def describe(self) -> dict:
        return {"family": self.family_tag}


@dataclass(frozen=True)
class CircleCurve(BoundaryCurve2D):
    """Stationary circle, counter-clockwise in sigma."""

    radius: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)
    time_period: float | None = 1.0
    sigma_domain: CircleDomain = field(default_factory=CircleDomain)

    family_tag: ClassVar[str] = "Circle"

    def _evaluate(self, sigma, t):
        th = TWO_PI * sigma
        c, s = np.cos(th), np.sin(th)
        zero = np.zeros(np.broadcast(sigma, t).shape)
        x = _stack(self.center[0] + self.radius * c + zero,
                   self.center[1] + self.radius * s + zero)
        xs = _stack(-TWO_PI * self.radius * s + zero, TWO_PI * self.radius * c + zero)
        xt = _stack(zero, zero)
        return x, xs, xt

    def contains(self, x1, x2, t):
        d2 = (np.asarray(x1) - self.center[0]) ** 2 + (np.asarray(x2) - self.center[1]) ** 2
        return np.broadcast_to(d2 < self.radius**2, np.broadcast(x1, x2, t).shape)

    def as_fourier(self):
        r, (cx, cy) = self.radius, self.center
        return FourierSeries.from_terms(
            [(0, 0, (cx, cy), (0.0, 0.0)), (1, 0, (r, 0.0), (0.0, r))],
            time_period=self.time_period or 1.0)

    def describe(self):
        return {"family": self.family_tag, "radius": self.radius,
                "center": list(self.center), "time_period": self.time_period}


@dataclass(frozen=True)
class TranslatingCurve(BoundaryCurve2D):
    """Circle of fixed radius whose center oscillates: ``c(t) = c0 + A sin(2 pi t/T + phase)``."""

    radius: float = 1.0
    amplitude: tuple[float, float] = (0.0, 0.0)
    time_period: float | None = 1.0
    center: tuple[float, float] = (0.0, 0.0)
    phase: float = 0.0
    sigma_domain: CircleDomain = field(default_factory=CircleDomain)

    family_tag: ClassVar[str] = "TranslatingCurve"

    def offset(self, t):
        """Translation ``l(t)`` and its derivative."""
        t = np.asarray(t, dtype=float)
        w = TWO_PI / self.time_period
        arg = w * t + self.phase
        sn, cs = np.sin(arg), np.cos(arg)
        l = _stack(self.center[0] + self.amplitude[0] * sn, self.center[1] + self.amplitude[1] * sn)
        dl = _stack(self.amplitude[0] * w * cs, self.amplitude[1] * w * cs)
        return l, dl

    def max_translation_speed(self) -> float:
        return TWO_PI / self.time_period * math.hypot(*self.amplitude)

    def _evaluate(self, sigma, t):
        th = TWO_PI * sigma
        c, s = np.cos(th), np.sin(th)
        l, dl = self.offset(t)
        shape = np.broadcast(sigma, t).shape + (2,)
        x = np.broadcast_to(l, shape) + self.radius * _stack(c, s)
        xs = np.broadcast_to(TWO_PI * self.radius * _stack(-s, c), shape).copy()
        xt = np.broadcast_to(dl, shape).copy()
        return x, xs, xt

    def as_fourier(self):
        r, (cx, cy), (a1, a2) = self.radius, self.center, self.amplitude
        sp, cp = math.sin(self.phase), math.cos(self.phase)
        return FourierSeries.from_terms(
            [(0, 0, (cx, cy), (0.0, 0.0)), (1, 0, (r, 0.0), (0.0, r)),
             (0, 1, (a1 * sp, a2 * sp), (a1 * cp, a2 * cp))],
            time_period=self.time_period)

    def contains(self, x1, x2, t):
        l, _ = self.offset(t)
        d2 = (np.asarray(x1) - l[..., 0]) ** 2 + (np.asarray(x2) - l[..., 1]) ** 2
        return d2 < self.radius**2

    def describe(self):
        return {"family": self.family_tag, "radius": self.radius,
                "amplitude": list(self.amplitude), "center": list(self.center),
                "phase": self.phase, "time_period": self.time_period}


@dataclass(frozen=True)
class BreathingCircle(BoundaryCurve2D):
    """Circle with radius ``r(t) = r0 + b sin(2 pi t/T + phase)``."""

    r0: float = 1.0
    amplitude: float = 0.0
    time_period: float | None = 1.0
    center: tuple[float, float] = (0.0, 0.0)
    phase: float = 0.0
    sigma_domain: CircleDomain = field(default_factory=CircleDomain)

    family_tag: ClassVar[str] = "BreathingCircle"

    def __post_init__(self):
        if self.r0 - abs(self.amplitude) <= 0:
            raise ConfigError("breathing circle radius must stay positive")

    def radius(self, t):
        t = np.asarray(t, dtype=float)
        w = TWO_PI / self.time_period
        arg = w * t + self.phase
        return self.r0 + self.amplitude * np.sin(arg), self.amplitude * w * np.cos(arg)

    def _evaluate(self, sigma, t):
        th = TWO_PI * sigma
        c, s = np.cos(th), np.sin(th)
        r, dr = self.radius(t)
        x = _stack(self.center[0] + r * c, self.center[1] + r * s)
        xs = _stack(-TWO_PI * r * s, TWO_PI * r * c)
        xt = _stack(dr * c, dr * s)
        return x, xs, xt

    def as_fourier(self):
        (cx, cy), r0, h = self.center, self.r0, 0.5 * self.amplitude
        sp, cp = math.sin(self.phase), math.cos(self.phase)
        return FourierSeries.from_terms(
            [(0, 0, (cx, cy), (0.0, 0.0)), (1, 0, (r0, 0.0), (0.0, r0)),
             (1, 1, (h * sp, -h * cp), (h * cp, h * sp)),
             (1, -1, (h * sp, h * cp), (-h * cp, h * sp))],
            time_period=self.time_period)

    def contains(self, x1, x2, t):
        r, _ = self.radius(t)
        d2 = (np.asarray(x1) - self.center[0]) ** 2 + (np.asarray(x2) - self.center[1]) ** 2
        return d2 < r**2

    def describe(self):
        return {"family": self.family_tag, "r0": self.r0, "amplitude": self.amplitude,
                "center": list(self.center), "phase": self.phase,
                "time_period": self.time_period}


@dataclass(frozen=True)
class FourierSeries(BoundaryCurve2D):
    """Truncated double Fourier series in ``(sigma, t)``.

    Each term ``j`` contributes ``C_j cos(theta_j) + S_j sin(theta_j)`` with
    phase ``theta_j = 2 pi (m_j sigma + n_j t / T)``; ``C_j`` and ``S_j`` are
    planar vectors.  Integer ``m_j`` make the curve closed with period 1.
    """

    modes: tuple[tuple[int, int], ...]
    cos: tuple[tuple[float, float], ...]
    sin: tuple[tuple[float, float], ...]
    time_period: float | None = 1.0
    sigma_domain: CircleDomain = field(default_factory=CircleDomain)
    polygon_resolution: int = 1024

    family_tag: ClassVar[str] = "FourierSeries"

    def __post_init__(self):
        k = len(self.modes)
        if len(self.cos) != k or len(self.sin) != k:
            raise ConfigError("fourier modes, cos and sin must have equal length")
        for m, n in self.modes:
            if int(m) != m or int(n) != n:
                raise ConfigError(f"fourier mode ({m}, {n}) must be integer")
        if self.time_period is None or self.time_period <= 0:
            raise ConfigError("fourier family needs a positive time_period")

    @classmethod
    def from_terms(cls, terms, time_period: float = 1.0) -> "FourierSeries":
        """Build from an iterable of ``(m, n, (cx, cy), (sx, sy))``."""
        terms = list(terms)
        return cls(
            modes=tuple((int(m), int(n)) for m, n, _, _ in terms),
            cos=tuple(tuple(map(float, c)) for _, _, c, _ in terms),
            sin=tuple(tuple(map(float, s)) for _, _, _, s in terms),
            time_period=float(time_period),
        )

    def _arrays(self):
        m = np.array([mn[0] for mn in self.modes], dtype=float)
        n = np.array([mn[1] for mn in self.modes], dtype=float)
        return m, n, np.array(self.cos, dtype=float), np.array(self.sin, dtype=float)

    def _evaluate(self, sigma, t):
        m, n, C, S = self._arrays()
        sigma, t = np.broadcast_arrays(sigma, t)
        th = TWO_PI * (sigma[..., None] * m + t[..., None] * (n / self.time_period))
        c, s = np.cos(th), np.sin(th)
        x = c @ C + s @ S
        # d/dtheta of (C cos + S sin) is (-C sin + S cos)
        dm = TWO_PI * m
        dn = TWO_PI * n / self.time_period
        xs = (-s * dm) @ C + (c * dm) @ S
        xt = (-s * dn) @ C + (c * dn) @ S
        return x, xs, xt

    def tangent_components(self, sigma, t):
        m, n, C, S = self._cached
        th = TWO_PI * (np.multiply.outer(np.asarray(sigma, float), m)
                       + np.multiply.outer(np.asarray(t, float), n / self.time_period))
        c, s = np.cos(th), np.sin(th)
        # sigma-periodicity is exact for integer modes, so no reduction is needed
        dm = TWO_PI * m
        dn = TWO_PI * n / self.time_period
        us, vs = -s * dm, c * dm
        ut, vt = -s * dn, c * dn
        return (us @ C[:, 0] + vs @ S[:, 0], us @ C[:, 1] + vs @ S[:, 1],
                ut @ C[:, 0] + vt @ S[:, 0], ut @ C[:, 1] + vt @ S[:, 1])

    @cached_property
    def _cached(self):
        return self._arrays()

    @cached_property
    def _scalar_terms(self):
        T = self.time_period
        return [(TWO_PI * m, TWO_PI * n / T, c[0], c[1], s[0], s[1])
                for (m, n), c, s in zip(self.modes, self.cos, self.sin)]

    def scalar_tangent(self, sigma, t):
        a1 = a2 = b1 = b2 = 0.0
        for wm, wn, cx, cy, sx, sy in self._scalar_terms:
            th = wm * sigma + wn * t
            c, s = math.cos(th), math.sin(th)
            ux, uy = sx * c - cx * s, sy * c - cy * s
            a1 += wm * ux
            a2 += wm * uy
            b1 += wn * ux
            b2 += wn * uy
        return a1, a2, b1, b2

    def as_fourier(self):
        return self

    def kernel_spec(self):
        m, n, C, S = self._cached
        C4 = np.ascontiguousarray(np.column_stack([C, S]))
        return (1, np.zeros(4), TWO_PI * m, TWO_PI * n / self.time_period,
                np.zeros(len(m)), C4)

    def polygon(self, t: float) -> np.ndarray:
        sig = self.sigma_domain.grid(self.polygon_resolution)
        return self.position(sig, np.full_like(sig, float(t)))

    def contains(self, x1, x2, t):
        from matplotlib.path import Path

        x1, x2, t = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float),
                                        np.asarray(t, float))
        out = np.zeros(x1.shape, dtype=bool)
        times = np.unique(t)
        for tv in times:
            sel = t == tv
            path = Path(self.polygon(tv))
            pts = np.column_stack([x1[sel], x2[sel]])
            out[sel] = path.contains_points(pts)
        return out

    def describe(self):
        return {"family": self.family_tag, "modes": [list(m) for m in self.modes],
                "cos": [list(c) for c in self.cos], "sin": [list(s) for s in self.sin],
                "time_period": self.time_period}


def orbiting_breathing_circle(orbit_radius: float, r0: float, breathing: float,
                              time_period: float = 1.0) -> FourierSeries:
    """Circle of radius ``r0 + b sin(2 pi t)`` whose center orbits the origin.

    The curve is ``A e(2 pi t) + r(t) e(2 pi (sigma + t))`` with
    ``e(u) = (cos u, sin u)``; the product ``r(t) e(...)`` is expanded into
    four exact Fourier terms.  Without breathing the figure turns rigidly, so
    the speed fields are autonomous in ``sigma``.
    """
    A, b = float(orbit_radius), float(breathing)
    return FourierSeries.from_terms(
        [
            (0, 1, (A, 0.0), (0.0, A)),
            (1, 1, (r0, 0.0), (0.0, r0)),
            (1, 2, (0.0, -b / 2), (b / 2, 0.0)),
            (1, 0, (0.0, b / 2), (-b / 2, 0.0)),
        ],
        time_period=time_period,
    )


# ---------------------------------------------------------------------------
# wall profile pieces


@dataclass(frozen=True)
class PeriodicProfile:
    """Period-1 trigonometric polynomial ``a0 + sum a_j cos 2 pi j z + b_j sin 2 pi j z``."""

    const: float = 0.0
    cos: tuple[float, ...] = ()
    sin: tuple[float, ...] = ()

    @classmethod
    def sine(cls, amplitude: float = 1.0) -> "PeriodicProfile":
        return cls(sin=(float(amplitude),))

    @classmethod
    def constant(cls, value: float) -> "PeriodicProfile":
        return cls(const=float(value))

    @property
    def name(self) -> str:
        if not self.cos and self.sin == (1.0,) and self.const == 0.0:
            return "sin"
        return "fourier"

    def _coeffs(self):
        n = max(len(self.cos), len(self.sin))
        a = np.zeros(n)
        b = np.zeros(n)
        a[: len(self.cos)] = self.cos
        b[: len(self.sin)] = self.sin
        j = np.arange(1, n + 1, dtype=float)
        return j, a, b

    def derivatives(self, z, order: int = 2):
        """Return ``[f, f', f'', ...]`` up to ``order`` at ``z``."""
        z = np.asarray(z, dtype=float)
        j, a, b = self._coeffs()
        out = [np.full(z.shape, self.const)] + [np.zeros(z.shape) for _ in range(order)]
        if len(j) == 0:
            return out
        th = TWO_PI * z[..., None] * j
        c, s = np.cos(th), np.sin(th)
        w = TWO_PI * j
        # f^(p) cycles through (c, -s, -c, s) for the cosine part
        for p in range(order + 1):
            wp = w**p
            cos_part = [c, -s, -c, s][p % 4]
            sin_part = [s, c, -s, -c][p % 4]
            out[p] = out[p] + (cos_part * (a * wp)).sum(-1) + (sin_part * (b * wp)).sum(-1)
        return out

    @cached_property
    def _fast(self):
        return self._coeffs()

    def value_and_d1(self, z):
        """``(f, f')`` with less overhead than ``derivatives``."""
        j, a, b = self._fast
        z = np.asarray(z, dtype=float)
        if len(j) == 1:
            th = TWO_PI * z
            c, s = np.cos(th), np.sin(th)
            return (self.const + a[0] * c + b[0] * s,
                    TWO_PI * (b[0] * c - a[0] * s))
        if len(j) == 0:
            return np.full(z.shape, self.const), np.zeros(z.shape)
        th = TWO_PI * np.multiply.outer(z, j)
        c, s = np.cos(th), np.sin(th)
        w = TWO_PI * j
        return self.const + c @ a + s @ b, c @ (b * w) - s @ (a * w)

    @cached_property
    def _scalar_terms(self):
        j, a, b = self._coeffs()
        return [(TWO_PI * jj, aa, bb) for jj, aa, bb in zip(j, a, b)]

    def scalar_value_d1(self, z: float):
        f0, f1 = self.const, 0.0
        for w, a, b in self._scalar_terms:
            c, s = math.cos(w * z), math.sin(w * z)
            f0 += a * c + b * s
            f1 += w * (b * c - a * s)
        return f0, f1

    def value(self, z):
        return self.derivatives(z, 0)[0]

    def d1(self, z):
        return self.derivatives(z, 1)[1]

    def sup_abs(self, samples: int = 4096) -> float:
        z = np.arange(samples) / samples
        return float(np.max(np.abs(self.value(z))))

    def sup_abs_d1(self, samples: int = 4096) -> float:
        z = np.arange(samples) / samples
        return float(np.max(np.abs(self.d1(z))))

    def derivative_zeros(self, samples: int = 4096) -> np.ndarray:
        """Sign changes of ``f'`` on ``[0, 1)``, refined with Brent's method."""
        z = np.arange(samples + 1) / samples
        d = self.d1(z)
        zeros = []
        for i in range(samples):
            if d[i] == 0.0:
                zeros.append(z[i])
            elif d[i] * d[i + 1] < 0:
                zeros.append(optimize.brentq(lambda u: float(self.d1(u)), z[i], z[i + 1],
                                             xtol=1e-15))
        return np.array(sorted(set(zeros)))

    def abs_derivative_integral(self) -> float:
        """``int_0^1 |f'(z)| dz`` by quadrature split at the zeros of ``f'``."""
        pts = np.concatenate([[0.0], self.derivative_zeros(), [1.0]])
        pts = np.unique(np.clip(pts, 0.0, 1.0))
        total = 0.0
        for lo, hi in zip(pts[:-1], pts[1:]):
            if hi - lo <= 0:
                continue
            val, _ = integrate.quad(lambda u: abs(float(self.d1(u))), lo, hi,
                                    epsabs=1e-13, epsrel=1e-13, limit=200)
            total += val
        return total

    def describe(self):
        return {"const": self.const, "cos": list(self.cos), "sin": list(self.sin)}


def quintic_smoothstep(u):
    """``S(u) = 6u^5 - 15u^4 + 10u^3`` on ``[0, 1]`` with first and second derivatives."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    s = u**3 * (10.0 - 15.0 * u + 6.0 * u**2)
    ds = 30.0 * u**2 * (1.0 - u) ** 2
    d2s = 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)
    return s, ds, d2s


@dataclass(frozen=True)
class SmoothstepBump:
    """Even C^2 bump equal to 1 on ``|s| <= M`` and 0 on ``|s| >= M + L``.

    Its steepest slope is ``15 / (8 L)``, so ``|phi'| <= 1`` needs ``L >= 15/8``.
    """

    M: float
    L: float

    def derivatives(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        a = np.abs(sigma)
        sgn = np.sign(sigma)
        s, ds, d2s = quintic_smoothstep((a - self.M) / self.L)
        phi = 1.0 - s
        dphi = -sgn * ds / self.L
        d2phi = -d2s / self.L**2
        return phi, dphi, d2phi

    @property
    def max_slope(self) -> float:
        return 15.0 / (8.0 * self.L)


@dataclass(frozen=True)
class StefanovWallParams:
    """Parameters of the oscillating wall ``(s, phi(s) f(k(2s - t)))``."""

    k: int = 1
    M: float = 2.0
    L: float = 2.0
    f: PeriodicProfile = field(default_factory=PeriodicProfile.sine)
    phi: str = "smoothstep"

    def __post_init__(self):
        self.validate()

    @property
    def bump(self) -> SmoothstepBump:
        return SmoothstepBump(self.M, self.L)

    def validate(self, samples: int = 8192) -> None:
        if int(self.k) != self.k or self.k < 1:
            raise ConfigError(f"k must be a positive integer, got {self.k!r}")
        if not self.M > 0:
            raise ConfigError(f"M must be positive, got {self.M!r}")
        if not self.L > 1:
            raise ConfigError(f"L must exceed 1, got {self.L!r}")
        if self.phi != "smoothstep":
            raise ConfigError(f"unknown bump {self.phi!r}; only 'smoothstep' is provided")
        sup_f = self.f.sup_abs(samples)
        if sup_f > 1.0 + 1e-12:
            raise ConfigError(f"sup|f| = {sup_f:.6g} exceeds 1")
        sig = np.linspace(-(self.M + self.L) - 1.0, self.M + self.L + 1.0, samples)
        phi, dphi, _ = self.bump.derivatives(sig)
        if np.max(np.abs(dphi)) > 1.0 + 1e-12:
            raise ConfigError(
                f"sup|phi'| = {np.max(np.abs(dphi)):.6g} exceeds 1; the smoothstep bump "
                f"needs L >= 15/8"
            )
        inner = np.abs(sig) <= self.M
        outer = np.abs(sig) >= self.M + self.L
        if np.any(phi[inner] != 1.0) or np.any(phi[outer] != 0.0):
            raise ConfigError("bump is not 1 on |s| <= M and 0 on |s| >= M + L")

    def describe(self):
        return {"k": int(self.k), "M": self.M, "L": self.L, "f": self.f.describe(),
                "phi": self.phi}


@dataclass(frozen=True)
class StefanovWall(BoundaryCurve2D):
    """Graph wall ``x(s, t) = (s, phi(s) f(k (2 s - t)))`` on ``[-M-L, M+L]``.

    The time period is 1 (``f`` has period 1 and ``k`` is an integer).
    """

    params: StefanovWallParams
    time_period: float | None = 1.0

    family_tag: ClassVar[str] = "StefanovWall"

    @property
    def sigma_domain(self) -> IntervalDomain:  # type: ignore[override]
        p = self.params
        return IntervalDomain(-(p.M + p.L), p.M + p.L)

    def graph(self, x1, t):
        """Height ``y`` of the wall over ``x1`` with partials.

        Returns ``(y, y_s, y_t, y_ss, y_st, y_tt)``.  Outside the bump support
        the wall is the flat line ``y = 0``, so ``x1`` may be any real number.
        """
        p = self.params
        x1 = np.asarray(x1, dtype=float)
        t = np.asarray(t, dtype=float)
        k = float(p.k)
        z = k * (2.0 * x1 - t)
        f0, f1, f2 = p.f.derivatives(z, 2)
        phi, dphi, d2phi = p.bump.derivatives(x1)
        y = phi * f0
        ys = dphi * f0 + 2.0 * k * phi * f1
        yt = -k * phi * f1
        yss = d2phi * f0 + 4.0 * k * dphi * f1 + 4.0 * k * k * phi * f2
        yst = -k * dphi * f1 - 2.0 * k * k * phi * f2
        ytt = k * k * phi * f2
        return y, ys, yt, yss, yst, ytt

    def _evaluate(self, sigma, t):
        sigma, t = np.broadcast_arrays(np.asarray(sigma, float), np.asarray(t, float))
        y, ys, yt, *_ = self.graph(sigma, t)
        x = _stack(sigma, y)
        xs = _stack(np.ones_like(sigma), ys)
        xt = _stack(np.zeros_like(sigma), yt)
        return x, xs, xt

    def tangent_components(self, sigma, t):
        p = self.params
        sigma = np.asarray(sigma, dtype=float)
        k = float(p.k)
        f0, f1 = p.f.value_and_d1(k * (2.0 * sigma - t))
        a = np.abs(sigma)
        u = np.clip((a - p.M) / p.L, 0.0, 1.0)
        phi = 1.0 - u**3 * (10.0 - 15.0 * u + 6.0 * u * u)
        dphi = -np.sign(sigma) * (30.0 / p.L) * (u * (1.0 - u)) ** 2
        ys = dphi * f0 + 2.0 * k * phi * f1
        yt = -k * phi * f1
        return np.ones_like(ys), ys, np.zeros_like(ys), yt

    def scalar_tangent(self, sigma, t):
        p = self.params
        k = float(p.k)
        f0, f1 = p.f.scalar_value_d1(k * (2.0 * sigma - t))
        a = abs(sigma)
        if a <= p.M:
            phi, dphi = 1.0, 0.0
        elif a >= p.M + p.L:
            phi, dphi = 0.0, 0.0
        else:
            u = (a - p.M) / p.L
            phi = 1.0 - u**3 * (10.0 - 15.0 * u + 6.0 * u * u)
            dphi = -math.copysign(30.0 / p.L * (u * (1.0 - u)) ** 2, sigma)
        return 1.0, dphi * f0 + 2.0 * k * phi * f1, 0.0, -k * phi * f1

    def kernel_spec(self):
        p = self.params
        j, a, b = p.f._coeffs()
        P = np.array([float(p.k), p.M, p.L, p.f.const])
        return (0, P, TWO_PI * j, a.copy(), b.copy(), np.zeros((0, 4)))

    def ab(self, sigma, t):
        """Wall coefficients ``a = k phi f'`` and ``b = phi' f``."""
        p = self.params
        z = p.k * (2.0 * np.asarray(sigma, float) - np.asarray(t, float))
        f0, f1 = p.f.derivatives(z, 1)
        phi, dphi, _ = p.bump.derivatives(sigma)
        return p.k * phi * f1, dphi * f0

    def describe(self):
        return {"family": self.family_tag, **self.params.describe(), "time_period": 1.0}


def build_stefanov_wall(params: StefanovWallParams) -> StefanovWall:
    """Construct the wall curve after re-validating ``params``."""
    params.validate()
    return StefanovWall(params)


# ---------------------------------------------------------------------------
# pointwise quantities


def eval_boundary(curve: BoundaryCurve2D, sigma, t):
    """``(x, x_sigma, x_t)`` at ``(sigma, t)``; see ``BoundaryCurve2D.evaluate``."""
    return curve.evaluate(sigma, t)


def _margin_from(xs, xt):
    ss = np.einsum("...i,...i->...", xs, xs)
    st = np.einsum("...i,...i->...", xs, xt)
    tt = np.einsum("...i,...i->...", xt, xt)
    return ss + st * st - ss * tt


def timelike_margin(curve: BoundaryCurve2D, sigma, t, check: bool = True):
    """``m = |x_s|^2 + (x_t . x_s)^2 - |x_s|^2 |x_t|^2``; positive means time-like."""
    _, xs, xt = curve.evaluate(sigma, t, check=check)
    return _margin_from(xs, xt)


def _normal_speed_from(xs, xt, tiny: float = 1e-300):
    ss = np.einsum("...i,...i->...", xs, xs)
    if np.any(ss <= tiny):
        raise DegenerateCurve("x_sigma vanishes; normal speed undefined")
    st = np.einsum("...i,...i->...", xs, xt)
    perp = xt - (st / ss)[..., None] * xs
    return np.sqrt(np.einsum("...i,...i->...", perp, perp))


def normal_speed(curve: BoundaryCurve2D, sigma, t):
    """Length of the component of ``x_t`` normal to the curve."""
    _, xs, xt = curve.evaluate(sigma, t)
    return _normal_speed_from(xs, xt)


class UniformConstants(NamedTuple):
    """Grid infima of ``|x_s|^2`` and of the time-like margin."""

    delta_nd: float
    delta_tl: float


def sample_grid(curve: BoundaryCurve2D, resolution: int, time_resolution: int | None = None):
    """Meshgrid ``(S, T)`` covering one sigma period (or the interval) and one time period."""
    nt = time_resolution or resolution
    sig = curve.sigma_domain.grid(resolution)
    period = curve.time_period if curve.time_period else 1.0
    ts = np.arange(nt) * (period / nt)
    S, T = np.meshgrid(sig, ts, indexing="ij")
    return S, T


def uniform_constants(curve: BoundaryCurve2D, grid_resolution: int = 512) -> UniformConstants:
    """Infima of ``|x_s|^2`` and the time-like margin over the validation grid.

    Raises ``CurveRejected`` with the offending ``(sigma, t)`` when either
    infimum is not positive.
    """
    if grid_resolution < 64:
        raise ConfigError("grid_resolution must be at least 64")
    S, T = sample_grid(curve, grid_resolution)
    _, xs, xt = curve.evaluate(S, T)
    nd = np.einsum("...i,...i->...", xs, xs)
    m = _margin_from(xs, xt)
    for name, arr in (("non-degeneracy", nd), ("time-likeness", m)):
        i = np.unravel_index(np.argmin(arr), arr.shape)
        if arr[i] <= 0:
            raise CurveRejected(
                f"{name} fails at sigma={S[i]:.6g}, t={T[i]:.6g} (value {arr[i]:.3e})",
                sigma=float(S[i]), t=float(T[i]), value=float(arr[i]), check=name,
            )
    return UniformConstants(float(nd.min()), float(m.min()))


def validation_report(curve: BoundaryCurve2D, grid_resolution: int = 64) -> dict:
    """Columns ``sigma, t, m, normal_speed`` over the validation grid."""
    S, T = sample_grid(curve, grid_resolution)
    _, xs, xt = curve.evaluate(S, T)
    return {
        "sigma": S.ravel(),
        "t": T.ravel(),
        "m": _margin_from(xs, xt).ravel(),
        "normal_speed": _normal_speed_from(xs, xt).ravel(),
    }


def periodicity_residual(curve: BoundaryCurve2D, resolution: int = 128) -> dict:
    """Max position change under a shift by the time period (and sigma period)."""
    S, T = sample_grid(curve, resolution)
    x0 = curve.position(S, T)
    out = {}
    if curve.time_period:
        x1 = curve.position(S, T + curve.time_period)
        out["time"] = float(np.max(np.abs(x1 - x0)))
    if isinstance(curve.sigma_domain, CircleDomain):
        # evaluate the raw formula so that the shift is not hidden by reduction
        x2 = curve._evaluate(S + curve.sigma_domain.period, T)[0]
        out["sigma"] = float(np.max(np.abs(x2 - curve._evaluate(S, T)[0])))
    return out


# ---------------------------------------------------------------------------
# configuration


def _pair(value, name):
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ConfigError(f"{name} must be a pair of numbers")
    return (float(value[0]), float(value[1]))


_CURVE_KEYS = {
    "Circle": {"family", "radius", "center", "time_period"},
    "TranslatingCurve": {"family", "radius", "amplitude", "center", "phase", "time_period"},
    "BreathingCircle": {"family", "r0", "amplitude", "center", "phase", "time_period"},
    "FourierSeries": {"family", "fourier"},
    "OrbitingBreathingCircle": {"family", "orbit_radius", "r0", "breathing", "time_period"},
    "StefanovWall": {"family", "stefanov"},
}


def profile_from_config(spec) -> PeriodicProfile:
    """``"sin"`` or ``{"const": c, "cos": [...], "sin": [...]}``."""
    if spec == "sin":
        return PeriodicProfile.sine()
    if isinstance(spec, dict):
        extra = set(spec) - {"const", "cos", "sin"}
        if extra:
            raise ConfigError(f"unknown profile keys {sorted(extra)}", keys=sorted(extra))
        return PeriodicProfile(const=float(spec.get("const", 0.0)),
                               cos=tuple(float(v) for v in spec.get("cos", ())),
                               sin=tuple(float(v) for v in spec.get("sin", ())))
    raise ConfigError(f"unknown profile {spec!r}")


def stefanov_params_from_config(block: dict, k_default: int = 1) -> StefanovWallParams:
    extra = set(block) - {"k", "M", "L", "f", "phi"}
    if extra:
        raise ConfigError(f"unknown stefanov keys {sorted(extra)}", keys=sorted(extra))
    k = block.get("k", k_default)
    return StefanovWallParams(k=int(k), M=float(block.get("M", 2.0)),
                              L=float(block.get("L", 2.0)),
                              f=profile_from_config(block.get("f", "sin")),
                              phi=str(block.get("phi", "smoothstep")))


def curve_from_config(block: dict) -> BoundaryCurve2D:
    """Build a curve from a JSON-like dictionary; unknown keys are rejected."""
    if not isinstance(block, dict) or "family" not in block:
        raise ConfigError("curve block needs a 'family' key")
    fam = block["family"]
    if fam not in _CURVE_KEYS:
        raise ConfigError(f"unknown curve family {fam!r}", family=fam)
    extra = set(block) - _CURVE_KEYS[fam]
    if extra:
        raise ConfigError(f"unknown keys for {fam}: {sorted(extra)}", keys=sorted(extra))
    period = float(block.get("time_period", 1.0))
    if period <= 0:
        raise ConfigError("time_period must be positive")
    if fam == "Circle":
        return CircleCurve(radius=float(block.get("radius", 1.0)),
                           center=_pair(block.get("center", (0, 0)), "center"),
                           time_period=period)
    if fam == "TranslatingCurve":
        return TranslatingCurve(radius=float(block.get("radius", 1.0)),
                                amplitude=_pair(block.get("amplitude", (0, 0)), "amplitude"),
                                center=_pair(block.get("center", (0, 0)), "center"),
                                phase=float(block.get("phase", 0.0)), time_period=period)
    if fam == "BreathingCircle":
        return BreathingCircle(r0=float(block.get("r0", 1.0)),
                               amplitude=float(block.get("amplitude", 0.0)),
                               center=_pair(block.get("center", (0, 0)), "center"),
                               phase=float(block.get("phase", 0.0)), time_period=period)
    if fam == "OrbitingBreathingCircle":
        return orbiting_breathing_circle(float(block.get("orbit_radius", 0.0)),
                                         float(block.get("r0", 1.0)),
                                         float(block.get("breathing", 0.0)), period)
    if fam == "FourierSeries":
        fb = block.get("fourier")
        if not isinstance(fb, dict):
            raise ConfigError("FourierSeries needs a 'fourier' block")
        extra = set(fb) - {"terms", "time_period"}
        if extra:
            raise ConfigError(f"unknown fourier keys {sorted(extra)}", keys=sorted(extra))
        terms = []
        for term in fb.get("terms", []):
            bad = set(term) - {"m", "n", "cos", "sin"}
            if bad:
                raise ConfigError(f"unknown fourier term keys {sorted(bad)}", keys=sorted(bad))
            terms.append((term.get("m", 0), term.get("n", 0),
                          _pair(term.get("cos", (0, 0)), "cos"),
                          _pair(term.get("sin", (0, 0)), "sin")))
        if not terms:
            raise ConfigError("fourier block has no terms")
        return FourierSeries.from_terms(terms, time_period=float(fb.get("time_period", 1.0)))
    return build_stefanov_wall(stefanov_params_from_config(block.get("stefanov", {})))
