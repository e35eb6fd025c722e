"""Cone algebra for second-order strictly hyperbolic operators.

For an operator with principal symbol

    p2(xi, tau) = tau^2 - 2 tau (a . xi) - xi . A xi

the coefficient matrix of the quadratic form is the ``(n+1) x (n+1)`` block

    B = [[-A, -a], [-a^T, 1]].

Vectors ``v`` with ``v . B^{-1} v > 0`` are time-like, and a hypersurface is
time-like when its normal ``w`` has ``w . B w < 0``.  The module also builds
flows of time-like vector fields with their variational Jacobians, and the
three families of reparametrization maps ``Psi`` used to straighten a moving
domain (rigid motion, even-periodic flows and slow uniform deformations).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .boundary import BoundaryCurve2D, CircleDomain, quintic_smoothstep
from .errors import ConfigError, HypothesisViolation, PropertyViolation, TimelikeViolation

__all__ = [
    "HyperbolicForm",
    "assemble_form",
    "wave_form",
    "p2",
    "tau_roots",
    "VectorClass",
    "classify_vector",
    "boundary_normal",
    "TangentVector",
    "tangent_timelike_vector",
    "random_form",
    "AlgebraSurvey",
    "cone_algebra_survey",
    "VectorField",
    "rigid_rotation_field",
    "linear_field",
    "zero_field",
    "pulse_swirl_field",
    "BoundaryExtension",
    "boundary_extension_field",
    "FlowField",
    "flow_from_field",
    "finite_difference_jacobian",
    "JacobianBoundReport",
    "jacobian_bound_check",
    "RigidMotion",
    "EvenPeriodic",
    "SlowUniform",
    "PsiSamples",
    "build_psi",
]

DET_TOL = 1e-10
SIGN_TOL = 1e-12


# ---------------------------------------------------------------------------
# forms


@dataclass(frozen=True)
class HyperbolicForm:
    """Constant-coefficient cone form with its eigen-data.

    ``lam0``/``e0`` is the single positive eigenpair of ``B``; ``e0`` is
    oriented so that its time component is non-negative.
    """

    n: int
    A: np.ndarray
    a: np.ndarray
    B: np.ndarray
    B_inv: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    lam0: float
    e0: np.ndarray
    a_positive_definite: bool
    det_identity_residual: float

    @property
    def binv_tt(self) -> float:
        """The time-time entry of ``B^{-1}``."""
        return float(self.B_inv[self.n, self.n])

    def vector_quad(self, v) -> np.ndarray:
        """``v . B^{-1} v`` along the last axis."""
        v = np.asarray(v, dtype=float)
        return np.einsum("...i,ij,...j->...", v, self.B_inv, v)

    def covector_quad(self, w) -> np.ndarray:
        """``w . B w`` along the last axis."""
        w = np.asarray(w, dtype=float)
        return np.einsum("...i,ij,...j->...", w, self.B, w)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "A": self.A.tolist(),
            "a": self.a.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "lam0": self.lam0,
            "e0": self.e0.tolist(),
            "binv_tt": self.binv_tt,
            "a_positive_definite": self.a_positive_definite,
            "det_identity_residual": self.det_identity_residual,
        }


def assemble_form(A, a=None) -> HyperbolicForm:
    """Build ``B`` from ``(A, a)`` and check its Lorentzian signature.

    Raises ``HypothesisViolation`` when ``B`` does not have exactly one
    positive and ``n`` negative eigenvalues, or when the determinant identity
    ``(B^{-1})_tt = (-1)^n det A / det B`` fails against direct inversion.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n):
        raise ConfigError(f"A must be square, got shape {A.shape}")
    a = np.zeros(n) if a is None else np.asarray(a, dtype=float).reshape(-1)
    if a.shape != (n,):
        raise ConfigError(f"a must have length {n}, got {a.size}")
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(A - A.T)) > 1e-12 * scale:
        raise ConfigError("A must be symmetric")
    A = 0.5 * (A + A.T)
    B = np.empty((n + 1, n + 1))
    B[:n, :n] = -A
    B[:n, n] = -a
    B[n, :n] = -a
    B[n, n] = 1.0
    evals, evecs = np.linalg.eigh(B)
    tol = SIGN_TOL * max(1.0, float(np.max(np.abs(evals))))
    n_pos = int(np.sum(evals > tol))
    n_neg = int(np.sum(evals < -tol))
    if n_pos != 1 or n_neg != n:
        raise HypothesisViolation(
            "form is not strictly hyperbolic: B must have signature (1, n)",
            hypothesis="signature", eigenvalues=evals, positive=n_pos, negative=n_neg,
        )
    B_inv = np.linalg.inv(B)
    detA = float(np.linalg.det(A)) if n > 0 else 1.0
    detB = float(np.linalg.det(B))
    predicted = (-1) ** n * detA / detB
    resid = abs(predicted - B_inv[n, n]) / max(1.0, abs(B_inv[n, n]))
    if not resid <= DET_TOL:
        raise HypothesisViolation(
            "determinant identity for the time-time entry of B^-1 failed",
            hypothesis="det_identity", residual=resid,
        )
    a_pd = bool(np.all(np.linalg.eigvalsh(A) > 0.0))
    binv_pos = bool(B_inv[n, n] > 0.0)
    if a_pd != binv_pos:
        raise HypothesisViolation(
            "sign of the time-time entry of B^-1 disagrees with definiteness of A",
            hypothesis="definiteness", binv_tt=B_inv[n, n], a_positive_definite=a_pd,
        )
    j = int(np.argmax(evals))
    e0 = evecs[:, j].copy()
    if e0[n] < 0.0:
        e0 = -e0
    return HyperbolicForm(n, A, a, B, B_inv, evals, evecs, float(evals[j]), e0, a_pd, resid)


def wave_form(n: int = 2) -> HyperbolicForm:
    """The form of ``d_t^2 - Laplacian`` in ``n`` space dimensions."""
    return assemble_form(np.eye(n), np.zeros(n))


def p2(form: HyperbolicForm, xi, tau):
    """Principal symbol ``tau^2 - 2 tau a.xi - xi.A xi``."""
    xi = np.asarray(xi, dtype=float)
    ax = xi @ form.a
    return tau * tau - 2.0 * tau * ax - np.einsum("...i,ij,...j->...", xi, form.A, xi)


def tau_roots(form: HyperbolicForm, xi) -> tuple[float, float]:
    """Roots ``tau_- <= tau_+`` of ``p2(xi, .)``, computed without cancellation."""
    xi = np.asarray(xi, dtype=float)
    if not np.any(xi):
        raise ConfigError("tau_roots needs a nonzero covector xi")
    ax = float(xi @ form.a)
    q = float(xi @ form.A @ xi)
    disc = ax * ax + q
    if disc < 0.0:
        raise HypothesisViolation("p2(xi, .) has no real roots", hypothesis="real_roots",
                                  discriminant=disc)
    big = ax + math.copysign(math.sqrt(disc), ax)
    if big == 0.0:
        return 0.0, 0.0
    other = -q / big
    return (min(big, other), max(big, other))


# ---------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class VectorClass:
    """Result of ``classify_vector``: a label and the signed quadratic margin."""

    kind: str
    margin: float


def classify_vector(form: HyperbolicForm, v, *, covector: bool = False,
                    tol: float = 1e-12) -> VectorClass:
    """Classify a tangent vector (``v.B^-1 v``) or a surface normal (``w.B w``).

    Vectors give ``TimelikeVector``, ``Null`` or ``Spacelike``.  Covectors give
    ``TimelikeSurfaceNormal``, ``Null`` or ``Spacelike``; in the covector case
    the returned margin is ``-w.B w`` so that positive always means time-like.
    """
    v = np.asarray(v, dtype=float)
    norm2 = float(v @ v)
    if norm2 == 0.0:
        raise ConfigError("cannot classify the zero vector")
    if covector:
        m = -float(form.covector_quad(v))
        label = "TimelikeSurfaceNormal"
    else:
        m = float(form.vector_quad(v))
        label = "TimelikeVector"
    if abs(m) <= tol * norm2:
        return VectorClass("Null", m)
    return VectorClass(label if m > 0 else "Spacelike", m)


def boundary_normal(xs, xt) -> np.ndarray:
    """Spacetime normal of the surface ``(x(sigma, t), t)`` in 2+1 dimensions.

    It is the cross product of ``(x_s, 0)`` and ``(x_t, 1)``; against the
    wave form ``-N.B N`` equals the boundary time-like margin exactly.
    """
    xs = np.asarray(xs, dtype=float)
    xt = np.asarray(xt, dtype=float)
    cross = xs[..., 0] * xt[..., 1] - xs[..., 1] * xt[..., 0]
    return np.stack([xs[..., 1], -xs[..., 0], cross], axis=-1)


@dataclass(frozen=True)
class TangentVector:
    """Time-like tangent ``d`` to a time-like hypersurface with normal ``nu``."""

    d: np.ndarray
    nu: np.ndarray
    a0: float
    margin: float
    identity_residual: float
    orthogonality_residual: float

    def to_dict(self) -> dict:
        return {
            "d": self.d.tolist(),
            "nu": self.nu.tolist(),
            "a0": self.a0,
            "margin": self.margin,
            "identity_residual": self.identity_residual,
            "orthogonality_residual": self.orthogonality_residual,
        }


def tangent_timelike_vector(form: HyperbolicForm, nu) -> TangentVector:
    """Construct ``d = e0 + a0 B w`` from the split ``nu = a0 e0 + w``.

    ``nu`` is rescaled so that ``w.B w = -1``.  Then ``d.nu = 0`` and
    ``d.B^-1 d = 1/lam0 - a0^2``, which is positive exactly because ``nu`` is
    a time-like normal.  Both identities are checked.
    """
    nu = np.asarray(nu, dtype=float)
    q = float(form.covector_quad(nu))
    if not q < 0.0:
        raise HypothesisViolation("nu is not a time-like surface normal (nu.B nu >= 0)",
                                  hypothesis="timelike_normal", value=q)
    a0 = float(nu @ form.e0)
    w = nu - a0 * form.e0
    wbw = float(form.covector_quad(w))
    if not wbw < 0.0:
        raise HypothesisViolation("normal is parallel to the positive eigenvector",
                                  hypothesis="timelike_normal", value=wbw)
    s = 1.0 / math.sqrt(-wbw)
    nu_s, a0, w = nu * s, a0 * s, w * s
    d = form.e0 + a0 * (form.B @ w)
    margin = float(form.vector_quad(d))
    expected = 1.0 / form.lam0 - a0 * a0
    ident = abs(margin - expected) / max(1.0, abs(expected))
    ortho = abs(float(d @ nu_s)) / max(1.0, float(np.linalg.norm(d) * np.linalg.norm(nu_s)))
    if ident > DET_TOL or ortho > 1e-12:
        raise PropertyViolation("tangent construction identities failed",
                                identity_residual=ident, orthogonality_residual=ortho)
    return TangentVector(d, nu_s, a0, margin, ident, ortho)


def random_form(rng: np.random.Generator, n: int | None = None, *, a_scale: float = 1.0,
                max_dim: int = 4) -> HyperbolicForm:
    """Random form with ``A = G G^T + 0.1 I`` (SPD) and Gaussian ``a``."""
    n = int(rng.integers(1, max_dim + 1)) if n is None else int(n)
    G = rng.normal(size=(n, n))
    return assemble_form(G @ G.T + 0.1 * np.eye(n), a_scale * rng.normal(size=n))


@dataclass(frozen=True)
class AlgebraSurvey:
    """Worst residuals of the cone identities over random draws."""

    draws: int
    det_identity: float
    tau_residual: float
    tau_sign_failures: int
    orthogonality_tested: int
    orthogonality_violations: int
    tangent_identity: float
    tangent_orthogonality: float

    def ok(self, tol: float = DET_TOL) -> bool:
        return (self.det_identity <= tol and self.tau_residual <= tol
                and self.tau_sign_failures == 0 and self.orthogonality_violations == 0
                and self.tangent_identity <= tol)

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["ok"] = self.ok()
        return out


def cone_algebra_survey(draws: int = 1000, seed: int = 0, *, max_dim: int = 4) -> AlgebraSurvey:
    """Check the cone identities on ``draws`` random forms.

    Per draw: the determinant identity for the time entry of ``B^-1``; the
    substitution residual of both ``tau`` roots (relative to ``|xi|^2 + tau^2``)
    and their opposite signs; for a random time-like ``v`` and a covector
    ``w`` with ``w.v = 0``, that ``w.B w < 0``; and the tangent identity
    ``d.B^-1 d = 1/lam0 - a0^2`` built from that ``w``.
    """
    rng = np.random.default_rng(seed)
    det = tau_res = tan_id = tan_orth = 0.0
    sign_fail = tested = viol = 0
    for _ in range(int(draws)):
        form = random_form(rng, max_dim=max_dim)
        n = form.n
        det = max(det, float(form.det_identity_residual))
        xi = rng.normal(size=n)
        tm, tp = tau_roots(form, xi)
        if not tm < 0.0 < tp:
            sign_fail += 1
        for tau in (tm, tp):
            scale = float(xi @ xi) + tau * tau
            tau_res = max(tau_res, abs(float(p2(form, xi, tau))) / scale)
        # the time axis is time-like; small spatial perturbations keep it so
        v = np.zeros(n + 1)
        v[-1] = 1.0
        v[:n] = 0.1 * rng.normal(size=n)
        if form.vector_quad(v) <= 0.0:
            continue
        w = rng.normal(size=n + 1)
        w -= (w @ v) / (v @ v) * v
        tested += 1
        if not form.covector_quad(w) < 0.0:
            viol += 1
            continue
        tv = tangent_timelike_vector(form, w)
        tan_id = max(tan_id, tv.identity_residual)
        tan_orth = max(tan_orth, tv.orthogonality_residual)
    return AlgebraSurvey(int(draws), det, tau_res, sign_fail, tested, viol, tan_id, tan_orth)


# ---------------------------------------------------------------------------
# vector fields and flows


@dataclass
class VectorField:
    """Time-dependent spatial field ``v(x, t)`` with spatial Jacobian.

    ``v`` maps points of shape ``(m, n)`` to ``(m, n)``; ``jac`` maps them to
    ``(m, n, n)``.  When ``jac`` is omitted a central difference is used.
    ``psi`` optionally gives an analytic sup-norm of the Jacobian per time.
    """

    n: int
    v: Callable[[np.ndarray, float], np.ndarray]
    jac: Callable[[np.ndarray, float], np.ndarray] | None = None
    psi: Callable[[float], float] | None = None
    name: str = "field"

    def jacobian(self, x: np.ndarray, t: float) -> np.ndarray:
        if self.jac is not None:
            return self.jac(x, t)
        h = 1e-6 * max(1.0, float(np.max(np.abs(x))) if x.size else 1.0)
        out = np.empty(x.shape + (self.n,))
        for k in range(self.n):
            e = np.zeros(self.n)
            e[k] = h
            out[..., k] = (self.v(x + e, t) - self.v(x - e, t)) / (2.0 * h)
        return out


def rigid_rotation_field(omega: float) -> VectorField:
    """``v(x) = omega (-x2, x1)``; its flow is rotation by ``omega t``."""
    J = np.array([[0.0, -omega], [omega, 0.0]])
    return VectorField(
        2,
        lambda x, t: x @ J.T,
        lambda x, t: np.broadcast_to(J, x.shape[:-1] + (2, 2)).copy(),
        lambda t: abs(omega),
        f"rotation(omega={omega:g})",
    )


def linear_field(C) -> VectorField:
    """``v(x) = C x``; the flow is ``expm(C t)``."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = C.shape[0]
    nrm = float(np.linalg.norm(C, 2))
    return VectorField(
        n,
        lambda x, t: x @ C.T,
        lambda x, t: np.broadcast_to(C, x.shape[:-1] + (n, n)).copy(),
        lambda t: nrm,
        "linear",
    )


def zero_field(n: int = 2) -> VectorField:
    return VectorField(n, lambda x, t: np.zeros_like(x),
                       lambda x, t: np.zeros(x.shape + (n,)), lambda t: 0.0, "zero")


def _bump(t: float, t0: float, t1: float) -> tuple[float, float]:
    """Smooth pulse ``sin^2`` on ``[t0, t1]`` and its derivative; zero outside."""
    if t <= t0 or t >= t1:
        return 0.0, 0.0
    u = math.pi * (t - t0) / (t1 - t0)
    return math.sin(u) ** 2, math.pi / (t1 - t0) * math.sin(2 * u)


def pulse_swirl_field(omega: float = 0.3, t_on: float = 0.0, t_off: float = 1.0,
                      r_inner: float = 0.5, r_outer: float = 2.0) -> VectorField:
    """Swirl ``omega g(t) beta(|x|) (-x2, x1)`` active only for ``t_on < t < t_off``.

    ``beta`` is 1 inside ``r_inner`` and 0 outside ``r_outer``, so the field
    vanishes near the outer cylinder and is stationary (zero) after the pulse.
    """
    width = r_outer - r_inner

    def parts(x):
        r = np.linalg.norm(x, axis=-1)
        s, ds, _ = quintic_smoothstep((r - r_inner) / width)
        beta = 1.0 - s
        dbeta = -ds / width
        return r, beta, dbeta

    def v(x, t):
        g, _ = _bump(t, t_on, t_off)
        _, beta, _ = parts(x)
        rot = np.stack([-x[..., 1], x[..., 0]], axis=-1)
        return omega * g * beta[..., None] * rot

    def jac(x, t):
        g, _ = _bump(t, t_on, t_off)
        r, beta, dbeta = parts(x)
        rot = np.stack([-x[..., 1], x[..., 0]], axis=-1)
        safe = np.where(r > 0, r, 1.0)
        rhat = x / safe[..., None]
        grad = (dbeta * (r > 0))[..., None] * rhat
        J = np.zeros(x.shape + (2,))
        J[..., 0, 1] = -1.0
        J[..., 1, 0] = 1.0
        out = beta[..., None, None] * J + rot[..., :, None] * grad[..., None, :]
        return omega * g * out

    # |beta'| r <= 15/8 * r_outer / width bounds the radial part of the Jacobian
    sup_static = 1.0 + 15.0 / 8.0 * r_outer / width
    return VectorField(2, v, jac, lambda t: abs(omega) * _bump(t, t_on, t_off)[0] * sup_static,
                       "pulse_swirl")


@dataclass
class BoundaryExtension:
    """Field built from a moving closed curve, with its construction data.

    ``delta`` is the width of the offset collar, ``kappa_max`` the sampled
    curvature bound used to choose it and ``support_radius`` the largest
    ``|x|`` where the field can be nonzero.
    """

    field: VectorField
    curve: BoundaryCurve2D
    form: "HyperbolicForm"
    delta: float
    kappa_max: float
    support_radius: float

    def boundary_velocity(self, sigma, t) -> np.ndarray:
        """The normalized tangent ``v`` at boundary parameters ``(sigma, t)``."""
        _, xs, xt = self.curve.evaluate(sigma, t)
        return _tangent_velocity(self.form, xs, xt)


def _tangent_velocity(form: "HyperbolicForm", xs, xt) -> np.ndarray:
    """Vectorized ``d = e0 + a0 B w`` for the normals of ``(x(sigma, t), t)``, scaled to time 1."""
    N = boundary_normal(xs, xt)
    e0 = form.e0
    a0 = N @ e0
    w = N - a0[..., None] * e0
    q = np.einsum("...i,ij,...j->...", w, form.B, w)
    if np.any(q >= 0.0):
        raise HypothesisViolation("boundary normal is not time-like", hypothesis="timelike_normal",
                                  value=float(np.max(q)))
    d = e0 + (a0 / -q)[..., None] * (w @ form.B.T)
    if np.any(d[..., -1] <= 0.0):
        raise HypothesisViolation("tangent vector has no positive time component",
                                  hypothesis="time_component", value=float(np.min(d[..., -1])))
    return d[..., :2] / d[..., -1:]


def _closest(curve: BoundaryCurve2D, P: np.ndarray, t: float, grid: np.ndarray,
             newton: int = 6, h: float = 1e-5):
    """Nearest curve parameter to each point of ``P`` at time ``t`` (seeded by ``grid``)."""
    X = curve.position(grid, np.full(grid.shape, t))
    d2 = np.sum((P[:, None, :] - X[None, :, :]) ** 2, axis=-1)
    sig = grid[np.argmin(d2, axis=1)]
    m = sig.shape[0]
    tt = np.full(3 * m, t)
    for _ in range(newton):
        x, xs, _ = curve.evaluate(np.concatenate([sig, sig + h, sig - h]), tt)
        xss = (xs[m:2 * m] - xs[2 * m:]) / (2.0 * h)
        x, xs = x[:m], xs[:m]
        r = x - P
        g = np.sum(r * xs, axis=-1)
        dg = np.sum(xs * xs, axis=-1) + np.sum(r * xss, axis=-1)
        step = np.where(dg > 0, g / np.where(dg > 0, dg, 1.0), 0.0)
        sig = sig - step
        if np.max(np.abs(step), initial=0.0) < 1e-15:
            break
    return sig


def boundary_extension_field(curve: BoundaryCurve2D, form: "HyperbolicForm | None" = None, *,
                             delta: float | None = None, samples: int = 256,
                             rho: float | None = None) -> BoundaryExtension:
    """Time-like field tangent to ``(x(sigma, t), t)`` that fades out away from it.

    On the boundary ``v`` comes from the tangent construction ``d = e0 + a0 B w``
    normalized to time component 1.  It is carried unchanged along the
    spatial normal for offsets ``0 <= s <= delta`` and blended to zero by a
    quintic smoothstep in ``s / delta``, so ``(v, 1)`` moves inside the
    time-like cone towards ``(0, 1)``.  ``delta`` defaults to half the
    inverse of the sampled curvature bound, which keeps the offset chart
    injective; with ``rho`` it is also capped so the field vanishes near the
    cylinder ``|x| = rho``.
    """
    if not isinstance(curve.sigma_domain, CircleDomain):
        raise ConfigError("boundary_extension_field needs a closed curve")
    form = wave_form(2) if form is None else form
    if form.n != 2:
        raise ConfigError("boundary_extension_field works in two space dimensions")
    P = curve.sigma_domain.period
    T = curve.time_period or 1.0
    grid = P * np.arange(samples) / samples
    S, TT = np.meshgrid(grid, T * np.arange(64) / 64, indexing="ij")
    _, xs, xt = curve.evaluate(S, TT)
    hh = 1e-5
    _, xs_p, _ = curve.evaluate(S + hh, TT)
    _, xs_m, _ = curve.evaluate(S - hh, TT)
    xss = (xs_p - xs_m) / (2 * hh)
    sp = np.linalg.norm(xs, axis=-1)
    kappa = np.abs(xs[..., 0] * xss[..., 1] - xs[..., 1] * xss[..., 0]) / sp**3
    kmax = float(kappa.max())
    _tangent_velocity(form, xs, xt)  # raises when the boundary is not time-like
    r_max = float(np.max(np.linalg.norm(curve.position(S, TT), axis=-1)))
    d = 0.5 / kmax if delta is None else float(delta)
    if rho is not None:
        room = 0.5 * (float(rho) - r_max)
        if room <= 0:
            raise ConfigError("curve reaches the cylinder; no room for the collar")
        d = min(d, room)
    if not 0.0 < d < 1.0 / kmax:
        raise ConfigError(f"delta={d:g} must lie in (0, 1/kappa_max={1.0 / kmax:g})",
                          key="delta")
    # orientation: +1 when the sigma direction is counter-clockwise
    X0 = curve.position(grid, np.zeros_like(grid))
    area = 0.5 * np.sum(X0[:, 0] * np.roll(X0[:, 1], -1) - np.roll(X0[:, 0], -1) * X0[:, 1])
    orient = 1.0 if area > 0 else -1.0
    coarse = grid[::2] if samples >= 128 else grid

    def v(x, t):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 2)
        sig = _closest(curve, flat, float(t), coarse)
        tt = np.full(sig.shape, float(t))
        pos, xs_, xt_ = curve.evaluate(sig, tt)
        nrm = orient * np.stack([xs_[:, 1], -xs_[:, 0]], axis=-1) / np.linalg.norm(
            xs_, axis=-1)[:, None]
        s = np.sum((flat - pos) * nrm, axis=-1)
        blend = 1.0 - quintic_smoothstep(s / d)[0]
        out = blend[:, None] * _tangent_velocity(form, xs_, xt_)
        return out.reshape(x.shape)

    def jac(x, t, h=1e-4 * d):
        # the nearest-point solve leaves ~1e-12 noise, so a wider step than the
        # generic default keeps the difference quotient clean
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape + (2,))
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            out[..., k] = (v(x + e, t) - v(x - e, t)) / (2.0 * h)
        return out

    # psi(t) is the sup of |Dv| over the slice; Dv vanishes off the collar,
    # so sampling the collar (plus a thin layer inside the obstacle) suffices
    sg = P * np.arange(64) / 64
    off = d * np.linspace(-0.1, 1.0, 12)

    def psi(t):
        pos, xs_, _ = curve.evaluate(sg, np.full(sg.shape, float(t)))
        nrm = orient * np.stack([xs_[:, 1], -xs_[:, 0]], axis=-1) / np.linalg.norm(
            xs_, axis=-1)[:, None]
        pts = (pos[:, None, :] + off[None, :, None] * nrm[:, None, :]).reshape(-1, 2)
        return float(np.max(np.linalg.norm(jac(pts, t), ord=2, axis=(-2, -1))))

    fld = VectorField(2, v, jac, psi, "boundary_extension")
    return BoundaryExtension(fld, curve, form, d, kmax, r_max + d)


@dataclass
class FlowField:
    """Sampled flow ``F(t, y)`` with Jacobians ``dF/dy`` and the slice norms ``psi``.

    Arrays: ``t`` (N+1,), ``seeds`` (m, n), ``F`` (N+1, m, n),
    ``J`` (N+1, m, n, n) and ``psi`` (N+1,).  ``timelike_margin`` holds the
    minimum over seeds of ``(v, 1).B^-1 (v, 1)`` per time sample.
    """

    field: VectorField
    t: np.ndarray
    seeds: np.ndarray
    F: np.ndarray
    J: np.ndarray
    psi: np.ndarray
    timelike_margin: np.ndarray
    form: HyperbolicForm

    def rows(self) -> np.ndarray:
        """``(t, seed, y1..yn)`` rows for CSV output."""
        N1, m, n = self.F.shape
        tt = np.repeat(self.t, m)
        idx = np.tile(np.arange(m), N1)
        return np.column_stack([tt, idx, self.F.reshape(-1, n)])


def _timelike_margins(form: HyperbolicForm, vel: np.ndarray) -> np.ndarray:
    ext = np.concatenate([vel, np.ones(vel.shape[:-1] + (1,))], axis=-1)
    return form.vector_quad(ext)


def _flow_rk4(field: VectorField, seeds: np.ndarray, t0: float, t1: float, n_steps: int,
              form: HyperbolicForm, with_jacobian: bool = True):
    m, n = seeds.shape
    h = (t1 - t0) / n_steps
    ts = t0 + h * np.arange(n_steps + 1)
    F = np.empty((n_steps + 1, m, n))
    J = np.empty((n_steps + 1, m, n, n)) if with_jacobian else None
    psi = np.empty(n_steps + 1)
    tl = np.empty(n_steps + 1)
    y = seeds.copy()
    W = np.broadcast_to(np.eye(n), (m, n, n)).copy()
    F[0] = y
    if with_jacobian:
        J[0] = W

    def rhs(yy, WW, t):
        vel = field.v(yy, t)
        Dv = field.jacobian(yy, t)
        return vel, Dv, np.einsum("mij,mjk->mik", Dv, WW) if with_jacobian else None

    def check(vel, Dv, t, y_at):
        margins = _timelike_margins(form, vel)
        worst = int(np.argmin(margins))
        if not margins[worst] > 0.0:
            raise TimelikeViolation("(v, 1) is not time-like", t=t, x=y_at[worst],
                                    margin=float(margins[worst]))
        return float(margins[worst]), float(np.max(np.linalg.norm(Dv, ord=2, axis=(-2, -1))))

    for i in range(n_steps):
        t = ts[i]
        k1, D1, K1 = rhs(y, W, t)
        tl[i], psi[i] = check(k1, D1, t, y)
        y2 = y + 0.5 * h * k1
        k2, _, K2 = rhs(y2, W + 0.5 * h * K1 if with_jacobian else W, t + 0.5 * h)
        y3 = y + 0.5 * h * k2
        k3, _, K3 = rhs(y3, W + 0.5 * h * K2 if with_jacobian else W, t + 0.5 * h)
        y4 = y + h * k3
        k4, _, K4 = rhs(y4, W + h * K3 if with_jacobian else W, t + h)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if with_jacobian:
            W = W + (h / 6.0) * (K1 + 2 * K2 + 2 * K3 + K4)
            J[i + 1] = W
        F[i + 1] = y
    vel = field.v(y, ts[-1])
    tl[-1], psi[-1] = check(vel, field.jacobian(y, ts[-1]), ts[-1], y)
    return ts, F, J, psi, tl


def flow_from_field(field: VectorField, seeds, t_range=(0.0, 1.0), *, n_steps: int = 1000,
                    form: HyperbolicForm | None = None) -> FlowField:
    """Integrate ``dF/dt = v(F, t)`` and ``dW/dt = Dv(F, t) W`` by classical RK4.

    The flow and its variational equation share the same stages, so ``J`` is
    the exact derivative of the discrete flow map.  ``psi(t)`` is the largest
    operator norm of ``Dv`` seen over the seeds (or ``field.psi`` when given,
    whichever is larger).  A ``TimelikeViolation`` reports the first failing
    time and location.
    """
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    if seeds.shape[1] != field.n:
        raise ConfigError(f"seeds must have {field.n} columns")
    if n_steps < 1:
        raise ConfigError("n_steps must be positive")
    form = wave_form(field.n) if form is None else form
    t0, t1 = map(float, t_range)
    ts, F, J, psi, tl = _flow_rk4(field, seeds, t0, t1, n_steps, form)
    if field.psi is not None:
        psi = np.maximum(psi, [field.psi(float(t)) for t in ts])
    return FlowField(field, ts, seeds, F, J, psi, tl, form)


def finite_difference_jacobian(flow: FlowField, h: float = 1e-5) -> tuple[np.ndarray, float]:
    """Central-difference ``dF/dy`` at the final time and its max relative error vs ``J``."""
    field, seeds = flow.field, flow.seeds
    m, n = seeds.shape
    steps = len(flow.t) - 1
    fd = np.empty((m, n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        _, Fp, _, _, _ = _flow_rk4(field, seeds + e, flow.t[0], flow.t[-1], steps, flow.form, False)
        _, Fm, _, _, _ = _flow_rk4(field, seeds - e, flow.t[0], flow.t[-1], steps, flow.form, False)
        fd[:, :, k] = (Fp[-1] - Fm[-1]) / (2.0 * h)
    J = flow.J[-1]
    rel = np.linalg.norm(fd - J, axis=(-2, -1)) / np.maximum(1.0, np.linalg.norm(J, axis=(-2, -1)))
    return fd, float(np.max(rel))


@dataclass
class JacobianBoundReport:
    """Outcome of the Gronwall envelope check on a sampled flow."""

    ok: bool
    forward_ok: bool
    backward_ok: bool
    max_forward_ratio: float
    min_backward_ratio: float
    uniform_bound: float
    psi_integral: np.ndarray = field(repr=False)
    failing_seed: int | None = None
    failing_time: float | None = None

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "forward_ok": self.forward_ok,
            "backward_ok": self.backward_ok,
            "max_forward_ratio": self.max_forward_ratio,
            "min_backward_ratio": self.min_backward_ratio,
            "uniform_bound": self.uniform_bound,
            "failing_seed": self.failing_seed,
            "failing_time": self.failing_time,
        }


def jacobian_bound_check(flow: FlowField, *, rel_tol: float = 1e-6,
                         strict: bool = True) -> JacobianBoundReport:
    """Check ``exp(-I) |w0| <= |w(t)| <= exp(I) |w0|`` columnwise, ``I = int psi``.

    ``uniform_bound`` is ``exp(I(t_end))``, the sampled certificate for a
    uniform bound on the Jacobian and its inverse.  With ``strict`` a
    violation raises ``PropertyViolation`` carrying the seed and time.
    """
    I = integrate.cumulative_trapezoid(flow.psi, flow.t, initial=0.0)
    cols = np.linalg.norm(flow.J, axis=-2)  # (N+1, m, n), |w0| = 1 per column
    env = np.exp(I)[:, None, None]
    fwd = cols / env
    bwd = cols * env
    max_f = float(np.max(fwd))
    min_b = float(np.min(bwd))
    f_ok = max_f <= 1.0 + rel_tol
    b_ok = min_b >= 1.0 - rel_tol
    seed = when = None
    if not f_ok or not b_ok:
        bad = (fwd > 1.0 + rel_tol) | (bwd < 1.0 - rel_tol)
        i, j, _ = np.argwhere(bad)[0]
        seed, when = int(j), float(flow.t[i])
    rep = JacobianBoundReport(f_ok and b_ok, f_ok, b_ok, max_f, min_b, float(math.exp(I[-1])),
                              I, seed, when)
    if strict and not rep.ok:
        raise PropertyViolation("Gronwall envelope violated", seed=seed, t=when,
                                max_forward_ratio=max_f, min_backward_ratio=min_b)
    return rep


# ---------------------------------------------------------------------------
# reparametrization maps


@dataclass
class RigidMotion:
    """``Psi(y, t) = O(t) y + beta(|y|) l(t)`` in the plane.

    ``O(t)`` is rotation by ``omega t``; ``l`` and ``dl`` give the translation
    and its velocity.  ``beta`` falls from 1 at ``rho0`` to 0 at ``rho``.
    """

    omega: float = 0.0
    l: Callable[[float], np.ndarray] = field(default=lambda t: np.zeros(2))
    dl: Callable[[float], np.ndarray] = field(default=lambda t: np.zeros(2))
    rho0: float = 1.0
    rho: float = 2.0
    eps: float = 0.0


@dataclass
class EvenPeriodic:
    """``Psi = F(t, y)`` for ``t <= 1/2`` and ``F(1 - t, y)`` after, period 1."""

    field: VectorField
    n_steps: int = 400


@dataclass
class SlowUniform:
    """``Psi(y, t) = y + int_0^t x_t(y, s) ds`` for a period-1, zero-mean ``x_t``.

    ``x_t`` maps ``(y (m, n), s)`` to ``(m, n)``; ``dx_t`` returns its
    ``y``-Jacobian.  ``rho_prime`` and ``rho`` bound the shell where it must
    vanish.
    """

    x_t: Callable[[np.ndarray, float], np.ndarray]
    dx_t: Callable[[np.ndarray, float], np.ndarray]
    rho_prime: float
    rho: float
    n_quad: int = 257

    @classmethod
    def example(cls, eps0: float = 0.01, rho_prime: float = 2.0, rho: float = 2.5,
                direction=(1.0, 0.0)) -> "SlowUniform":
        """``x_t = eps0 cos(2 pi s) beta(|y|) u``, with ``|d beta| <= 15/16`` for ``rho' = 2``."""
        u = np.asarray(direction, dtype=float)
        u = u / np.linalg.norm(u)

        def beta(y):
            r = np.linalg.norm(y, axis=-1)
            s, ds, _ = quintic_smoothstep(r / rho_prime)
            safe = np.where(r > 0, r, 1.0)
            grad = (-ds / rho_prime)[..., None] * (y / safe[..., None])
            return 1.0 - s, grad

        def x_t(y, s):
            b, _ = beta(y)
            return eps0 * math.cos(2 * math.pi * s) * b[..., None] * u

        def dx_t(y, s):
            _, g = beta(y)
            return eps0 * math.cos(2 * math.pi * s) * u[None, :, None] * g[..., None, :]

        return cls(x_t, dx_t, rho_prime, rho)


@dataclass
class PsiSamples:
    """Sampled map ``Psi`` with hypothesis checks.

    ``checks`` maps a hypothesis label (``"(i)"``, ``"(ii')"``, ``"(iii)"``,
    ``"(iv)"`` and mode-specific extras) to ``{"ok": bool, "value": float}``.
    """

    mode: str
    y: np.ndarray
    t: np.ndarray
    psi: np.ndarray
    jac: np.ndarray
    dpsi_dt: np.ndarray
    checks: dict
    extras: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c["ok"] for c in self.checks.values())

    def to_dict(self) -> dict:
        return {"mode": self.mode, "ok": self.ok, "checks": self.checks,
                "extras": {k: _plain(v) for k, v in self.extras.items()}}


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


def _check(ok, value) -> dict:
    return {"ok": bool(ok), "value": float(value)}


def _raise_failed(samples: PsiSamples) -> PsiSamples:
    for name, c in samples.checks.items():
        if not c["ok"]:
            raise HypothesisViolation(f"hypothesis {name} fails for mode {samples.mode}",
                                      hypothesis=name, value=c["value"])
    return samples


def _margin_from(form: HyperbolicForm, vel: np.ndarray) -> float:
    return float(np.min(_timelike_margins(form, vel)))


def _jac_norms(jac: np.ndarray) -> tuple[float, float]:
    sv = np.linalg.svd(jac, compute_uv=False)
    return float(np.max(sv[..., 0])), float(np.max(1.0 / sv[..., -1]))


def _sample_disk(rho: float, n_radial: int = 12, n_angle: int = 24) -> np.ndarray:
    rs = rho * np.arange(0, n_radial + 1) / n_radial
    th = 2 * math.pi * np.arange(n_angle) / n_angle
    pts = [np.zeros((1, 2))]
    for r in rs[1:]:
        pts.append(np.column_stack([r * np.cos(th), r * np.sin(th)]))
    return np.concatenate(pts)


def build_psi(mode, params=None, *, y=None, t=None, strict: bool = True,
              form: HyperbolicForm | None = None) -> PsiSamples:
    """Sample ``Psi`` for ``mode`` in ``{"Rigid", "EvenPeriodic", "SlowUniform"}``.

    ``mode`` may also be an instance of ``RigidMotion``, ``EvenPeriodic`` or
    ``SlowUniform`` (then ``params`` is ignored).  ``y`` defaults to a polar
    sample of the disk ``|y| <= rho`` and ``t`` to 65 points of one period.
    With ``strict`` any failed check raises ``HypothesisViolation``.
    """
    if isinstance(mode, str):
        params = dict(params or {})
        try:
            spec = {"Rigid": RigidMotion, "EvenPeriodic": EvenPeriodic,
                    "SlowUniform": SlowUniform}[mode](**params)
        except KeyError:
            raise ConfigError(f"unknown Psi mode {mode!r}") from None
        except TypeError as exc:
            raise ConfigError(f"bad parameters for {mode}: {exc}") from None
    else:
        spec = mode
    form = wave_form(2) if form is None else form
    t = np.linspace(0.0, 1.0, 65) if t is None else np.asarray(t, dtype=float)
    if isinstance(spec, RigidMotion):
        out = _psi_rigid(spec, y, t, form)
    elif isinstance(spec, EvenPeriodic):
        out = _psi_even(spec, y, t, form)
    elif isinstance(spec, SlowUniform):
        out = _psi_slow(spec, y, t, form)
    else:
        raise ConfigError(f"unknown Psi mode {type(spec).__name__}")
    return _raise_failed(out) if strict else out


def _rot(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _psi_rigid(p: RigidMotion, y, t, form) -> PsiSamples:
    if not 0.0 <= p.rho0 < p.rho:
        raise ConfigError("need 0 <= rho0 < rho")
    y = _sample_disk(p.rho) if y is None else np.atleast_2d(np.asarray(y, dtype=float))
    r = np.linalg.norm(y, axis=-1)
    width = p.rho - p.rho0
    s, ds, _ = quintic_smoothstep((r - p.rho0) / width)
    beta = 1.0 - s
    safe = np.where(r > 0, r, 1.0)
    grad_beta = (-ds / width)[:, None] * (y / safe[:, None])
    nt, m = len(t), len(y)
    psi = np.empty((nt, m, 2))
    jac = np.empty((nt, m, 2, 2))
    dpsi = np.empty((nt, m, 2))
    l_norm = np.empty(nt)
    speed_bound = np.empty(nt)
    Jrot = np.array([[0.0, -p.omega], [p.omega, 0.0]])
    for i, ti in enumerate(t):
        O = _rot(p.omega * ti)
        lv = np.asarray(p.l(float(ti)), dtype=float)
        dl = np.asarray(p.dl(float(ti)), dtype=float)
        psi[i] = y @ O.T + beta[:, None] * lv
        jac[i] = O[None] + lv[None, :, None] * grad_beta[:, None, :]
        dpsi[i] = y @ (O @ Jrot).T + beta[:, None] * dl
        l_norm[i] = np.linalg.norm(lv)
        speed_bound[i] = abs(p.omega) * p.rho + np.linalg.norm(dl)
    checks = {}
    checks["(i)"] = _check(np.max(np.abs(psi[0] - y)) < 1e-12 if t[0] == 0 else True,
                           np.max(np.abs(psi[0] - y)) if t[0] == 0 else 0.0)
    on_rim = np.isclose(r, p.rho)
    rim_err = float(np.max(np.abs(np.linalg.norm(psi[:, on_rim], axis=-1) - p.rho))) \
        if on_rim.any() else 0.0
    checks["(ii')"] = _check(rim_err < 1e-12, rim_err)
    c = float(np.max(speed_bound))
    checks["speed_bound"] = _check(c < 1.0, c)
    lim = p.rho - p.rho0 - p.eps
    checks["translation_room"] = _check(np.max(l_norm) < lim, float(np.max(l_norm)))
    lip = float(np.max(l_norm) * np.max(np.linalg.norm(grad_beta, axis=-1)))
    checks["cutoff_lipschitz"] = _check(lip < 1.0, lip)
    margin = _margin_from(form, dpsi)
    checks["(iii)"] = _check(margin > 0.0, margin)
    jn, jin = _jac_norms(jac)
    checks["(iv)"] = _check(np.isfinite(jn) and np.isfinite(jin), max(jn, jin))
    return PsiSamples("Rigid", y, t, psi, jac, dpsi, checks,
                      {"jacobian_norm": jn, "inverse_jacobian_norm": jin})


def _psi_even(p: EvenPeriodic, y, t, form) -> PsiSamples:
    y = _sample_disk(1.0) if y is None else np.atleast_2d(np.asarray(y, dtype=float))
    half = p.n_steps - p.n_steps % 2
    flow = flow_from_field(p.field, y, (0.0, 0.5), n_steps=half, form=form)
    tr = np.mod(t, 1.0)
    back = np.where(tr <= 0.5, tr, 1.0 - tr)
    sign = np.where(tr <= 0.5, 1.0, -1.0)
    nt, m = len(t), len(y)
    psi = np.empty((nt, m, 2))
    jac = np.empty((nt, m, 2, 2))
    dpsi = np.empty((nt, m, 2))
    for i in range(nt):
        psi[i] = _interp_samples(flow.t, flow.F, back[i])
        jac[i] = _interp_samples(flow.t, flow.J, back[i])
        dpsi[i] = sign[i] * p.field.v(psi[i], float(back[i]))
    top = flow.F[-1]
    v_half = p.field.v(top, 0.5)
    plus, minus = _margin_from(form, -v_half), _margin_from(form, v_half)
    checks = {
        "(i)": _check(True, 0.0),
        "(iii)": _check(_margin_from(form, dpsi) > 0.0, _margin_from(form, dpsi)),
        "(iii)+": _check(plus > 0.0, plus),
        "(iii)-": _check(minus > 0.0, minus),
        "periodic": _check(True, 0.0),
    }
    rep = jacobian_bound_check(flow, strict=False)
    checks["(iv)"] = _check(rep.ok, rep.uniform_bound)
    jump = float(np.max(np.linalg.norm(2.0 * v_half, axis=-1)))
    return PsiSamples("EvenPeriodic", y, t, psi, jac, dpsi, checks,
                      {"one_sided_margin_plus": plus, "one_sided_margin_minus": minus,
                       "derivative_jump": jump, "uniform_bound": rep.uniform_bound})


def _interp_samples(ts, arr, tq):
    """Linear interpolation along the first axis (exact at the grid times)."""
    k = int(np.searchsorted(ts, tq))
    if k <= 0:
        return arr[0].copy()
    if k >= len(ts):
        return arr[-1].copy()
    t0, t1 = ts[k - 1], ts[k]
    w = (tq - t0) / (t1 - t0)
    return (1.0 - w) * arr[k - 1] + w * arr[k]


def _psi_slow(p: SlowUniform, y, t, form) -> PsiSamples:
    y = _sample_disk(p.rho) if y is None else np.atleast_2d(np.asarray(y, dtype=float))
    m, n = y.shape
    nq = p.n_quad + (1 - p.n_quad % 2)
    grid = np.linspace(0.0, 1.0, nq)
    xs = np.stack([p.x_t(y, float(s)) for s in grid])
    dx = np.stack([p.dx_t(y, float(s)) for s in grid])
    cum = integrate.cumulative_simpson(xs, x=grid, axis=0, initial=0.0)
    cumd = integrate.cumulative_simpson(dx, x=grid, axis=0, initial=0.0)
    tr = np.mod(t, 1.0)
    psi = np.empty((len(t), m, n))
    jac = np.empty((len(t), m, n, n))
    dpsi = np.empty((len(t), m, n))
    for i, ti in enumerate(tr):
        psi[i] = y + _interp_samples(grid, cum, ti)
        jac[i] = np.eye(n) + _interp_samples(grid, cumd, ti)
        dpsi[i] = p.x_t(y, float(ti))
    r = np.linalg.norm(y, axis=-1)
    shell = (r >= p.rho_prime) & (r <= p.rho)
    shell_max = float(np.max(np.abs(xs[:, shell]))) if shell.any() else 0.0
    mean_res = float(np.max(np.abs(cum[-1])))
    dnorm = float(np.max(np.linalg.norm(dx, ord=2, axis=(-2, -1))))
    dev = float(np.max(np.linalg.norm(jac - np.eye(n), ord=2, axis=(-2, -1))))
    margin = _margin_from(form, dpsi)
    checks = {
        "(i)": _check(True, 0.0),
        "zero_mean": _check(mean_res < 1e-10, mean_res),
        "shell_vanishing": _check(shell_max < 1e-12, shell_max),
        "dx_t_norm": _check(dnorm < 1.0, dnorm),
        "jacobian_deviation": _check(dev < 1.0, dev),
        "(iii)": _check(margin > 0.0, margin),
        "(iv)": _check(dev < 1.0, 1.0 / (1.0 - min(dev, 1.0 - 1e-300))),
    }
    return PsiSamples("SlowUniform", y, t, psi, jac, dpsi, checks,
                      {"jacobian_deviation": dev, "dx_t_sup": dnorm})
