"""Compiled RK4 loops for long characteristic integrations.

Curves that can describe themselves as a wall profile or as a double
Fourier series get a numba-compiled integrator.  Without numba the
callers fall back to the pure-Python loop; the results agree to rounding.
"""

from __future__ import annotations

import math

import numpy as np

try:  # pragma: no cover - exercised implicitly
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


KIND_WALL = 0
KIND_FOURIER = 1


@njit(cache=True)
def _tangent(kind, s, t, P, W, A, B, C4):
    if kind == 0:
        k, M, L, const = P[0], P[1], P[2], P[3]
        z = k * (2.0 * s - t)
        f0 = const
        f1 = 0.0
        for j in range(W.shape[0]):
            cz = math.cos(W[j] * z)
            sz = math.sin(W[j] * z)
            f0 += A[j] * cz + B[j] * sz
            f1 += W[j] * (B[j] * cz - A[j] * sz)
        a = abs(s)
        if a <= M:
            phi = 1.0
            dphi = 0.0
        elif a >= M + L:
            phi = 0.0
            dphi = 0.0
        else:
            u = (a - M) / L
            phi = 1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
            g = 30.0 / L * (u * (1.0 - u)) ** 2
            dphi = -g if s > 0 else g
        return 1.0, dphi * f0 + 2.0 * k * phi * f1, 0.0, -k * phi * f1
    a1 = 0.0
    a2 = 0.0
    b1 = 0.0
    b2 = 0.0
    for j in range(W.shape[0]):
        th = W[j] * s + A[j] * t
        c = math.cos(th)
        sn = math.sin(th)
        ux = C4[j, 2] * c - C4[j, 0] * sn
        uy = C4[j, 3] * c - C4[j, 1] * sn
        a1 += W[j] * ux
        a2 += W[j] * uy
        b1 += A[j] * ux
        b2 += A[j] * uy
    return a1, a2, b1, b2


@njit(cache=True)
def _speed(kind, s, t, alpha, cone, P, W, A, B, C4):
    s1, s2, u1, u2 = _tangent(kind, s, t, P, W, A, B, C4)
    AA = s1 * s1 + s2 * s2
    bb = s1 * u1 + s2 * u2
    CC = u1 * u1 + u2 * u2 - cone
    disc = bb * bb - AA * CC
    if disc < -1e-12:
        return math.nan
    root = math.sqrt(max(disc, 0.0))
    q = -(bb + (root if bb >= 0.0 else -root))
    r1 = q / AA
    r2 = CC / q if q != 0.0 else 0.0
    lm = min(r1, r2)
    lp = max(r1, r2)
    return alpha * lm + (1.0 - alpha) * lp


@njit(cache=True)
def rk4_kernel(kind, y0, taus, t0, h, n, alpha, cone, lo, hi, P, W, A, B, C4):
    m = y0.shape[0]
    out = np.full((n + 1, m), np.nan)
    exit_step = np.full(m, -1)
    exit_side = np.zeros(m, dtype=np.int64)
    hh = 0.5 * h
    for j in range(m):
        y = y0[j]
        out[0, j] = y
        tau = taus[j]
        for i in range(n):
            t = t0 + i * h + tau
            k1 = _speed(kind, y, t, alpha, cone, P, W, A, B, C4)
            k2 = _speed(kind, y + hh * k1, t + hh, alpha, cone, P, W, A, B, C4)
            k3 = _speed(kind, y + hh * k2, t + hh, alpha, cone, P, W, A, B, C4)
            k4 = _speed(kind, y + h * k3, t + h, alpha, cone, P, W, A, B, C4)
            ynew = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not math.isfinite(ynew):
                exit_step[j] = i
                exit_side[j] = 2
                break
            if ynew < lo or ynew > hi:
                exit_step[j] = i
                exit_side[j] = -1 if ynew < lo else 1
                break
            y = ynew
            out[i + 1, j] = y
    return out, exit_step, exit_side
