"""Compiled inner loop of the grid reachability oracle.

State lives in plain arrays owned by the caller; one call advances one time
step.  Each reached cell keeps an apex, a spacetime point from which a
straight speed-1 segment reaches the cell centre inside the free region.
New arrivals are proposed either through the apex of an already reached
neighbour (any-angle) or from the neighbour centre itself.  A proposal is
accepted only when its spacetime segment passes the line-of-sight test.
"""

from __future__ import annotations

import math

import numpy as np

from ._kernels import njit

LOS_MASK = 0
LOS_DISKS = 1
LOS_EMPTY = 2

_DI = np.array([-1, -1, -1, 0, 0, 1, 1, 1], dtype=np.int64)
_DJ = np.array([-1, 0, 1, -1, 1, -1, 0, 1], dtype=np.int64)


@njit(cache=True)
def _mask_index(idx, K, periodic):
    if periodic:
        r = idx % K
        return r + K if r < 0 else r
    if idx < 0:
        return 0
    if idx >= K:
        return K - 1
    return idx


@njit(cache=True)
def _seg_point_dist2(ax, ay, bx, by, cx, cy):
    ux = bx - ax
    uy = by - ay
    L2 = ux * ux + uy * uy
    if L2 == 0.0:
        s = 0.0
    else:
        s = ((cx - ax) * ux + (cy - ay) * uy) / L2
        if s < 0.0:
            s = 0.0
        elif s > 1.0:
            s = 1.0
    px = ax + s * ux - cx
    py = ay + s * uy - cy
    return px * px + py * py


@njit(cache=True)
def line_of_sight(ax, ay, at, bx, by, bt, rho, dx, t0, dt, masks, periodic, los_kind, disks):
    """Whether the spacetime segment from ``(a, at)`` to ``(b, bt)`` stays free."""
    if los_kind == LOS_EMPTY:
        return True
    if los_kind == LOS_DISKS:
        for k in range(disks.shape[0]):
            r = disks[k, 2]
            if _seg_point_dist2(ax, ay, bx, by, disks[k, 0], disks[k, 1]) < r * r:
                return False
        return True
    n = masks.shape[1]
    K = masks.shape[0]
    L = math.hypot(bx - ax, by - ay)
    ns = int(math.ceil(L / (0.25 * dx)))
    lim = rho * rho * (1.0 + 1e-12)
    for k in range(1, ns):
        s = k / ns
        px = ax + s * (bx - ax)
        py = ay + s * (by - ay)
        if px * px + py * py > lim:
            return False
        i = int(math.floor((px + rho) / dx))
        j = int(math.floor((py + rho) / dx))
        if i < 0 or j < 0 or i >= n or j >= n:
            return False
        pt = at + s * (bt - at)
        idx = int(math.floor((pt - t0) / dt + 0.5))
        if masks[_mask_index(idx, K, periodic), i, j] == 0:
            return False
    return True


@njit(cache=True)
def _propose(i, j, ax, ay, at, tau, t, xc, rho, dx, t0, dt, masks, periodic, los_kind, disks,
             free_now, alive, ever, first, apx, apy, apt, arr, pC, pax, pay, pat, free_since,
             stack, top):
    tol = 1e-12
    if tau < free_since[i, j] - tol:
        return top
    if tau >= pC[i, j] - 1e-15:
        return top
    if not line_of_sight(ax, ay, at, xc[i], xc[j], tau, rho, dx, t0, dt, masks, periodic,
                         los_kind, disks):
        return top
    pC[i, j] = tau
    pax[i, j] = ax
    pay[i, j] = ay
    pat[i, j] = at
    if tau <= t + tol and free_now[i, j]:
        top = _finalize(i, j, alive, ever, first, apx, apy, apt, arr, pC, pax, pay, pat, stack, top)
    return top


@njit(cache=True)
def _finalize(i, j, alive, ever, first, apx, apy, apt, arr, pC, pax, pay, pat, stack, top):
    alive[i, j] = 1
    apx[i, j] = pax[i, j]
    apy[i, j] = pay[i, j]
    apt[i, j] = pat[i, j]
    arr[i, j] = pC[i, j]
    if ever[i, j] == 0:
        ever[i, j] = 1
        first[i, j] = pC[i, j]
    pC[i, j] = math.inf
    stack[top] = i * alive.shape[1] + j
    return top + 1


@njit(cache=True)
def reach_step(nidx, t0, dt, rho, dx, xc, masks, periodic, inside,
               ring_i, ring_j, ring_x, ring_y, ring_on,
               pts_i, pts_j, pts_x, pts_y, pts_t, pts_step,
               los_kind, disks,
               alive, ever, first, apx, apy, apt, arr, pC, pax, pay, pat,
               free_since, free_now, stack):
    """Advance the reachable set to step ``nidx`` (time ``t0 + nidx dt``)."""
    n = alive.shape[0]
    K = masks.shape[0]
    t = t0 + nidx * dt
    m = masks[_mask_index(nidx, K, periodic)]
    tol = 1e-12
    for i in range(n):
        for j in range(n):
            f = m[i, j] != 0 and inside[i, j] != 0
            if f and free_now[i, j] == 0:
                free_since[i, j] = t
            free_now[i, j] = 1 if f else 0
            if not f:
                alive[i, j] = 0
                if pC[i, j] <= t + tol:
                    pC[i, j] = math.inf
    top = 0
    if ring_on:
        for r in range(ring_i.shape[0]):
            i = ring_i[r]
            j = ring_j[r]
            if free_now[i, j] and not alive[i, j]:
                d = math.hypot(xc[i] - ring_x[r], xc[j] - ring_y[r])
                top = _propose(i, j, ring_x[r], ring_y[r], t, t + d, t, xc, rho, dx, t0, dt,
                               masks, periodic, los_kind, disks, free_now, alive, ever, first,
                               apx, apy, apt, arr, pC, pax, pay, pat, free_since, stack, top)
    for r in range(pts_i.shape[0]):
        if pts_step[r] == nidx:
            i = pts_i[r]
            j = pts_j[r]
            if free_now[i, j] and not alive[i, j]:
                d = math.hypot(xc[i] - pts_x[r], xc[j] - pts_y[r])
                top = _propose(i, j, pts_x[r], pts_y[r], pts_t[r], pts_t[r] + d, t, xc, rho, dx,
                               t0, dt, masks, periodic, los_kind, disks, free_now, alive, ever,
                               first, apx, apy, apt, arr, pC, pax, pay, pat, free_since, stack,
                               top)
    for i in range(n):
        for j in range(n):
            if free_now[i, j] and not alive[i, j] and pC[i, j] <= t + tol:
                top = _finalize(i, j, alive, ever, first, apx, apy, apt, arr, pC, pax, pay, pat,
                                stack, top)
    for i in range(n):
        for j in range(n):
            if not free_now[i, j] or alive[i, j] or pC[i, j] < math.inf:
                continue
            for q in range(8):
                a = i + _DI[q]
                b = j + _DJ[q]
                if a < 0 or b < 0 or a >= n or b >= n or not alive[a, b]:
                    continue
                d = math.hypot(xc[i] - apx[a, b], xc[j] - apy[a, b])
                top = _propose(i, j, apx[a, b], apy[a, b], apt[a, b], apt[a, b] + d, t, xc, rho,
                               dx, t0, dt, masks, periodic, los_kind, disks, free_now, alive,
                               ever, first, apx, apy, apt, arr, pC, pax, pay, pat, free_since,
                               stack, top)
                if alive[i, j]:
                    break
                d = math.hypot(xc[i] - xc[a], xc[j] - xc[b])
                top = _propose(i, j, xc[a], xc[b], t, t + d, t, xc, rho, dx, t0, dt, masks,
                               periodic, los_kind, disks, free_now, alive, ever, first, apx, apy,
                               apt, arr, pC, pax, pay, pat, free_since, stack, top)
                if alive[i, j]:
                    break
    while top > 0:
        top -= 1
        c = stack[top]
        ci = c // n
        cj = c % n
        ax = apx[ci, cj]
        ay = apy[ci, cj]
        at = apt[ci, cj]
        for q in range(8):
            a = ci + _DI[q]
            b = cj + _DJ[q]
            if a < 0 or b < 0 or a >= n or b >= n:
                continue
            if not free_now[a, b] or alive[a, b]:
                continue
            tau = at + math.hypot(xc[a] - ax, xc[b] - ay)
            if tau >= pC[a, b] - 1e-15 or tau < free_since[a, b] - tol:
                continue
            if line_of_sight(ax, ay, at, xc[a], xc[b], tau, rho, dx, t0, dt, masks, periodic,
                             los_kind, disks):
                top = _propose(a, b, ax, ay, at, tau, t, xc, rho, dx, t0, dt, masks, periodic,
                               los_kind, disks, free_now, alive, ever, first, apx, apy, apt, arr,
                               pC, pax, pay, pat, free_since, stack, top)
                continue
            bx, by, bt = _bend(ax, ay, at, xc[ci], xc[cj], arr[ci, cj], xc[a], xc[b], rho, dx,
                               t0, dt, masks, periodic, los_kind, disks)
            if bt == math.inf:
                continue
            tau = bt + math.hypot(xc[a] - bx, xc[b] - by)
            top = _propose(a, b, bx, by, bt, tau, t, xc, rho, dx, t0, dt, masks, periodic,
                           los_kind, disks, free_now, alive, ever, first, apx, apy, apt, arr, pC,
                           pax, pay, pat, free_since, stack, top)


@njit(cache=True)
def _bend(ax, ay, at, cx, cy, ct, px, py, rho, dx, t0, dt, masks, periodic, los_kind, disks):
    """Earliest point on the segment apex -> parent that still sees ``p``.

    The segment from the apex to the parent centre is already known to be
    free, so any point on it is a valid place to turn.  Sliding the turn
    towards the apex never lengthens the path; bisection finds the first
    visible point.  Returns ``inf`` time when even the parent is blind.
    """
    L = math.hypot(cx - ax, cy - ay)
    if not line_of_sight(cx, cy, ct, px, py, ct + math.hypot(px - cx, py - cy), rho, dx, t0, dt,
                         masks, periodic, los_kind, disks):
        return 0.0, 0.0, math.inf
    if L == 0.0 or ct > at + L + 1e-12:
        return cx, cy, ct
    lo = 0.0
    hi = 1.0
    while (hi - lo) * L > 1e-4 * dx:
        mid = 0.5 * (lo + hi)
        bx = ax + mid * (cx - ax)
        by = ay + mid * (cy - ay)
        bt = at + mid * L
        if line_of_sight(bx, by, bt, px, py, bt + math.hypot(px - bx, py - by), rho, dx, t0, dt,
                         masks, periodic, los_kind, disks):
            hi = mid
        else:
            lo = mid
    return ax + hi * (cx - ax), ay + hi * (cy - ay), at + hi * L
