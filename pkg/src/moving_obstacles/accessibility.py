"""Accessibility of boundary and interior spacetime points.

Three kinds of evidence are produced here:

* boundary fans, the region between the extreme null characteristics
  ``sigma_-(t)`` and ``sigma_+(t)`` leaving an apex seed, with an explicit
  blended characteristic (an ``alpha`` certificate) for any point inside;
* interior access paths, assembled from a radial light ray, a boundary
  certificate, a vertical wait and a speed-1/2 descent;
* a grid reachability oracle that propagates the set of points reachable
  from the outer cylinder ``|x| = rho`` by speed-1 curves avoiding the
  obstacle.

The oracle is an any-angle front on a square lattice.  Every reached cell
remembers an apex, a spacetime point from which a straight speed-1 segment
arrives at the cell centre; arrival times are therefore continuous, not
rounded to the lattice.  Obstacle occlusion is tested along the spacetime
segment either exactly (stationary disks) or against the sampled obstacle
masks.
"""

from __future__ import annotations

import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import optimize

from . import _reach_kernel as rk
from .boundary import (
    BoundaryCurve2D,
    CircleCurve,
    CircleDomain,
    StefanovWall,
)
from .characteristics import SpeedField, Trajectory, integrate_characteristic, lambda_pm
from .errors import ConfigError, Inaccessible, NumericalError, PropertyViolation

__all__ = [
    "ReachDomain",
    "EmptyDomain",
    "DiskDomain",
    "CurveObstacleDomain",
    "StefanovChannelDomain",
    "domain_from_config",
    "ReachSet",
    "reach_forward",
    "disk_geodesic_distance",
    "ApexSeed",
    "apex_seeds",
    "AccessFan",
    "boundary_fan",
    "BoundaryCertificate",
    "fan_certificate",
    "PathSegment",
    "AccessPath",
    "interior_access_path",
    "InaccessibleReport",
    "inaccessible_report",
    "channel_mouth_check",
]

REACH_MAGIC = b"MOREACH1"


# ---------------------------------------------------------------------------
# domains


class ReachDomain(ABC):
    """Free region ``Omega_t`` inside the cylinder ``|x| <= rho``.

    ``period`` is ``None`` for stationary domains.  ``curve`` is the moving
    boundary used for boundary reports and access paths, when there is one.
    """

    rho: float
    period: float | None = None

    @abstractmethod
    def free(self, x1, x2, t) -> np.ndarray:
        """Membership in ``Omega_t`` (ignoring the cylinder)."""

    def los_spec(self):
        """``(kind, disks)`` for the compiled line-of-sight test."""
        return rk.LOS_MASK, np.zeros((0, 3))

    @property
    def curve(self) -> BoundaryCurve2D | None:
        return None

    def in_cylinder(self, x1, x2) -> np.ndarray:
        return np.hypot(x1, x2) <= self.rho

    def apex_seeds(self, periods=range(1)):
        """Seeds on the outer obstacle boundary; defaults to the curve's."""
        if self.curve is None:
            return []
        return apex_seeds(self.curve, periods=periods)

    def describe(self) -> dict:
        return {"kind": type(self).__name__, "rho": self.rho}


@dataclass
class EmptyDomain(ReachDomain):
    """No obstacle."""

    rho: float = 1.0
    period: float | None = None

    def free(self, x1, x2, t):
        return np.ones(np.broadcast(np.asarray(x1), np.asarray(x2)).shape, dtype=bool)

    def los_spec(self):
        return rk.LOS_EMPTY, np.zeros((0, 3))


@dataclass
class DiskDomain(ReachDomain):
    """A stationary closed disk obstacle; occlusion is tested exactly."""

    radius: float = 0.3
    center: tuple[float, float] = (0.0, 0.0)
    rho: float = 1.0
    period: float | None = None

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigError("disk radius must be positive")
        if math.hypot(*self.center) + self.radius >= self.rho:
            raise ConfigError("disk must lie inside the cylinder")

    def free(self, x1, x2, t):
        return np.hypot(np.asarray(x1) - self.center[0], np.asarray(x2) - self.center[1]) > self.radius

    def los_spec(self):
        return rk.LOS_DISKS, np.array([[self.center[0], self.center[1], self.radius]])

    @property
    def curve(self):
        return CircleCurve(self.radius, tuple(self.center), time_period=1.0)

    def describe(self):
        return {"kind": "DiskDomain", "rho": self.rho, "radius": self.radius,
                "center": list(self.center)}


@dataclass
class CurveObstacleDomain(ReachDomain):
    """Obstacle bounded by a closed moving curve (its interior is removed)."""

    boundary: BoundaryCurve2D = field(default_factory=CircleCurve)
    rho: float = 2.0

    def __post_init__(self):
        if not self.boundary.is_closed:
            raise ConfigError("CurveObstacleDomain needs a closed curve")
        self.period = None if isinstance(self.boundary, CircleCurve) else self.boundary.time_period

    def free(self, x1, x2, t):
        return ~np.asarray(self.boundary.contains(x1, x2, t), dtype=bool)

    @property
    def curve(self):
        return self.boundary

    def describe(self):
        return {"kind": "CurveObstacleDomain", "rho": self.rho, "curve": self.boundary.describe()}


@dataclass
class StefanovChannelDomain(ReachDomain):
    """Rounded block pierced by the thin channel under a Stefanov wall.

    The block covers ``x1`` from ``-(M + L) - 2 pocket - pad`` to ``M + L``
    and ``|x2| <= half_height``.  The channel ``y(x1, t) - eps < x2 <
    y(x1, t)`` runs from the left end of the wall to the right face of the
    block, where it opens into free space.  At its left end it widens into a
    square pocket of half-size ``pocket``; the pocket and the mouth segment
    ``x1 = -M - L, -eps < x2 < 0`` are the cells that a traversal would have
    to reach.
    """

    wall: StefanovWall
    eps: float
    rho: float | None = None
    pad: float = 0.3
    half_height: float = 1.25
    pocket: float = 0.1
    corner: float = 0.25

    def __post_init__(self):
        p = self.wall.params
        if self.rho is None:
            self.rho = p.M + p.L + 1.0
        if self.eps <= 0:
            raise ConfigError("channel width eps must be positive")
        self.period = self.wall.time_period
        self.right = p.M + p.L
        self.mouth_x = -(p.M + p.L)
        self.left = self.mouth_x - 2.0 * self.pocket - self.pad
        far = math.hypot(max(abs(self.left), self.right), self.half_height)
        if far >= self.rho:
            raise ConfigError(f"block does not fit in the cylinder rho={self.rho}")

    @property
    def curve(self):
        return self.wall

    def _in_block(self, x1, x2):
        cx = 0.5 * (self.left + self.right)
        hx = 0.5 * (self.right - self.left) - self.corner
        hy = self.half_height - self.corner
        qx = np.abs(x1 - cx) - hx
        qy = np.abs(x2) - hy
        outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
        inside = np.minimum(np.maximum(qx, qy), 0.0)
        return outside + inside <= self.corner

    def in_pocket(self, x1, x2):
        cx = self.mouth_x - self.pocket
        cy = -0.5 * self.eps
        return (np.abs(x1 - cx) < self.pocket) & (np.abs(x2 - cy) < self.pocket)

    def in_channel(self, x1, x2, t):
        y = self.wall.graph(x1, t)[0]
        return (x1 >= self.mouth_x) & (x1 <= self.right + 1e-12) & (x2 > y - self.eps) & (x2 < y)

    def free(self, x1, x2, t):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        x1, x2 = np.broadcast_arrays(x1, x2)
        return ~self._in_block(x1, x2) | self.in_pocket(x1, x2) | self.in_channel(x1, x2, t)

    def mouth_mask(self, X1, X2, dx):
        """Cells inside the pocket or whose square meets the mouth segment."""
        seg = (np.abs(X1 - self.mouth_x) <= 0.5 * dx) & (X2 - 0.5 * dx < 0.0) & \
              (X2 + 0.5 * dx > -self.eps)
        return seg | self.in_pocket(X1, X2)

    def apex_seeds(self, periods=range(1)):
        """The block corner farthest from the origin; it never moves."""
        cx = self.left + self.corner
        cy = self.half_height - self.corner
        r = math.hypot(cx, cy)
        x = np.array([cx, cy]) * (1.0 + self.corner / r)
        return [ApexSeed(math.nan, float(n) * self.period, float(x[0]), float(x[1]),
                         float(np.hypot(*x))) for n in periods]

    def describe(self):
        return {"kind": "StefanovChannelDomain", "rho": self.rho, "eps": self.eps,
                "wall": self.wall.describe(), "pad": self.pad,
                "half_height": self.half_height, "pocket": self.pocket}


def domain_from_config(cfg: dict) -> ReachDomain:
    """Build a domain from ``{"kind": ..., ...}``; unknown keys are rejected."""
    from .boundary import curve_from_config, stefanov_params_from_config, build_stefanov_wall

    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    allowed = {
        "EmptyDomain": {"rho"},
        "DiskDomain": {"rho", "radius", "center"},
        "CurveObstacleDomain": {"rho", "curve"},
        "StefanovChannelDomain": {"rho", "wall", "eps", "pad", "half_height", "pocket"},
    }
    if kind not in allowed:
        raise ConfigError(f"unknown domain kind {kind!r}", key="kind")
    extra = set(cfg) - allowed[kind]
    if extra:
        raise ConfigError(f"unknown keys for {kind}: {sorted(extra)}", key=sorted(extra)[0])
    if kind == "EmptyDomain":
        return EmptyDomain(float(cfg.get("rho", 1.0)))
    if kind == "DiskDomain":
        return DiskDomain(float(cfg.get("radius", 0.3)), tuple(cfg.get("center", (0.0, 0.0))),
                          float(cfg.get("rho", 1.0)))
    if kind == "CurveObstacleDomain":
        if "curve" not in cfg:
            raise ConfigError("CurveObstacleDomain needs a curve block", key="curve")
        return CurveObstacleDomain(curve_from_config(cfg["curve"]), float(cfg.get("rho", 2.0)))
    wall = build_stefanov_wall(stefanov_params_from_config(cfg.get("wall", {})))
    if "eps" not in cfg:
        from .stefanov import build_channel

        eps = build_channel(wall).eps
    else:
        eps = float(cfg["eps"])
    kw = {k: float(cfg[k]) for k in ("pad", "half_height", "pocket") if k in cfg}
    rho = float(cfg["rho"]) if "rho" in cfg else None
    return StefanovChannelDomain(wall, eps, rho, **kw)


# ---------------------------------------------------------------------------
# reachability oracle


@dataclass
class ReachSet:
    """Sampled reachable sets on the lattice ``[-rho, rho]^2``.

    Cell ``[i, j]`` has centre ``(x[i], x[j])``.  ``reachable[k]`` and
    ``obstacle[k]`` are the slices at step ``snapshot_steps[k]``;
    ``ever_reached`` and ``first_arrival`` summarize the whole run
    (``inf`` where never reached).
    """

    rho: float
    dx: float
    dt: float
    t_start: float
    n_steps: int
    x: np.ndarray
    snapshot_steps: np.ndarray
    reachable: np.ndarray
    obstacle: np.ndarray
    ever_reached: np.ndarray
    first_arrival: np.ndarray
    inside: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * self.snapshot_steps

    @property
    def t_end(self) -> float:
        return self.t_start + self.dt * self.n_steps

    def mesh(self):
        return np.meshgrid(self.x, self.x, indexing="ij")

    def slice_index(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def measure(self, k: int = -1) -> float:
        """Area of the reachable slice ``k``."""
        return float(self.reachable[k].sum()) * self.dx * self.dx

    def cell_of(self, p) -> tuple[int, int]:
        i = int(math.floor((p[0] + self.rho) / self.dx))
        j = int(math.floor((p[1] + self.rho) / self.dx))
        return i, j

    def save(self, path) -> None:
        """Write the compact format: magic, header length, JSON header, blocks."""
        blocks = {
            "reachable": np.packbits(self.reachable.astype(bool), axis=None),
            "obstacle": np.packbits(self.obstacle.astype(bool), axis=None),
            "ever_reached": np.packbits(self.ever_reached.astype(bool), axis=None),
            "inside": np.packbits(self.inside.astype(bool), axis=None),
            "first_arrival": self.first_arrival.astype("<f8"),
            "snapshot_steps": self.snapshot_steps.astype("<i8"),
        }
        shapes = {
            "reachable": list(self.reachable.shape),
            "obstacle": list(self.obstacle.shape),
            "ever_reached": list(self.ever_reached.shape),
            "inside": list(self.inside.shape),
            "first_arrival": list(self.first_arrival.shape),
            "snapshot_steps": list(self.snapshot_steps.shape),
        }
        layout, offset = [], 0
        for name, arr in blocks.items():
            nbytes = arr.nbytes
            layout.append({"name": name, "offset": offset, "nbytes": nbytes,
                           "dtype": "bits" if arr.dtype == np.uint8 else arr.dtype.str,
                           "shape": shapes[name]})
            offset += nbytes
        header = {
            "format": "reachset/1",
            "rho": self.rho,
            "dx": self.dx,
            "dt": self.dt,
            "t_start": self.t_start,
            "n_steps": self.n_steps,
            "t_range": [self.t_start, self.t_end],
            "n": int(self.x.size),
            "blocks": layout,
            "meta": self.meta,
        }
        hb = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(REACH_MAGIC)
            fh.write(len(hb).to_bytes(8, "little"))
            fh.write(hb)
            for arr in blocks.values():
                fh.write(arr.tobytes())

    @classmethod
    def load(cls, path) -> "ReachSet":
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:8] != REACH_MAGIC:
            raise ConfigError(f"{path}: not a reach-set file")
        hl = int.from_bytes(data[8:16], "little")
        header = json.loads(data[16:16 + hl])
        base = 16 + hl
        out = {}
        for b in header["blocks"]:
            raw = data[base + b["offset"]: base + b["offset"] + b["nbytes"]]
            shape = tuple(b["shape"])
            if b["dtype"] == "bits":
                count = int(np.prod(shape))
                out[b["name"]] = np.unpackbits(np.frombuffer(raw, np.uint8),
                                               count=count).astype(bool).reshape(shape)
            else:
                out[b["name"]] = np.frombuffer(raw, b["dtype"]).reshape(shape).copy()
        n, rho, dx = header["n"], header["rho"], header["dx"]
        x = -rho + dx * (np.arange(n) + 0.5)
        return cls(rho, dx, header["dt"], header["t_start"], header["n_steps"], x,
                   out["snapshot_steps"], out["reachable"], out["obstacle"],
                   out["ever_reached"], out["first_arrival"], out["inside"], header["meta"])


def _lattice(rho: float, dx: float | None, resolution: int | None):
    if dx is None:
        resolution = 200 if resolution is None else int(resolution)
        if resolution < 8:
            raise ConfigError("resolution must be at least 8")
        n = resolution
    else:
        if dx <= 0:
            raise ConfigError("dx must be positive")
        n = int(math.ceil(2.0 * rho / dx - 1e-9))
    dx = 2.0 * rho / n
    x = -rho + dx * (np.arange(n) + 0.5)
    return n, dx, x


def _ring(x, rho, inside):
    n = x.size
    pad = np.zeros((n + 2, n + 2), dtype=bool)
    pad[1:-1, 1:-1] = inside
    border = ~(pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:])
    ii, jj = np.nonzero(inside & border)
    r = np.hypot(x[ii], x[jj])
    safe = np.where(r > 0, r, 1.0)
    return ii.astype(np.int64), jj.astype(np.int64), rho * x[ii] / safe, rho * x[jj] / safe


def _parse_source(source, t0, dt, x, rho, dx):
    empty_i = np.zeros(0, dtype=np.int64)
    empty_f = np.zeros(0)
    if isinstance(source, str):
        if source != "ring":
            raise ConfigError(f"unknown source {source!r}")
        return True, (empty_i, empty_i, empty_f, empty_f, empty_f, empty_i)
    if isinstance(source, dict):
        unknown = set(source) - {"points", "time"}
        if unknown:
            raise ConfigError(f"unknown source keys {sorted(unknown)}")
        pts = np.atleast_2d(np.asarray(source.get("points", []), dtype=float))
        ts = np.full(len(pts), float(source.get("time", t0)))
    else:
        pts = np.atleast_2d(np.asarray(source, dtype=float))
        ts = np.full(len(pts), t0)
    if pts.size == 0 or pts.shape[1] != 2:
        raise ConfigError("point sources must be a list of [x1, x2] pairs")
    if np.any(np.hypot(pts[:, 0], pts[:, 1]) > rho * (1 + 1e-12)):
        raise ConfigError("point sources must lie in the closed cylinder")
    n = x.size
    ii = np.clip(np.floor((pts[:, 0] + rho) / dx).astype(np.int64), 0, n - 1)
    jj = np.clip(np.floor((pts[:, 1] + rho) / dx).astype(np.int64), 0, n - 1)
    steps = np.ceil((ts - t0) / dt - 1e-9).astype(np.int64)
    return False, (ii, jj, pts[:, 0].copy(), pts[:, 1].copy(), ts, steps)


def reach_forward(domain: ReachDomain, source="ring", t_range=(0.0, 1.0), dx: float | None = None,
                  dt: float | None = None, *, resolution: int | None = None,
                  max_snapshots: int = 64, snapshot_steps=None,
                  observer: Callable[[int, float, np.ndarray], None] | None = None,
                  observe_every: int = 1) -> ReachSet:
    """Propagate the forward-reachable set from ``source`` over ``t_range``.

    ``source`` is ``"ring"`` (the outer circle at every time step) or a list
    of points (optionally ``{"points": [...], "time": t}``) released once.
    ``dt`` defaults to ``dx / 2``, shortened so that it divides the domain's
    time period; ``dt > dx / 2`` is rejected.  ``observer(step, t, alive)`` is
    called every ``observe_every`` steps with the current reachable slice.
    """
    rho = float(domain.rho)
    n, dx, x = _lattice(rho, dx, resolution)
    t0, t1 = map(float, t_range)
    if not t1 > t0:
        raise ConfigError("t_range must be increasing")
    if dt is None:
        dt = 0.5 * dx
        if domain.period:
            dt = domain.period / math.ceil(domain.period / dt - 1e-9)
    dt = float(dt)
    if dt > 0.5 * dx * (1.0 + 1e-12) or dt <= 0:
        raise ConfigError(f"time step {dt:g} violates dt <= dx/2 = {0.5 * dx:g}",
                          key="dt", dt=dt, dx=dx)
    n_steps = int(math.ceil((t1 - t0) / dt - 1e-9))
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    inside = np.hypot(X1, X2) <= rho
    if domain.period is None:
        mask_times = np.array([t0])
        periodic = True
    else:
        per = domain.period / dt
        if abs(per - round(per)) < 1e-9:
            mask_times = t0 + dt * np.arange(int(round(per)))
            periodic = True
        else:
            look = int(math.ceil(2.0 * rho / dt)) + 1
            count = n_steps + look + 1
            if count * n * n > 1_500_000_000:
                raise ConfigError("dt does not divide the domain period and the horizon is "
                                  "too long to store every obstacle slice")
            mask_times = t0 + dt * np.arange(count)
            periodic = False
    masks = np.empty((len(mask_times), n, n), dtype=np.uint8)
    for k, tm in enumerate(mask_times):
        masks[k] = domain.free(X1, X2, float(tm))
    los_kind, disks = domain.los_spec()
    ring_on, pts = _parse_source(source, t0, dt, x, rho, dx)
    ring = _ring(x, rho, inside) if ring_on else (np.zeros(0, np.int64),) * 2 + (np.zeros(0),) * 2

    u8 = lambda: np.zeros((n, n), dtype=np.uint8)  # noqa: E731
    alive, ever, free_now = u8(), u8(), u8()
    first = np.full((n, n), np.inf)
    apx, apy, apt, arr = (np.zeros((n, n)) for _ in range(4))
    pC = np.full((n, n), np.inf)
    pax, pay, pat = (np.zeros((n, n)) for _ in range(3))
    free_since = np.full((n, n), -np.inf)
    stack = np.zeros(n * n + 8, dtype=np.int64)
    inside_u8 = inside.astype(np.uint8)

    if snapshot_steps is None:
        every = max(1, int(math.ceil(n_steps / max(1, max_snapshots - 1))))
        snaps = sorted(set(range(0, n_steps + 1, every)) | {n_steps})
    else:
        snaps = sorted({int(s) for s in snapshot_steps if 0 <= int(s) <= n_steps})
    snap_set = set(snaps)
    reach_s = np.zeros((len(snaps), n, n), dtype=bool)
    obst_s = np.zeros((len(snaps), n, n), dtype=bool)
    k = 0
    for step in range(n_steps + 1):
        rk.reach_step(step, t0, dt, rho, dx, x, masks, periodic, inside_u8,
                      ring[0], ring[1], ring[2], ring[3], ring_on,
                      pts[0], pts[1], pts[2], pts[3], pts[4], pts[5],
                      los_kind, disks,
                      alive, ever, first, apx, apy, apt, arr, pC, pax, pay, pat,
                      free_since, free_now, stack)
        if step in snap_set:
            reach_s[k] = alive.astype(bool)
            obst_s[k] = inside & (free_now == 0)
            k += 1
        if observer is not None and step % observe_every == 0:
            observer(step, t0 + step * dt, alive)
    meta = {"domain": domain.describe(), "source": source if isinstance(source, str) else "points",
            "periodic_masks": bool(periodic), "mask_slices": int(len(mask_times))}
    return ReachSet(rho, dx, dt, t0, n_steps, x, np.array(snaps, dtype=np.int64), reach_s,
                    obst_s, ever.astype(bool), first, inside, meta)


def disk_geodesic_distance(points, source, radius: float, center=(0.0, 0.0)) -> np.ndarray:
    """Shortest distance from ``source`` to ``points`` avoiding an open disk.

    When the straight segment meets the disk the path wraps: two tangent
    segments plus the shorter arc between the tangent points.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(center, dtype=float)
    s = np.asarray(source, dtype=float) - np.asarray(center, dtype=float)
    r = float(radius)
    ds = float(np.hypot(*s))
    if ds < r:
        raise ConfigError("source lies inside the disk")
    dp = np.hypot(p[:, 0], p[:, 1])
    straight = np.hypot(p[:, 0] - s[0], p[:, 1] - s[1])
    u = p - s
    L2 = np.maximum(np.einsum("ij,ij->i", u, u), 1e-300)
    lam = np.clip(-(u @ s) / L2, 0.0, 1.0)
    closest = s + lam[:, None] * u
    blocked = np.hypot(closest[:, 0], closest[:, 1]) < r
    theta = np.arccos(np.clip((p @ s) / np.maximum(dp * ds, 1e-300), -1.0, 1.0))
    with np.errstate(invalid="ignore"):
        wrap = (np.sqrt(ds * ds - r * r) + np.sqrt(np.maximum(dp * dp - r * r, 0.0))
                + r * (theta - np.arccos(r / ds) - np.arccos(np.minimum(r / np.maximum(dp, r), 1.0))))
    return np.where(blocked, wrap, straight)


# ---------------------------------------------------------------------------
# apex seeds and fans


class ApexSeed(NamedTuple):
    """Boundary point of maximal ``|x|``; ``sigma`` is NaN off the curve."""

    sigma: float
    t: float
    x1: float
    x2: float
    radius: float


def _parabolic(f_m, f_0, f_p):
    den = f_m - 2.0 * f_0 + f_p
    if den >= -1e-10 * max(1.0, abs(f_0)):
        return 0.0
    return 0.5 * (f_m - f_p) / den


def apex_seeds(curve, *, periods=range(1), sigma_samples: int = 512,
               t_samples: int = 256) -> list[ApexSeed]:
    """Maximizers of ``|x(sigma, t)|`` over one period, replicated at ``t0 + nT``.

    A domain with its own ``apex_seeds`` method is delegated to.  The grid
    argmax is refined by one parabolic step per coordinate; flat directions
    (a stationary circle, say) keep the grid value, so ties resolve to the
    first sample.
    """
    if isinstance(curve, ReachDomain):
        return curve.apex_seeds(periods)
    if curve.time_period is None:
        raise ConfigError("apex_seeds needs a time-periodic curve")
    T = float(curve.time_period)
    dom = curve.sigma_domain
    if isinstance(dom, CircleDomain):
        s = dom.period * np.arange(sigma_samples) / sigma_samples
    else:
        s = np.linspace(dom.lo, dom.hi, sigma_samples)
    ts = T * np.arange(t_samples) / t_samples
    S, TT = np.meshgrid(s, ts, indexing="ij")
    X = curve.position(S, TT)
    R2 = np.einsum("...i,...i->...", X, X)
    near = R2 >= R2.max() * (1.0 - 1e-12)
    i, j = np.unravel_index(int(np.argmax(near)), R2.shape)
    ds = s[1] - s[0]
    dtt = ts[1] - ts[0]

    def r2(sig, tt):
        x = curve.position(np.array(sig), np.array(tt), check=False)
        return float(x @ x)

    s0, t0 = float(s[i]), float(ts[j])
    if isinstance(dom, CircleDomain) or 0 < i < len(s) - 1:
        s0 += ds * _parabolic(r2(s0 - ds, t0), r2(s0, t0), r2(s0 + ds, t0))
    t0 += dtt * _parabolic(r2(s0, t0 - dtt), r2(s0, t0), r2(s0, t0 + dtt))
    t0 = t0 % T
    x = curve.position(np.array(s0), np.array(t0), check=False)
    rad = float(np.hypot(*x))
    return [ApexSeed(s0, t0 + n * T, float(x[0]), float(x[1]), rad) for n in periods]


@dataclass
class AccessFan:
    """Extreme characteristics from a seed on a common time grid.

    ``sigma_minus``/``sigma_plus`` are unwrapped; samples after either
    characteristic leaves an interval domain are NaN.
    """

    curve: BoundaryCurve2D
    seed: tuple[float, float]
    t: np.ndarray
    sigma_minus: np.ndarray
    sigma_plus: np.ndarray
    coverage_time: float | None
    minus: Trajectory = field(repr=False)
    plus: Trajectory = field(repr=False)

    @property
    def width(self) -> np.ndarray:
        return self.sigma_plus - self.sigma_minus

    @property
    def winding(self) -> int | None:
        """Completed laps of the fan width around a closed curve."""
        if not isinstance(self.curve.sigma_domain, CircleDomain):
            return None
        w = self.width[np.isfinite(self.width)]
        return int(math.floor(w[-1] / self.curve.sigma_domain.period + 1e-12)) if w.size else 0

    def interval(self, t: float) -> tuple[float, float]:
        return (float(np.interp(t, self.t, self.sigma_minus)),
                float(np.interp(t, self.t, self.sigma_plus)))

    def contains(self, sigma: float, t: float) -> bool:
        """Whether ``(sigma, t)`` lies strictly inside the fan (any lift)."""
        if t < self.t[0] or t > self.t[-1]:
            return False
        lo, hi = self.interval(t)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            return False
        if isinstance(self.curve.sigma_domain, CircleDomain):
            P = self.curve.sigma_domain.period
            if hi - lo >= P:
                return True
            lift = lo + ((sigma - lo) % P)
            return lo < lift < hi
        return lo < sigma < hi

    def rows(self) -> np.ndarray:
        return np.column_stack([self.t, self.sigma_minus, self.sigma_plus])

    def to_dict(self) -> dict:
        return {"seed": list(self.seed), "coverage_time": self.coverage_time,
                "t_end": float(self.t[-1]), "sigma_minus_end": float(self.sigma_minus[-1]),
                "sigma_plus_end": float(self.sigma_plus[-1]), "winding": self.winding,
                "minus_termination": self.minus.termination,
                "plus_termination": self.plus.termination}


def _on_grid(traj: Trajectory, t: np.ndarray) -> np.ndarray:
    out = np.interp(t, traj.t, traj.sigma)
    out[t > traj.t[-1] + 1e-12] = np.nan
    return out


def boundary_fan(curve: BoundaryCurve2D, seed, horizon: float, *, tol: float = 1e-8) -> AccessFan:
    """Integrate ``sigma_-`` (alpha = 1) and ``sigma_+`` (alpha = 0) from ``seed``.

    ``seed`` is ``(sigma0, t0)`` or an ``ApexSeed``.  The coverage time is the
    first time the fan width reaches the sigma period (closed curves only),
    located by linear interpolation on the finer trajectory grid.
    """
    if isinstance(seed, ApexSeed):
        if not np.isfinite(seed.sigma):
            raise ConfigError("seed does not lie on the curve")
        seed = (seed.sigma, seed.t)
    s0, t0 = float(seed[0]), float(seed[1])
    minus = integrate_characteristic(SpeedField(curve, 1.0), s0, t0, t0 + horizon, tol=tol)
    plus = integrate_characteristic(SpeedField(curve, 0.0), s0, t0, t0 + horizon, tol=tol)
    t = minus.t if len(minus.t) >= len(plus.t) else plus.t
    if t[-1] < t0 + horizon - 1e-12:
        t = plus.t if t is minus.t else minus.t
    lo, hi = _on_grid(minus, t), _on_grid(plus, t)
    cover = None
    if isinstance(curve.sigma_domain, CircleDomain):
        w = hi - lo - curve.sigma_domain.period
        idx = np.flatnonzero(np.isfinite(w) & (w >= 0))
        if idx.size:
            k = int(idx[0])
            if k == 0:
                cover = float(t[0])
            else:
                w0, w1 = w[k - 1], w[k]
                cover = float(t[k - 1] + (t[k] - t[k - 1]) * (-w0) / (w1 - w0))
    return AccessFan(curve, (s0, t0), t, lo, hi, cover, minus, plus)


@dataclass
class BoundaryCertificate:
    """A blended characteristic ``sigma_alpha`` from a seed to a target."""

    alpha: float
    trajectory: Trajectory
    target: tuple[float, float]
    residual: float
    max_speed: float

    def points(self) -> np.ndarray:
        curve = self.trajectory.field.curve
        return curve.position(self.trajectory.sigma, self.trajectory.t, check=False)


def _spacetime_speed(curve, sigma, t, alpha):
    _, xs, xt = curve.evaluate(sigma, t, check=False)
    lm, lp = lambda_pm(curve, sigma, t, check=False)
    rate = alpha * lm + (1.0 - alpha) * lp
    v = xs * rate[..., None] + xt
    return np.hypot(v[..., 0], v[..., 1])


def fan_certificate(fan: AccessFan, sigma: float, t: float, *, tol: float = 1e-8,
                    xtol: float = 1e-13) -> BoundaryCertificate:
    """Find ``alpha`` with ``sigma_alpha(t) = sigma`` by bracketing on ``[0, 1]``.

    Raises ``Inaccessible`` when ``(sigma, t)`` is outside the fan.
    """
    if not fan.contains(sigma, t):
        lo, hi = fan.interval(t) if fan.t[0] <= t <= fan.t[-1] else (math.nan, math.nan)
        raise Inaccessible("target is outside the access fan", sigma=sigma, t=t,
                           fan_lo=lo, fan_hi=hi, seed=list(fan.seed))
    curve = fan.curve
    s0, t0 = fan.seed
    lo, hi = fan.interval(t)
    target = sigma
    if isinstance(curve.sigma_domain, CircleDomain):
        P = curve.sigma_domain.period
        target = lo + ((sigma - lo) % P)
        if target >= hi:
            target = lo + 0.5 * (hi - lo)
            target = sigma + P * round((target - sigma) / P)

    def run(alpha):
        return integrate_characteristic(SpeedField(curve, alpha), s0, t0, t, tol=tol)

    def g(alpha):
        tr = run(alpha)
        if tr.termination != "HorizonReached":
            return -math.inf if tr.termination.endswith("(lo)") else math.inf
        return tr.sigma_end - target

    a = optimize.brentq(g, 0.0, 1.0, xtol=xtol) if g(0.0) * g(1.0) < 0 else \
        (0.0 if abs(g(0.0)) <= abs(g(1.0)) else 1.0)
    tr = run(a)
    speed = float(np.max(_spacetime_speed(curve, tr.sigma, tr.t, a)))
    return BoundaryCertificate(a, tr, (float(sigma), float(t)), abs(tr.sigma_end - target), speed)


# ---------------------------------------------------------------------------
# interior access paths


@dataclass
class PathSegment:
    """One piece of an access path: times ``t`` and positions ``x`` (k, 2)."""

    kind: str
    t: np.ndarray
    x: np.ndarray

    @property
    def max_speed(self) -> float:
        dt = np.diff(self.t)
        if dt.size == 0:
            return 0.0
        dx = np.hypot(*np.diff(self.x, axis=0).T)
        good = dt > 0
        return float(np.max(dx[good] / dt[good])) if good.any() else 0.0


@dataclass
class AccessPath:
    """Concatenated time-like path from the outer cylinder to a target point."""

    target: tuple[float, float, float]
    segments: list[PathSegment]
    sigma0: float
    splice_residual: float
    certificate: BoundaryCertificate | None = None

    @property
    def start(self) -> tuple[float, float, float]:
        s = self.segments[0]
        return float(s.x[0, 0]), float(s.x[0, 1]), float(s.t[0])

    @property
    def max_speed(self) -> float:
        return max(seg.max_speed for seg in self.segments)

    def rows(self) -> np.ndarray:
        out = []
        for k, seg in enumerate(self.segments):
            out.append(np.column_stack([np.full(len(seg.t), k), seg.t, seg.x]))
        return np.concatenate(out)

    def to_dict(self) -> dict:
        return {
            "target": list(self.target),
            "start": list(self.start),
            "segments": [{"kind": s.kind, "t0": float(s.t[0]), "t1": float(s.t[-1]),
                          "max_speed": s.max_speed} for s in self.segments],
            "sigma0": self.sigma0,
            "splice_residual": self.splice_residual,
            "max_speed": self.max_speed,
            "alpha": None if self.certificate is None else self.certificate.alpha,
        }


class _Geometry:
    """Signed distance to a closed moving curve via a dense polyline."""

    def __init__(self, curve: BoundaryCurve2D, n: int = 2048):
        self.curve = curve
        self.n = n
        self.s = curve.sigma_domain.period * np.arange(n) / n

    def closest(self, p, t):
        X = self.curve.position(self.s, np.full(self.n, t))
        d = np.hypot(X[:, 0] - p[0], X[:, 1] - p[1])
        k = int(np.argmin(d))
        h = self.s[1] - self.s[0]
        f = lambda u: float(np.hypot(*(self.curve.position(np.array(u), np.array(t)) - p)))  # noqa: E731
        res = optimize.minimize_scalar(f, bounds=(self.s[k] - h, self.s[k] + h), method="bounded",
                                       options={"xatol": 1e-13})
        return float(res.x), float(res.fun)

    def signed(self, p, t):
        _, d = self.closest(p, t)
        inside = bool(self.curve.contains(np.array(p[0]), np.array(p[1]), t))
        return -d if inside else d

    def min_over_time(self, p, n_t: int = 64):
        T = self.curve.time_period
        ts = T * np.arange(n_t) / n_t
        vals = np.array([self.signed(p, float(tt)) for tt in ts])
        k = int(np.argmin(vals))
        if np.ptp(vals) < 1e-13:
            return float(vals[k]), None
        h = T / n_t
        res = optimize.minimize_scalar(lambda u: self.signed(p, u), method="bounded",
                                       bounds=(ts[k] - h, ts[k] + h), options={"xatol": 1e-12})
        if res.fun < vals[k]:
            return float(res.fun), float(res.x)
        return float(vals[k]), float(ts[k])


def _radial_segment(rho, p, t_end, samples=33):
    r = float(np.hypot(*p))
    u = np.array([1.0, 0.0]) if r == 0 else np.asarray(p, dtype=float) / r
    start = rho * u
    length = rho - r
    s = np.linspace(0.0, 1.0, samples)
    xs = start[None, :] + s[:, None] * (np.asarray(p, dtype=float) - start)[None, :]
    ts = t_end - length + s * length
    return PathSegment("radial", ts, xs)


def interior_access_path(domain: ReachDomain, point, curve: BoundaryCurve2D | None = None, *,
                         fan_horizon: float | None = None, samples: int = 65,
                         tol: float = 1e-8) -> AccessPath:
    """Build a time-like path from the outer cylinder to ``(x0, t0)``.

    Follows the straight segment from ``x0`` to the nearest boundary point at
    ``t0``; ``sigma0`` is the first arc length at which the vertical line
    meets the moving boundary.  The path descends at speed 1/2 to that line,
    waits on it back to a boundary contact time ``t_n``, and from there
    follows a boundary certificate from an apex seed, itself fed by a radial
    ray from the cylinder.
    """
    x0 = np.asarray(point[:2], dtype=float)
    t0 = float(point[2])
    rho = domain.rho
    if not np.hypot(*x0) < rho:
        raise ConfigError("target must lie inside the cylinder")
    if not bool(domain.free(np.array(x0[0]), np.array(x0[1]), t0)):
        raise ConfigError("target lies inside the obstacle")
    curve = domain.curve if curve is None else curve
    if curve is None:
        out = AccessPath((float(x0[0]), float(x0[1]), t0),
                         [_radial_segment(rho, x0, t0, samples)], 0.0, 0.0)
        _verify_path(domain, out)
        return out
    if not curve.is_closed:
        raise ConfigError("interior_access_path needs a closed boundary curve")
    geo = _Geometry(curve)
    T = float(curve.time_period or 1.0)
    sb, dist = geo.closest(x0, t0)
    xb = curve.position(np.array(sb), np.array(t0))
    u = (xb - x0) / dist
    path = lambda s: x0 + s * u  # noqa: E731

    h0, t_hit0 = geo.min_over_time(x0)
    if h0 <= 0.0:
        sigma0 = 0.0
        # walk back along the vertical line to the last boundary contact
        step = T / 256
        tt = t0
        while geo.signed(x0, tt - step) > 0.0:
            tt -= step
            if tt < t0 - 2 * T:
                raise NumericalError("vertical line never meets the boundary")
        t_n = optimize.brentq(lambda v: geo.signed(x0, v), tt - step, tt, xtol=1e-13)
        p_star = x0.copy()
        descent = None
    else:
        n_s = 64
        grid = np.linspace(0.0, dist * (1.0 + 1e-6) + 1e-9, n_s + 1)
        vals = [h0]
        k_hit = None
        for k in range(1, n_s + 1):
            v, _ = geo.min_over_time(path(grid[k]))
            vals.append(v)
            if v <= 0.0:
                k_hit = k
                break
        if k_hit is None:
            raise NumericalError("no boundary contact along the chosen spatial path")
        sigma0 = optimize.brentq(lambda s: geo.min_over_time(path(s))[0], grid[k_hit - 1],
                                 grid[k_hit], xtol=1e-12)
        sigma0 = min(sigma0, dist)
        p_star = path(sigma0)
        _, t1 = geo.min_over_time(p_star)
        top = t0 - 2.0 * sigma0
        if t1 is None:
            t_n = top
        else:
            t_n = t1 + T * math.floor((top - t1) / T)
        ss = np.linspace(sigma0, 0.0, samples)
        descent = PathSegment("descent", t0 - 2.0 * ss, np.array([path(s) for s in ss]))
    s_star, resid = geo.closest(p_star, t_n)
    s_star = float(curve.sigma_domain.reduce(s_star))

    seeds = apex_seeds(curve)
    seed = seeds[0]
    if fan_horizon is None:
        fan_horizon = 8.0 * T
    fan = boundary_fan(curve, seed, fan_horizon, tol=tol)
    if fan.coverage_time is not None:
        m = math.floor((t_n - seed.t - fan.coverage_time) / T)
        shifts = [m]
    else:
        hi = math.floor((t_n - seed.t) / T)
        shifts = list(range(hi, hi - int(fan_horizon / T) - 1, -1))
    cert = None
    for m in shifts:
        tau = t_n - m * T
        if fan.contains(s_star, tau):
            cert = fan_certificate(fan, s_star, tau, tol=tol)
            break
    if cert is None:
        raise Inaccessible("no boundary certificate reaches the contact point", sigma=s_star,
                           t=t_n, seed=list(seed), coverage_time=fan.coverage_time)
    shift = m * T
    apex_x = np.array([seed.x1, seed.x2])
    segs = [_radial_segment(rho, apex_x, seed.t + shift, samples)]
    bt = cert.trajectory.t + shift
    bx = curve.position(cert.trajectory.sigma, cert.trajectory.t, check=False)
    segs.append(PathSegment("boundary", bt, bx))
    top = t0 - 2.0 * sigma0
    if top > t_n:
        segs.append(PathSegment("vertical", np.linspace(t_n, top, samples),
                                np.repeat(p_star[None, :], samples, axis=0)))
    if descent is not None:
        segs.append(descent)
    splice = max(resid, float(np.hypot(*(bx[-1] - p_star))))
    out = AccessPath((float(x0[0]), float(x0[1]), t0), segs, float(sigma0), splice, cert)
    _verify_path(domain, out)
    return out


def _verify_path(domain: ReachDomain, path: AccessPath, speed_tol: float = 1e-9) -> None:
    """Per-segment speed at most 1 and open segments inside the free region."""
    for seg in path.segments:
        if seg.max_speed > 1.0 + speed_tol:
            raise PropertyViolation("access path segment exceeds unit speed", kind=seg.kind,
                                    speed=seg.max_speed)
        if seg.kind in ("radial", "descent") and len(seg.t) > 2:
            x, t = seg.x[1:-1], seg.t[1:-1]
            ok = np.array([bool(domain.free(np.array(p[0]), np.array(p[1]), float(tt)))
                           for p, tt in zip(x, t)])
            if not ok.all():
                k = int(np.argmin(ok))
                raise PropertyViolation("access path leaves the free region", kind=seg.kind,
                                        x=x[k], t=float(t[k]))


# ---------------------------------------------------------------------------
# reports


@dataclass
class InaccessibleReport:
    """Boundary samples that the grid oracle never reached.

    ``samples`` holds every ``(sigma, t)`` checked after the burn-in;
    ``reached`` flags them.  ``unresolved`` marks samples with no free cell
    within the slack radius, which the lattice cannot represent at all.
    """

    sigma: np.ndarray
    t: np.ndarray
    reached: np.ndarray
    unresolved: np.ndarray
    burn_in: float
    slack: float
    reach: ReachSet | None = field(default=None, repr=False)

    @property
    def inaccessible(self) -> list[tuple[float, float]]:
        S, T = np.meshgrid(self.sigma, self.t, indexing="ij")
        bad = ~self.reached
        return list(zip(S[bad].tolist(), T[bad].tolist()))

    @property
    def never_reached_sigma(self) -> np.ndarray:
        """Sigma samples unreached at every sampled time."""
        return self.sigma[~self.reached.any(axis=1)]

    @property
    def empty(self) -> bool:
        return bool(self.reached.all())

    def rows(self) -> np.ndarray:
        S, T = np.meshgrid(self.sigma, self.t, indexing="ij")
        bad = ~self.reached
        return np.column_stack([S[bad], T[bad], self.unresolved[bad].astype(float)])

    def to_dict(self) -> dict:
        return {"n_sigma": int(self.sigma.size), "n_times": int(self.t.size),
                "n_inaccessible": int((~self.reached).sum()),
                "n_unresolved": int(self.unresolved.sum()),
                "never_reached_sigma": self.never_reached_sigma.tolist(),
                "burn_in": self.burn_in, "slack": self.slack, "empty": self.empty}


def _disk_offsets(radius_cells: float):
    r = int(math.ceil(radius_cells))
    di, dj = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1), indexing="ij")
    keep = np.hypot(di, dj) <= radius_cells
    return di[keep], dj[keep]


def inaccessible_report(domain: ReachDomain, t_range=(0.0, 4.0), dx: float | None = None,
                        dt: float | None = None, *, resolution: int | None = None,
                        n_sigma: int = 64, sample_every: int | None = None,
                        burn_in: float | None = None, slack: float = 3.0,
                        source="ring") -> InaccessibleReport:
    """Run the oracle and test boundary samples against nearby reached cells.

    A sample ``(sigma, t)`` counts as reached when some free cell within
    ``slack * dx`` of ``x(sigma, t)`` is reachable at that step.  Samples
    before ``t_start + burn_in`` (default ``2 rho``) are skipped because the
    front from the cylinder has not arrived yet.
    """
    curve = domain.curve
    if curve is None:
        raise ConfigError("domain has no boundary curve to sample")
    dom = curve.sigma_domain
    if isinstance(dom, CircleDomain):
        sig = dom.period * np.arange(n_sigma) / n_sigma
    else:
        sig = np.linspace(dom.lo, dom.hi, n_sigma)
    t0, t1 = map(float, t_range)
    burn = 2.0 * domain.rho if burn_in is None else float(burn_in)
    if t0 + burn >= t1:
        raise ConfigError("burn-in leaves no sampled times")
    records_t, records_r, records_u = [], [], []
    state = {}

    def observer(step, t, alive):
        if t < t0 + burn - 1e-12:
            return
        if "offs" not in state:
            d = state["dx"]
            state["offs"] = _disk_offsets(slack)
            state["n"] = alive.shape[0]
        n = state["n"]
        di, dj = state["offs"]
        X = curve.position(sig, np.full(sig.size, t), check=False)
        ci = np.floor((X[:, 0] + domain.rho) / state["dx"]).astype(int)
        cj = np.floor((X[:, 1] + domain.rho) / state["dx"]).astype(int)
        I = np.clip(ci[:, None] + di[None, :], 0, n - 1)
        J = np.clip(cj[:, None] + dj[None, :], 0, n - 1)
        xc = state["x"]
        near = np.hypot(xc[I] - X[:, 0:1], xc[J] - X[:, 1:2]) <= slack * state["dx"]
        free = domain.free(xc[I], xc[J], t) & (np.hypot(xc[I], xc[J]) <= domain.rho) & near
        hit = (alive[I, J] != 0) & free
        records_t.append(t)
        records_r.append(hit.any(axis=1))
        records_u.append(~free.any(axis=1))

    n, dxv, x = _lattice(domain.rho, dx, resolution)
    state["dx"], state["x"] = dxv, x
    if dt is None:
        dtv = 0.5 * dxv
        if domain.period:
            dtv = domain.period / math.ceil(domain.period / dtv - 1e-9)
    else:
        dtv = dt
    if sample_every is None:
        sample_every = max(1, int(round((domain.period or 0.25) / 16.0 / dtv)))
    reach = reach_forward(domain, source, (t0, t1), dxv, dtv, max_snapshots=8,
                          observer=observer, observe_every=sample_every)
    return InaccessibleReport(sig, np.array(records_t), np.array(records_r).T,
                              np.array(records_u).T, burn, slack, reach)


def channel_mouth_check(dom: StefanovChannelDomain, horizon: float = 100.0,
                        resolution: int = 400, dt: float | None = None,
                        t_start: float = 0.0, keep_reach: bool = False):
    """Run the oracle on the channel domain and test the left mouth cells.

    Returns a summary dictionary, or ``(summary, reach)`` with ``keep_reach``.
    """
    reach = reach_forward(dom, "ring", (t_start, t_start + horizon), resolution=resolution,
                          dt=dt, max_snapshots=16)
    X1, X2 = reach.mesh()
    mouth = dom.mouth_mask(X1, X2, reach.dx)
    mouth_free = mouth & ~reach.obstacle[0] & reach.inside
    reached = bool((reach.ever_reached & mouth).any())
    fa = reach.first_arrival[mouth]
    info = {
        "mouth_reached": reached,
        "mouth_cells": int(mouth.sum()),
        "free_mouth_cells": int(mouth_free.sum()),
        "earliest_mouth_arrival": float(fa.min()) if fa.size else math.inf,
        "reached_cells_total": int(reach.ever_reached.sum()),
        "channel_resolved": bool(dom.eps >= reach.dx),
        "resolution": int(reach.x.size),
        "dx": reach.dx,
        "dt": reach.dt,
        "horizon": horizon,
    }
    return (info, reach) if keep_reach else info
