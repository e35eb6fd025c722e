"""Static SVG figures for the command line artifacts.

Every figure is written through :func:`save_svg`, which fixes the SVG hash
salt and drops the creation date so that identical inputs produce
byte-identical files.  Raster content (heatmaps) is embedded inline, so the
files carry no external references.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = [
    "save_svg",
    "lambda_heatmaps",
    "margin_heatmap",
    "trajectory_plot",
    "fan_plot",
    "sections_plot",
    "first_arrival_map",
    "channel_schematic",
    "flow_plot",
]

SVG_SALT = "moving-obstacles"
MAX_LINE_POINTS = 4000


def _thin(*arrays, limit: int = MAX_LINE_POINTS):
    n = len(arrays[0])
    step = max(1, int(math.ceil(n / limit)))
    out = [np.asarray(a)[::step] for a in arrays]
    if (n - 1) % step:
        out = [np.append(o, np.asarray(a)[-1]) for o, a in zip(out, arrays)]
    return out


def save_svg(fig, path) -> Path:
    """Write ``fig`` as a deterministic SVG and close it."""
    path = Path(path)
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _heat(ax, S, T, Z, title, cmap="viridis"):
    extent = (float(T.min()), float(T.max()), float(S.min()), float(S.max()))
    im = ax.imshow(Z, origin="lower", aspect="auto", extent=extent, cmap=cmap,
                   interpolation="nearest")
    ax.set_xlabel("t")
    ax.set_ylabel("sigma")
    ax.set_title(title)
    return im


def lambda_heatmaps(S, T, lm, lp, path):
    """Side-by-side ``(sigma, t)`` heatmaps of both characteristic speeds."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.8), constrained_layout=True)
    for ax, Z, name in zip(axes, (lm, lp), ("Lambda_-", "Lambda_+")):
        im = _heat(ax, S, T, Z, name, cmap="coolwarm")
        fig.colorbar(im, ax=ax)
    return save_svg(fig, path)


def margin_heatmap(S, T, m, path):
    """Time-like margin over the validation grid."""
    fig, ax = plt.subplots(figsize=(5, 4), constrained_layout=True)
    im = _heat(ax, S, T, m, "time-like margin m(sigma, t)")
    fig.colorbar(im, ax=ax)
    return save_svg(fig, path)


def trajectory_plot(trajectories, path, labels=None, hlines=(), title="characteristics"):
    """``sigma(t)`` for each trajectory, with optional horizontal guide lines."""
    fig, ax = plt.subplots(figsize=(6, 4), constrained_layout=True)
    for k, tr in enumerate(trajectories):
        t, s = _thin(tr.t, tr.sigma)
        ax.plot(t, s, lw=1.0, label=labels[k] if labels else None)
    for y in hlines:
        ax.axhline(y, color="0.4", lw=0.8, ls="--")
    ax.set_xlabel("t")
    ax.set_ylabel("sigma")
    ax.set_title(title)
    if labels:
        ax.legend(fontsize=7)
    return save_svg(fig, path)


def fan_plot(fan, path, coverage_bound=None):
    """Fan envelopes ``sigma_-(t)`` and ``sigma_+(t)`` from the seed."""
    fig, ax = plt.subplots(figsize=(6, 4), constrained_layout=True)
    t, lo, hi = _thin(fan.t, fan.sigma_minus, fan.sigma_plus)
    ax.fill_between(t, lo, hi, color="tab:blue", alpha=0.2, lw=0)
    ax.plot(t, lo, color="tab:blue", lw=1.0, label="sigma_-")
    ax.plot(t, hi, color="tab:red", lw=1.0, label="sigma_+")
    if fan.coverage_time is not None:
        ax.axvline(fan.coverage_time, color="k", lw=0.8, ls=":", label="coverage")
    if coverage_bound is not None and np.isfinite(coverage_bound):
        ax.axvline(coverage_bound, color="0.5", lw=0.8, ls="--", label="coverage bound")
    ax.set_xlabel("t")
    ax.set_ylabel("sigma (unwrapped)")
    ax.set_title(f"accessibility fan from sigma={fan.seed[0]:.4g}, t={fan.seed[1]:.4g}")
    ax.legend(fontsize=7)
    return save_svg(fig, path)


def sections_plot(section_lists, labels, path):
    """Poincare sections ``sigma_n`` against the period index."""
    fig, ax = plt.subplots(figsize=(6, 4), constrained_layout=True)
    for secs, lab in zip(section_lists, labels):
        ax.plot(np.arange(len(secs)), secs, ".", ms=2, label=lab)
    ax.set_xlabel("period n")
    ax.set_ylabel("sigma_n")
    ax.set_title("Poincare sections")
    ax.legend(fontsize=7)
    return save_svg(fig, path)


def first_arrival_map(reach, path, title="first arrival time"):
    """Heatmap of first-arrival times; never-reached free cells are drawn black."""
    fa = np.array(reach.first_arrival, dtype=float)
    free = reach.inside & ~reach.obstacle[-1]
    img = np.where(np.isfinite(fa), fa, np.nan)
    fig, ax = plt.subplots(figsize=(5.5, 5), constrained_layout=True)
    ext = (-reach.rho, reach.rho, -reach.rho, reach.rho)
    never = np.where(free & ~reach.ever_reached, 1.0, np.nan)
    ax.imshow(never.T, origin="lower", extent=ext, cmap="gray_r", vmin=0, vmax=1,
              interpolation="nearest")
    im = ax.imshow(img.T, origin="lower", extent=ext, cmap="magma", interpolation="nearest")
    fig.colorbar(im, ax=ax, label="t")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title(title)
    return save_svg(fig, path)


def channel_schematic(wall, eps, envelope, slope, path, t0=0.0, reach=None):
    """Wall, channel strip and the ``sigma_-`` envelope against the drift bound.

    ``envelope`` is a trajectory of ``sigma_-``; ``slope`` is the predicted
    mean drift ``(1 - 1/H0)/2``.  When ``reach`` is given a third panel shows
    the first-arrival map of the assembled domain.
    """
    ncols = 3 if reach is not None else 2
    fig, axes = plt.subplots(1, ncols, figsize=(4.6 * ncols, 4), constrained_layout=True)
    p = wall.params
    x1 = np.linspace(-(p.M + p.L), p.M + p.L, 2001)
    y = wall.graph(x1, t0)[0]
    ax = axes[0]
    ax.plot(x1, y, color="k", lw=1.0, label="wall at t=%g" % t0)
    ax.fill_between(x1, y - eps, y, color="tab:orange", alpha=0.8, lw=0,
                    label=f"channel (eps={eps:.3g})")
    for s in (-p.M, p.M):
        ax.axvline(s, color="0.5", ls=":", lw=0.8)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title("wall and channel")
    ax.legend(fontsize=7, loc="lower left")
    ax = axes[1]
    t, s = _thin(envelope.t, envelope.sigma)
    ax.plot(t, s, lw=1.0, label="sigma_-(t)")
    s0 = float(envelope.sigma[0])
    ax.plot(t, s0 + slope * (t - t[0]), "--", color="tab:red", lw=0.9,
            label=f"drift slope {slope:.4f}")
    ax.axhline(-p.M, color="0.4", lw=0.8, ls=":", label="sigma = -M")
    ax.set_xlabel("t")
    ax.set_ylabel("sigma")
    ax.set_title("leftmost characteristic")
    ax.legend(fontsize=7)
    if reach is not None:
        fa = np.where(np.isfinite(reach.first_arrival), reach.first_arrival, np.nan)
        ext = (-reach.rho, reach.rho, -reach.rho, reach.rho)
        im = axes[2].imshow(fa.T, origin="lower", extent=ext, cmap="magma",
                            interpolation="nearest")
        fig.colorbar(im, ax=axes[2], label="first arrival")
        axes[2].set_title("grid reachability")
        axes[2].set_xlabel("x1")
        axes[2].set_ylabel("x2")
    return save_svg(fig, path)


def flow_plot(flow, path):
    """Flow lines of the sampled seeds."""
    fig, ax = plt.subplots(figsize=(5, 5), constrained_layout=True)
    for k in range(flow.seeds.shape[0]):
        x, y = _thin(flow.F[:, k, 0], flow.F[:, k, 1])
        ax.plot(x, y, lw=0.8)
        ax.plot(flow.seeds[k, 0], flow.seeds[k, 1], "k.", ms=3)
    ax.set_aspect("equal")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title(f"flow of {flow.field.name}")
    return save_svg(fig, path)
