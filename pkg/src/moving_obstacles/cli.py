"""Batch command line front end.

Usage::

    moving-obstacles <command> --config file.json --out DIR [--resolution N] [--horizon T]

Commands: ``validate``, ``speeds``, ``geodesic``, ``orbits``, ``access``,
``reach``, ``stefanov`` and ``cone``.  Each reads one JSON config, writes
JSON reports, CSV tables and SVG figures into ``DIR`` and finishes with
``manifest.json`` listing every produced file with its SHA-256.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 property violation.  The only environment variable consulted is
``MOVING_OBSTACLES_THREADS`` (worker threads for independent items such as
several characteristics in one config; results are always collected in
input order).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import platform
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .errors import ConfigError, MovingObstacleError, NumericalError, PropertyViolation

__all__ = [
    "COMMANDS",
    "ENV_THREADS",
    "ExperimentConfig",
    "ArtifactWriter",
    "load_config",
    "run",
    "main",
]

ENV_THREADS = "MOVING_OBSTACLES_THREADS"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PROPERTY = 0, 2, 3, 4
COMMANDS = ("validate", "speeds", "geodesic", "orbits", "access", "reach", "stefanov", "cone")


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """A parsed config file plus command-line overrides.

    ``text`` is kept so that errors can point at the offending line and the
    manifest can hash the exact input bytes.
    """

    command: str
    body: dict
    text: str
    path: str
    resolution: int | None = None
    horizon: float | None = None
    threads: int = 1

    def locate(self, key: str, after: str | None = None) -> tuple[int, int]:
        """1-based ``(line, column)`` of ``"key":``, searching after ``"after":`` if given."""
        start = 0
        if after is not None:
            m = re.search(r'"%s"\s*:' % re.escape(after), self.text)
            if m:
                start = m.start()
        m = re.compile(r'"%s"\s*:' % re.escape(key)).search(self.text, start)
        if m is None:
            m = re.compile(r'"%s"' % re.escape(key)).search(self.text, start)
        if m is None:
            return 1, 1
        line = self.text.count("\n", 0, m.start()) + 1
        col = m.start() - (self.text.rfind("\n", 0, m.start()) + 1) + 1
        return line, col

    def anchor(self, exc: ConfigError, block: str | None = None) -> str:
        """Prefix the error message with ``path:line:col``."""
        key = exc.payload.get("key")
        if key is None and exc.payload.get("keys"):
            key = exc.payload["keys"][0]
        if key is not None:
            line, col = self.locate(str(key), after=block)
        elif block is not None:
            line, col = self.locate(block)
        else:
            line, col = 1, 1
        return f"{self.path}:{line}:{col}: {exc}"

    @property
    def input_hash(self) -> str:
        h = hashlib.sha256(self.text.encode())
        h.update(json.dumps({"resolution": self.resolution, "horizon": self.horizon},
                            sort_keys=True).encode())
        return h.hexdigest()


class _AnchoredConfigError(ConfigError):
    """A config error whose message already carries its location."""


def load_config(path, command: str, *, resolution=None, horizon=None,
                threads: int = 1) -> ExperimentConfig:
    """Read and minimally validate a config file for ``command``."""
    path = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise _AnchoredConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise _AnchoredConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}"
                                   ) from None
    cfg = ExperimentConfig(command, {}, text, path, resolution, horizon, threads)
    if not isinstance(data, dict):
        raise _AnchoredConfigError(f"{path}:1:1: config must be a JSON object")
    body = dict(data)
    declared = body.pop("command", command)
    if declared != command:
        line, col = cfg.locate("command")
        raise _AnchoredConfigError(
            f"{path}:{line}:{col}: config is for {declared!r}, not {command!r}")
    body.pop("description", None)
    cfg.body = body
    return cfg


class Knobs:
    """Typed access to a config block; unconsumed keys are rejected by ``finish``."""

    def __init__(self, cfg: ExperimentConfig, block: dict, name: str | None = None):
        if not isinstance(block, dict):
            raise _AnchoredConfigError(cfg.anchor(
                ConfigError(f"block {name!r} must be a JSON object"), name))
        self.cfg = cfg
        self.block = block
        self.name = name
        self.used: set[str] = set()

    def _fail(self, key: str, msg: str):
        raise _AnchoredConfigError(self.cfg.anchor(ConfigError(msg, key=key), self.name))

    def has(self, key: str) -> bool:
        return key in self.block

    def raw(self, key: str, default: Any = None, *, required: bool = False):
        self.used.add(key)
        if key not in self.block:
            if required:
                raise _AnchoredConfigError(self.cfg.anchor(
                    ConfigError(f"missing required key {key!r}"), self.name))
            return default
        return self.block[key]

    def number(self, key: str, default=None, *, lo=None, hi=None, integer: bool = False,
               required: bool = False, open_lo: bool = False):
        val = self.raw(key, default, required=required)
        if val is None:
            return None
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self._fail(key, f"{key} must be a number")
        if integer:
            if int(val) != val:
                self._fail(key, f"{key} must be an integer")
            val = int(val)
        else:
            val = float(val)
            if not math.isfinite(val):
                self._fail(key, f"{key} must be finite")
        if lo is not None and (val < lo or (open_lo and val == lo)):
            self._fail(key, f"{key}={val} is below the allowed minimum {lo}")
        if hi is not None and val > hi:
            self._fail(key, f"{key}={val} exceeds the allowed maximum {hi}")
        return val

    def flag(self, key: str, default: bool) -> bool:
        val = self.raw(key, default)
        if not isinstance(val, bool):
            self._fail(key, f"{key} must be true or false")
        return val

    def vector(self, key: str, default=None, *, length: int | None = None, required=False):
        val = self.raw(key, default, required=required)
        if val is None:
            return None
        try:
            arr = np.asarray(val, dtype=float)
        except (TypeError, ValueError):
            self._fail(key, f"{key} must be a numeric array")
        if length is not None and arr.shape != (length,):
            self._fail(key, f"{key} must have {length} entries")
        if not np.all(np.isfinite(arr)):
            self._fail(key, f"{key} must be finite")
        return arr

    def sub(self, key: str, default=None, *, required: bool = False) -> "Knobs | None":
        val = self.raw(key, default, required=required)
        if val is None:
            return None
        return Knobs(self.cfg, val, key)

    def items(self, key: str, *, required: bool = False) -> list["Knobs"]:
        val = self.raw(key, [], required=required)
        if not isinstance(val, list):
            self._fail(key, f"{key} must be a list")
        return [Knobs(self.cfg, v, key) for v in val]

    def finish(self) -> None:
        extra = sorted(set(self.block) - self.used)
        if extra:
            where = f" in {self.name!r}" if self.name else ""
            self._fail(extra[0], f"unknown key{'s' if len(extra) > 1 else ''}{where}: "
                                 f"{', '.join(extra)}")


def _build(cfg: ExperimentConfig, block: str, fn: Callable, *args):
    """Call a library builder and anchor any config error at ``block``."""
    try:
        return fn(*args)
    except _AnchoredConfigError:
        raise
    except ConfigError as exc:
        raise _AnchoredConfigError(cfg.anchor(exc, block)) from None


# ---------------------------------------------------------------------------
# artifacts


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as ``null``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class ArtifactWriter:
    """Writes artifacts into one directory and remembers them for the manifest."""

    def __init__(self, out_dir):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        if name not in self.files:
            self.files.append(name)
        return self.out / name

    def json(self, name: str, obj) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")
        return p

    def csv(self, name: str, header, rows) -> Path:
        p = self.path(name)
        rows = np.asarray(rows, dtype=float)
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in np.atleast_2d(rows) if rows.size else []:
                w.writerow([repr(float(v)) for v in r])
        return p

    def svg(self, name: str, fn: Callable, *args, **kwargs) -> Path:
        p = self.path(name)
        fn(*args, p, **kwargs)
        return p

    def reach(self, name: str, reach) -> Path:
        p = self.path(name)
        reach.save(p)
        return p

    def manifest(self, cfg: ExperimentConfig, status: str, exit_code: int) -> Path:
        import matplotlib
        import scipy

        try:
            import numba

            numba_version = numba.__version__
        except ImportError:  # pragma: no cover
            numba_version = None
        files = [{"name": n, "sha256": _sha256(self.out / n),
                  "bytes": (self.out / n).stat().st_size} for n in self.files]
        body = {
            "tool": "moving-obstacles",
            "command": cfg.command,
            "config": {"name": Path(cfg.path).name, "sha256": cfg.input_hash},
            "overrides": {"resolution": cfg.resolution, "horizon": cfg.horizon},
            "versions": {"package": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__,
                         "matplotlib": matplotlib.__version__, "numba": numba_version},
            "status": status,
            "exit_code": exit_code,
            "files": files,
        }
        p = self.out / "manifest.json"
        p.write_text(json.dumps(_clean(body), indent=2, sort_keys=True) + "\n")
        return p


def _map_ordered(cfg: ExperimentConfig, fn: Callable, items: list) -> list:
    """Apply ``fn`` to ``items``, possibly concurrently, returning results in order."""
    if cfg.threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# commands


def _curve(cfg: ExperimentConfig, k: Knobs, key: str = "curve"):
    from .boundary import curve_from_config

    block = k.raw(key, required=True)
    return _build(cfg, key, curve_from_config, block)


def cmd_validate(cfg: ExperimentConfig, w: ArtifactWriter) -> dict:
    from . import plots
    from .boundary import periodicity_residual, sample_grid, uniform_constants, validation_report

    k = Knobs(cfg, cfg.body)
    curve = _curve(cfg, k)
    grid = k.number("grid_resolution", 512, lo=64, hi=4096, integer=True)
    grid = cfg.resolution or grid
    report_res = k.number("report_resolution", 64, lo=4, hi=1024, integer=True)
    k.finish()
    rep = validation_report(curve, report_res)
    w.csv("validation.csv", ["sigma", "t", "m", "normal_speed"],
          np.column_stack([rep["sigma"], rep["t"], rep["m"], rep["normal_speed"]]))
    S, T = sample_grid(curve, report_res)
    w.svg("timelike_margin.svg", plots.margin_heatmap, S, T, rep["m"].reshape(S.shape))
    summary = {"curve": curve.describe(), "grid_resolution": grid,
               "min_margin_report_grid": float(rep["m"].min()),
               "max_normal_speed_report_grid": float(rep["normal_speed"].max()),
               "periodicity_residual": periodicity_residual(curve)}
    try:
        const = uniform_constants(curve, grid)
    except PropertyViolation as exc:
        summary["rejected"] = exc.to_dict()
        w.json("validate.json", summary)
        raise
    summary.update(delta_nd=const.delta_nd, delta_tl=const.delta_tl, accepted=True)
    w.json("validate.json", summary)
    return summary


def cmd_speeds(cfg: ExperimentConfig, w: ArtifactWriter) -> dict:
    from . import plots
    from .boundary import sample_grid
    from .characteristics import fan_criterion, lambda_pm

    k = Knobs(cfg, cfg.body)
    curve = _curve(cfg, k)
    grid = k.number("grid_resolution", 512, lo=64, hi=4096, integer=True)
    grid = cfg.resolution or grid
    csv_res = k.number("csv_resolution", 64, lo=4, hi=1024, integer=True)
    k.finish()
    S, T = sample_grid(curve, csv_res)
    lm, lp = lambda_pm(curve, S, T)
    w.csv("speeds.csv", ["sigma", "t", "lambda_minus", "lambda_plus"],
          np.column_stack([S.ravel(), T.ravel(), lm.ravel(), lp.ravel()]))
    w.svg("speeds.svg", plots.lambda_heatmaps, S, T, lm, lp)
    fc = fan_criterion(curve, grid)
    out = {"curve": curve.describe(), "grid_resolution": grid, **fc._asdict()}
    if fc.satisfied and curve.is_closed and curve.time_period:
        out["coverage_time_bound"] = (curve.sigma_domain.period / fc.margin
                                      + 2.0 * curve.time_period)
    w.json("fan_criterion.json", out)
    return out


def cmd_geodesic(cfg: ExperimentConfig, w: ArtifactWriter) -> dict:
    from . import plots
    from .characteristics import SpeedField, integrate_characteristic

    k = Knobs(cfg, cfg.body)
    curve = _curve(cfg, k)
    tol = k.number("tol", 1e-8, lo=1e-13, hi=1e-3, open_lo=False)
    specs = []
    for item in k.items("characteristics", required=True):
        s0 = item.number("sigma0", required=True)
        t0 = item.number("t0", 0.0)
        if cfg.horizon is not None:
            item.raw("t_end")
            t_end = t0 + cfg.horizon
        else:
            t_end = item.number("t_end", required=True)
        alpha = item.number("alpha", 0.0, lo=0.0, hi=1.0)
        item.finish()
        specs.append((s0, t0, t_end, alpha))
    if not specs:
        raise _AnchoredConfigError(cfg.anchor(ConfigError("no characteristics given",
                                                          key="characteristics")))
    k.finish()

    def one(spec):
        s0, t0, t_end, alpha = spec
        return integrate_characteristic(SpeedField(curve, alpha), s0, t0, t_end, tol=tol)

    trajs = _map_ordered(cfg, one, specs)
    summary = []
    for i, (spec, tr) in enumerate(zip(specs, trajs)):
        w.csv(f"geodesic_{i:02d}.csv", ["t", "sigma", "lambda_minus", "lambda_plus"], tr.rows())
        summary.append({"sigma0": spec[0], "t0": spec[1], "t_end": spec[2], "alpha": spec[3],
                        "sigma_end": tr.sigma_end, "t_last": float(tr.t[-1]),
                        "winding": tr.winding, "termination": tr.termination,
                        "samples": int(tr.t.size), "ode_difference": tr.ode_difference})
    w.svg("geodesics.svg", plots.trajectory_plot, trajs,
          labels=[f"alpha={s[3]:g}, sigma0={s[0]:g}" for s in specs])
    out = {"curve": curve.describe(), "tol": tol, "characteristics": summary}
    w.json("geodesics.json", out)
    return out


def cmd_orbits(cfg: ExperimentConfig, w: ArtifactWriter) -> dict:
    from . import plots
    from .characteristics import SpeedField, classify_orbit

    k = Knobs(cfg, cfg.body)
    curve = _curve(cfg, k)
    if not curve.time_period:
        raise _AnchoredConfigError(cfg.anchor(ConfigError("orbits need a time-periodic curve",
                                                          key="curve")))
    N = k.number("horizon_periods", 200, lo=50, hi=100000, integer=True)
    if cfg.horizon is not None:
        N = int(round(cfg.horizon / curve.time_period))
        if N < 50:
            raise _AnchoredConfigError(f"--horizon gives {N} periods; at least 50 are needed")
    tol_orbit = k.number("tol_orbit", 1e-6, lo=1e-12, hi=1e-2)
    spp = k.number("steps_per_period", 64, lo=8, hi=4096, integer=True)
    tail = k.number("tail", 10, lo=3, hi=1000, integer=True)
    specs = []
    for item in k.items("orbits", required=True):
        specs.append((item.number("sigma0", required=True), item.number("t0", 0.0),
                      item.number("alpha", 0.0, lo=0.0, hi=1.0)))
        item.finish()
    if not specs:
        raise _AnchoredConfigError(cfg.anchor(ConfigError("no orbits given", key="orbits")))
    k.finish()

    def one(spec):
        s0, t0, alpha = spec
        return classify_orbit(SpeedField(curve, alpha), s0, t0, N, tol_orbit=tol_orbit,
                              steps_per_period=spp, tail=tail)

    results = _map_ordered(cfg, one, specs)
    records = []
    for i, (spec, oc) in enumerate(zip(specs, results)):
        n = np.arange(oc.sections.size)
        w.csv(f"sections_{i:02d}.csv", ["n", "sigma_n"], np.column_stack([n, oc.sections]))
        records.append({"sigma0": spec[0], "t0": spec[1], "alpha": spec[2], **oc.to_dict()})
    w.svg("sections.svg", plots.sections_plot, [oc.sections for oc in results],
          [f"sigma0={s[0]:g}, alpha={s[2]:g}" for s in specs])
    out = {"curve": curve.describe(), "horizon_periods": N, "orbits": records}
    w.json("orbits.json", out)
    return out


def cmd_access(cfg: ExperimentConfig, w: ArtifactWriter) -> dict:
    from . import plots
    from .accessibility import (CurveObstacleDomain, apex_seeds, boundary_fan, fan_certificate,
                                inaccessible_report, interior_access_path)
    from .characteristics import fan_criterion
    from .errors import Inaccessible

    k = Knobs(cfg, cfg.body)
    curve = _curve(cfg, k)
    if not curve.time_period:
        raise _AnchoredConfigError(cfg.anchor(ConfigError("access needs a time-periodic curve",
                                                          key="curve")))
    T = float(curve.time_period)
    horizon = k.number("horizon", 8.0 * T, lo=0.0, open_lo=True)
    horizon = cfg.horizon if cfg.horizon is not None else horizon
    seed_index = k.number("seed_index", 0, lo=0, integer=True)
    rho = k.number("rho", 2.0, lo=0.0, open_lo=True)
    certs = k.raw("certificates", [])
    points = k.raw("points", [])
    for name, val, n in (("certificates", certs, 2), ("points", points, 3)):
        if not isinstance(val, list) or any(
                not isinstance(p, list) or len(p) != n for p in val):
            raise _AnchoredConfigError(cfg.anchor(
                ConfigError(f"{name} must be a list of {n}-element lists", key=name)))
    rep = k.sub("report")
    rep_opts = None
    if rep is not None:
        rep_opts = {
            "t_range": tuple(rep.vector("t_range", [0.0, 4.0 * T], length=2)),
            "resolution": cfg.resolution or rep.number("resolution", 150, lo=16, hi=2000,
                                                       integer=True),
            "n_sigma": rep.number("n_sigma", 64, lo=4, hi=4096, integer=True),
            "slack": rep.number("slack", 3.0, lo=0.0, open_lo=True),
            "burn_in": rep.number("burn_in", None, lo=0.0),
        }
        rep.finish()
    k.finish()
    if (points or rep_opts) and not curve.is_closed:
        raise _AnchoredConfigError(cfg.anchor(ConfigError(
            "interior paths and reports need a closed curve", key="curve")))
    seeds = _build(cfg, "curve", apex_seeds, curve)
    if seed_index >= len(seeds):
        raise _AnchoredConfigError(cfg.anchor(ConfigError("seed_index out of range",
                                                          key="seed_index")))
    seed = seeds[seed_index]
    w.json("apex_seeds.json", [s._asdict() for s in seeds])
    fan = boundary_fan(curve, seed, horizon)
    fc = fan_criterion(curve)
    bound = None
    if fc.satisfied and curve.is_closed:
        bound = curve.sigma_domain.period / fc.margin + 2.0 * T
    w.csv("fan.csv", ["t", "sigma_minus", "sigma_plus"], fan.rows())
    w.svg("fan.svg", plots.fan_plot, fan, coverage_bound=bound)
    out = {"curve": curve.describe(), "seed": seed._asdict(), "fan": fan.to_dict(),
           "fan_criterion": fc._asdict(), "coverage_time_bound": bound}
    cert_out = []
    for s, t in certs:
        try:
            c = fan_certificate(fan, float(s), float(t))
            cert_out.append({"sigma": s, "t": t, "alpha": c.alpha, "residual": c.residual,
                             "max_speed": c.max_speed, "accessible": True})
        except Inaccessible as exc:
            cert_out.append({"sigma": s, "t": t, "accessible": False, "error": exc.to_dict()})
    out["certificates"] = cert_out
    if points:
        dom = CurveObstacleDomain(curve, rho)

        def one(p):
            try:
                return interior_access_path(dom, p, curve)
            except Inaccessible as exc:
                return exc

        paths = _map_ordered(cfg, one, [tuple(map(float, p)) for p in points])
        recs = []
        for i, (p, path) in enumerate(zip(points, paths)):
            if isinstance(path, Exception):
                recs.append({"target": p, "accessible": False, "error": path.to_dict()})
                continue
            w.csv(f"path_{i:02d}.csv", ["segment", "t", "x1", "x2"], path.rows())
            recs.append({"accessible": True, **path.to_dict()})
        out["paths"] = recs
    if rep_opts is not None:
        dom = CurveObstacleDomain(curve, rho)
        r = inaccessible_report(dom, rep_opts["t_range"], resolution=rep_opts["resolution"],
                                n_sigma=rep_opts["n_sigma"], slack=rep_opts["slack"],
                                burn_in=rep_opts["burn_in"])
        w.csv("inaccessible.csv", ["sigma", "t", "unresolved"], r.rows())
        w.svg("first_arrival.svg", plots.first_arrival_map, r.reach)
        out["report"] = r.to_dict()
    w.json("access.json", out)
    return out


def _reference_error(domain, source, reach):
    """Max first-arrival error against closed forms, where one exists."""
    from .accessibility import DiskDomain, EmptyDomain, disk_geodesic_distance

    X1, X2 = reach.mesh()
    fa = reach.first_arrival
    if isinstance(domain, EmptyDomain) and source == "ring":
        exact = reach.t_start + domain.rho - np.hypot(X1, X2)
        mask = reach.inside & (exact <= reach.t_end)
        label, tol = "rho - |x|", 2.0
    elif (isinstance(domain, DiskDomain) and isinstance(source, (list, dict))):
        pts = np.atleast_2d(np.asarray(source["points"] if isinstance(source, dict) else source,
                                       float))
        if pts.shape[0] != 1:
            return None
        t_src = float(source.get("time", reach.t_start)) if isinstance(source, dict) \
            else reach.t_start
        P = np.column_stack([X1.ravel(), X2.ravel()])
        exact = t_src + disk_geodesic_distance(P, pts[0], domain.radius,
                                               domain.center).reshape(X1.shape)
        mask = reach.inside & ~reach.obstacle[0] & (exact <= reach.t_end - 2 * reach.dx)
        label, tol = "wrap-around geodesic", 3.0
    else:
        return None
    if not mask.any():
        return None
    err = np.abs(np.where(np.isfinite(fa), fa, np.inf) - exact)[mask]
    worst = float(err.max())
    return {"reference": label, "max_error": worst, "max_error_over_dx": worst / reach.dx,
            "tolerance_over_dx": tol, "ok": bool(worst <= tol * reach.dx)}


def cmd_reach(cfg: ExperimentConfig, w: ArtifactWriter) -> dict:
    from . import plots
    from .accessibility import domain_from_config, inaccessible_report, reach_forward

    k = Knobs(cfg, cfg.body)
    dblock = k.raw("domain", required=True)
    if not isinstance(dblock, dict):
        raise _AnchoredConfigError(cfg.anchor(ConfigError("domain must be an object",
                                                          key="domain")))
    domain = _build(cfg, "domain", domain_from_config, dblock)
    source = k.raw("source", "ring")
    t_range = k.vector("t_range", [0.0, 2.0], length=2)
    if cfg.horizon is not None:
        t_range = np.array([t_range[0], t_range[0] + cfg.horizon])
    resolution = k.number("resolution", 200, lo=16, hi=2000, integer=True)
    resolution = cfg.resolution or resolution
    dt = k.number("dt", None, lo=0.0, open_lo=True)
    snaps = k.number("max_snapshots", 16, lo=1, hi=4096, integer=True)
    check_ref = k.flag("reference", True)
    rep = k.sub("inaccessible")
    rep_opts = None
    if rep is not None:
        rep_opts = {"n_sigma": rep.number("n_sigma", 64, lo=4, hi=4096, integer=True),
                    "slack": rep.number("slack", 3.0, lo=0.0, open_lo=True),
                    "burn_in": rep.number("burn_in", None, lo=0.0)}
        rep.finish()
    k.finish()
    out: dict = {"domain": domain.describe()}
    if rep_opts is not None:
        r = _build(cfg, "inaccessible", lambda: inaccessible_report(
            domain, tuple(t_range), dt=dt, resolution=resolution, source=source, **rep_opts))
        reach = r.reach
        w.csv("inaccessible.csv", ["sigma", "t", "unresolved"], r.rows())
        out["inaccessible"] = r.to_dict()
    else:
        reach = _build(cfg, "source", lambda: reach_forward(
            domain, source, tuple(t_range), dt=dt, resolution=resolution, max_snapshots=snaps))
    w.reach("reach.bin", reach)
    w.svg("first_arrival.svg", plots.first_arrival_map, reach)
    out.update({"rho": reach.rho, "dx": reach.dx, "dt": reach.dt, "n": int(reach.x.size),
                "t_range": [reach.t_start, reach.t_end],
                "snapshot_times": reach.times, "measures": [reach.measure(i) for i in
                                                            range(len(reach.snapshot_steps))],
                "ever_reached_cells": int(reach.ever_reached.sum())})
    ref = _reference_error(domain, source, reach) if check_ref else None
    out["reference_check"] = ref
    w.json("reach.json", out)
    if ref is not None and not ref["ok"]:
        raise PropertyViolation("first arrival deviates from the closed form",
                                max_error_over_dx=ref["max_error_over_dx"])
    return out


def cmd_stefanov(cfg: ExperimentConfig, w: ArtifactWriter) -> dict:
    from . import plots
    from .boundary import build_stefanov_wall, profile_from_config, stefanov_params_from_config
    from .stefanov import (analyze, build_channel, choose_k, verify_channel_inaccessibility,
                           verify_wall_bound)

    k = Knobs(cfg, cfg.body)
    wall_block = k.raw("wall", {})
    if not isinstance(wall_block, dict):
        raise _AnchoredConfigError(cfg.anchor(ConfigError("wall must be an object", key="wall")))
    horizon = k.number("horizon", 100.0, lo=1.0, hi=10000.0)
    horizon = cfg.horizon if cfg.horizon is not None else horizon
    eps = k.number("eps", None, lo=0.0, open_lo=True)
    n_starts = k.number("start_times", 8, lo=1, hi=256, integer=True)
    grid_check = k.flag("grid_check", True)
    grid_res = k.number("grid_resolution", 400, lo=50, hi=2000, integer=True)
    grid_res = cfg.resolution or grid_res
    k.finish()
    f = _build(cfg, "wall", profile_from_config, wall_block.get("f", "sin"))
    kk = wall_block.get("k")
    if kk is None:
        kk = _build(cfg, "wall", choose_k, f, True)
    params = _build(cfg, "wall", stefanov_params_from_config, {**wall_block, "k": kk})
    wall = build_stefanov_wall(params)
    analysis = analyze(params.k, f)
    bound = verify_wall_bound(params.k, f, horizon=horizon, M=params.M, L=params.L)
    channel = build_channel(wall, eps)
    sweep = verify_channel_inaccessibility(channel, horizon,
                                           start_times=np.arange(n_starts) / n_starts,
                                           grid_check=grid_check, grid_resolution=grid_res)
    tr = bound.trajectory
    w.csv("trajectory.csv", ["t", "sigma", "lambda_minus", "lambda_plus"], tr.rows())
    rows = [np.column_stack([np.full(s.t.size, tau), s.t, s.sigma])
            for tau, s in zip(sweep.start_times, sweep.trajectories)]
    w.csv("channel_sweep.csv", ["start_time", "t", "sigma"], np.concatenate(rows))
    if sweep.reach is not None:
        w.reach("reach.bin", sweep.reach)
    w.svg("channel.svg", plots.channel_schematic, wall, channel.eps, tr,
          0.5 * analysis.drift_slope, reach=sweep.reach)
    verdict = bool(bound.ok and sweep.inaccessible)
    sweep_d = sweep.to_dict()
    sweep_d.pop("start_times", None)
    out = {
        "k": params.k, "abs_fprime_integral": analysis.abs_fprime_integral, "H0": analysis.H0,
        "drift_slope": analysis.drift_slope, "delta": channel.delta, "eps": channel.eps,
        "cone_constant": channel.cone_constant, "widened_H0": sweep.widened_H0,
        "inaccessible": verdict, "wall": params.describe(), "horizon": horizon,
        "wall_bound": bound.to_dict(), "channel": channel.to_dict(), "sweep": sweep_d,
    }
    w.json("analysis.json", out)
    if not verdict:
        raise PropertyViolation("channel inaccessibility could not be confirmed",
                                wall_bound=bound.status, sweep=sweep.inaccessible)
    return out


def _field(cfg: ExperimentConfig, fk: Knobs):
    from .cone_geometry import (boundary_extension_field, linear_field, pulse_swirl_field,
                                rigid_rotation_field, zero_field)

    kind = fk.raw("kind", required=True)
    if kind == "rotation":
        f = rigid_rotation_field(fk.number("omega", 1.0))
    elif kind == "linear":
        C = fk.raw("C", required=True)
        try:
            C = np.asarray(C, dtype=float)
        except (TypeError, ValueError):
            C = None
        if C is None or C.ndim != 2 or C.shape[0] != C.shape[1]:
            fk._fail("C", "C must be a square matrix")
        f = linear_field(C)
    elif kind == "zero":
        f = zero_field(fk.number("n", 2, lo=1, hi=8, integer=True))
    elif kind == "swirl":
        f = pulse_swirl_field(fk.number("omega", 0.3), fk.number("t_on", 0.0),
                              fk.number("t_off", 1.0), fk.number("r_inner", 0.5, lo=0.0),
                              fk.number("r_outer", 2.0, lo=0.0))
    elif kind == "boundary_extension":
        curve = _curve(cfg, fk)
        rho = fk.number("rho", None, lo=0.0, open_lo=True, required=False)
        delta = fk.number("delta", None, lo=0.0, open_lo=True, required=False)
        f = _build(cfg, "field", lambda: boundary_extension_field(
            curve, delta=delta, rho=rho).field)
    else:
        fk._fail("kind", f"unknown field kind {kind!r} "
                 "(rotation, linear, zero, swirl, boundary_extension)")
    fk.finish()
    return f


def _psi_spec(cfg: ExperimentConfig, pk: Knobs):
    from .cone_geometry import EvenPeriodic, RigidMotion, SlowUniform

    mode = pk.raw("mode", required=True)
    if mode == "Rigid":
        amp = pk.vector("amplitude", [0.0, 0.0], length=2)
        freq = pk.number("frequency", 1, lo=0, hi=64, integer=True)
        w2 = 2.0 * math.pi * freq
        spec = RigidMotion(
            omega=pk.number("omega", 0.0),
            l=lambda t: amp * math.sin(w2 * t),
            dl=lambda t: amp * w2 * math.cos(w2 * t),
            rho0=pk.number("rho0", 1.0, lo=0.0), rho=pk.number("rho", 2.0, lo=0.0),
            eps=pk.number("eps", 0.0, lo=0.0))
    elif mode == "EvenPeriodic":
        spec = EvenPeriodic(_field(cfg, pk.sub("field", required=True)),
                            pk.number("n_steps", 400, lo=16, hi=100000, integer=True))
    elif mode == "SlowUniform":
        spec = SlowUniform.example(pk.number("eps0", 0.01, lo=0.0),
                                   pk.number("rho_prime", 2.0, lo=0.0, open_lo=True),
                                   pk.number("rho", 2.5, lo=0.0, open_lo=True),
                                   tuple(pk.vector("direction", [1.0, 0.0], length=2)))
    else:
        pk._fail("mode", f"unknown Psi mode {mode!r} (Rigid, EvenPeriodic, SlowUniform)")
    pk.finish()
    return mode, spec


def cmd_cone(cfg: ExperimentConfig, w: ArtifactWriter) -> dict:
    from . import plots
    from .cone_geometry import (assemble_form, build_psi, classify_vector, cone_algebra_survey,
                                finite_difference_jacobian, flow_from_field,
                                jacobian_bound_check, tangent_timelike_vector)

    k = Knobs(cfg, cfg.body)
    fb = k.sub("form", required=True)
    A = fb.raw("A", required=True)
    a = fb.raw("a", None)
    fb.finish()
    form = _build(cfg, "form", lambda: assemble_form(np.asarray(A, float),
                                                     None if a is None else np.asarray(a, float)))
    vectors = []
    for vk in k.items("vectors"):
        vectors.append((vk.vector("v", required=True), vk.flag("covector", False)))
        vk.finish()
    normals = [np.asarray(v, float) for v in k.raw("normals", [])]
    sk = k.sub("survey")
    survey_opts = None
    if sk is not None:
        survey_opts = (sk.number("draws", 1000, lo=1, hi=10 ** 6, integer=True),
                       sk.number("seed", 0, lo=0, integer=True),
                       sk.number("max_dim", 4, lo=1, hi=16, integer=True))
        sk.finish()
    fk = k.sub("field")
    fld = _field(cfg, fk) if fk is not None else None
    seeds = None
    seed_k = k.raw("seeds", None)
    if isinstance(seed_k, dict):
        sd = Knobs(cfg, seed_k, "seeds")
        cnt = sd.number("count", 8, lo=1, hi=10000, integer=True)
        rad = sd.number("radius", 1.0, lo=0.0, open_lo=True)
        rng = np.random.default_rng(sd.number("seed", 0, lo=0, integer=True))
        sd.finish()
        if fld is not None:
            seeds = rad * rng.uniform(-1.0, 1.0, size=(cnt, fld.n)) / math.sqrt(fld.n)
    elif seed_k is not None:
        seeds = np.atleast_2d(np.asarray(seed_k, float))
    t_range = k.vector("t_range", [0.0, 1.0], length=2)
    if cfg.horizon is not None:
        t_range = np.array([t_range[0], t_range[0] + cfg.horizon])
    n_steps = k.number("n_steps", 1000, lo=10, hi=10 ** 6, integer=True)
    n_steps = cfg.resolution or n_steps
    fd_step = k.number("fd_step", 1e-5, lo=0.0, open_lo=True)
    pk = k.sub("psi")
    psi_spec = _psi_spec(cfg, pk) if pk is not None else None
    k.finish()
    if fld is not None and seeds is None:
        seeds = np.zeros((1, fld.n))
    if fld is not None and fld.n != form.n:
        raise _AnchoredConfigError(cfg.anchor(ConfigError(
            f"field dimension {fld.n} does not match form dimension {form.n}", key="field")))

    out: dict = {"form": form.to_dict()}
    out["vectors"] = [{"v": v, "covector": cov,
                       **classify_vector(form, v, covector=cov).__dict__} for v, cov in vectors]
    out["tangents"] = [tangent_timelike_vector(form, nu).to_dict() for nu in normals]
    failures = []
    if survey_opts is not None:
        sv = cone_algebra_survey(*survey_opts[:2], max_dim=survey_opts[2])
        out["survey"] = sv.to_dict()
        if not sv.ok():
            failures.append("survey")
    if fld is not None:
        flow = flow_from_field(fld, seeds, tuple(t_range), n_steps=n_steps, form=form)
        _, fd_rel = finite_difference_jacobian(flow, fd_step)
        rep = jacobian_bound_check(flow, strict=False)
        J = flow.J.reshape(flow.J.shape[0] * flow.J.shape[1], -1)
        w.csv("flow.csv", ["t", "seed"] + [f"x{i + 1}" for i in range(fld.n)]
              + [f"J{i + 1}{j + 1}" for i in range(fld.n) for j in range(fld.n)],
              np.column_stack([flow.rows(), J]))
        if fld.n == 2:
            w.svg("flow.svg", plots.flow_plot, flow)
        out["flow"] = {"field": fld.name, "seeds": seeds, "t_range": t_range,
                       "n_steps": n_steps, "fd_max_relative_error": fd_rel,
                       "min_timelike_margin": float(flow.timelike_margin.min()),
                       "jacobian_bound": rep.to_dict()}
        if not rep.ok or fd_rel > 1e-5:
            failures.append("flow")
    if psi_spec is not None:
        ps = build_psi(psi_spec[1], strict=False, form=form)
        out["psi"] = ps.to_dict()
        if not ps.ok:
            failures.append("psi")
    w.json("cone_checks.json", out)
    if failures:
        raise PropertyViolation(f"checks failed: {', '.join(failures)}", failed=failures)
    return out


HANDLERS: dict[str, Callable[[ExperimentConfig, ArtifactWriter], dict]] = {
    "validate": cmd_validate,
    "speeds": cmd_speeds,
    "geodesic": cmd_geodesic,
    "orbits": cmd_orbits,
    "access": cmd_access,
    "reach": cmd_reach,
    "stefanov": cmd_stefanov,
    "cone": cmd_cone,
}


# ---------------------------------------------------------------------------
# entry points


def _threads_from_env() -> int:
    raw = os.environ.get(ENV_THREADS)
    if raw is None or raw == "":
        return 1
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise _AnchoredConfigError(f"{ENV_THREADS} must be a positive integer, got {raw!r}")
    return n


@dataclass
class RunResult:
    exit_code: int
    summary: dict | None = None
    error: dict | None = None
    files: list = field(default_factory=list)


def run(cfg: ExperimentConfig, out_dir) -> RunResult:
    """Execute one command, write its artifacts and the manifest."""
    w = ArtifactWriter(out_dir)
    try:
        summary = HANDLERS[cfg.command](cfg, w)
        code, status, err = EXIT_OK, "ok", None
    except ConfigError as exc:
        msg = str(exc) if isinstance(exc, _AnchoredConfigError) else cfg.anchor(exc)
        err = {**exc.to_dict(), "message": msg}
        code, status, summary = EXIT_CONFIG, "config_error", None
    except NumericalError as exc:
        code, status, summary, err = EXIT_NUMERIC, "numerical_failure", None, exc.to_dict()
    except PropertyViolation as exc:
        code, status, summary, err = EXIT_PROPERTY, "property_violation", None, exc.to_dict()
    if err is not None:
        w.json("error.json", err)
    w.manifest(cfg, status, code)
    return RunResult(code, summary, err, list(w.files) + ["manifest.json"])


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="moving-obstacles",
        description="Accessibility experiments for moving obstacles (JSON in, "
                    "JSON/CSV/SVG out).",
        epilog=f"Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 property "
               f"violation. Thread count: {ENV_THREADS}.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    helps = {
        "validate": "check non-degeneracy and time-likeness of a curve",
        "speeds": "tabulate characteristic speeds and the fan criterion",
        "geodesic": "integrate boundary characteristics",
        "orbits": "classify orbits of a periodic speed field",
        "access": "apex seeds, access fans, certificates and interior paths",
        "reach": "grid reachability oracle on an obstacle domain",
        "stefanov": "drift analysis and channel inaccessibility of the wall",
        "cone": "cone algebra, flows of vector fields and Psi maps",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--resolution", type=int, default=None,
                        help="override the command's main grid resolution")
        sp.add_argument("--horizon", type=float, default=None,
                        help="override the command's time horizon")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.resolution is not None and args.resolution < 4:
            raise _AnchoredConfigError("--resolution must be at least 4")
        if args.horizon is not None and not (math.isfinite(args.horizon) and args.horizon > 0):
            raise _AnchoredConfigError("--horizon must be positive")
        threads = _threads_from_env()
        cfg = load_config(args.config, args.command, resolution=args.resolution,
                          horizon=args.horizon, threads=threads)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    result = run(cfg, args.out)
    if result.error is not None:
        print(f"error: {result.error.get('message')}", file=sys.stderr)
    else:
        print(f"{cfg.command}: wrote {len(result.files)} files to {args.out}")
    return result.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
