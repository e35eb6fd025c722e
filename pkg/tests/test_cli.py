import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from moving_obstacles.accessibility import ReachSet
from moving_obstacles.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_PROPERTY, main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SUPERLUMINAL = {"family": "TranslatingCurve", "radius": 0.5, "amplitude": [0.3, 0.0],
                "time_period": 1.0}


def _write(tmp_path, body, name="cfg.json"):
    p = tmp_path / name
    p.write_text(body if isinstance(body, str) else json.dumps(body, indent=2))
    return p


def _run(cmd, cfg, out, *extra):
    return main([cmd, "--config", str(cfg), "--out", str(out), *extra])


def _manifest(out):
    return json.loads((Path(out) / "manifest.json").read_text())


class TestCommands:
    def test_validate_unit_circle(self, tmp_path):
        code = _run("validate", CONFIGS / "validate_unit_circle.json", tmp_path)
        assert code == EXIT_OK
        rep = json.loads((tmp_path / "validate.json").read_text())
        assert rep["delta_tl"] == pytest.approx(4 * math.pi**2, rel=1e-9)
        assert rep["delta_nd"] == pytest.approx(4 * math.pi**2, rel=1e-9)
        man = _manifest(tmp_path)
        assert man["status"] == "ok" and man["exit_code"] == 0
        names = {f["name"] for f in man["files"]}
        assert names == {"validate.json", "validation.csv", "timelike_margin.svg"}

    def test_orbits_unit_circle(self, tmp_path):
        assert _run("orbits", CONFIGS / "orbits_unit_circle.json", tmp_path) == EXIT_OK
        orbits = json.loads((tmp_path / "orbits.json").read_text())["orbits"]
        assert [o["kind"] for o in orbits] == ["UnboundedUp", "UnboundedDown"]
        assert orbits[0]["rotation_number"] == pytest.approx(1 / (2 * math.pi), abs=1e-6)

    def test_reach_empty_with_override(self, tmp_path):
        code = _run("reach", CONFIGS / "reach_empty.json", tmp_path, "--resolution", "60")
        assert code == EXIT_OK
        rep = json.loads((tmp_path / "reach.json").read_text())
        assert rep["n"] == 60 and rep["reference_check"]["ok"]
        reach = ReachSet.load(tmp_path / "reach.bin")
        assert reach.ever_reached[reach.inside].all()
        assert _manifest(tmp_path)["overrides"]["resolution"] == 60

    def test_speeds(self, tmp_path):
        assert _run("speeds", CONFIGS / "speeds_translating_circle.json", tmp_path) == EXIT_OK
        fc = json.loads((tmp_path / "fan_criterion.json").read_text())
        assert fc["satisfied"] is True

    def test_cone_wave(self, tmp_path):
        assert _run("cone", CONFIGS / "cone_wave.json", tmp_path) == EXIT_OK
        checks = json.loads((tmp_path / "cone_checks.json").read_text())
        assert checks["flow"]["jacobian_bound"]["ok"]
        assert checks["flow"]["fd_max_relative_error"] < 1e-5
        assert checks["flow"]["min_timelike_margin"] > 0
        rows = np.loadtxt(tmp_path / "flow.csv", delimiter=",", skiprows=1)
        assert rows.shape[1] >= 4


class TestDeterminism:
    def test_repeat_runs_are_identical(self, tmp_path):
        hashes = []
        for i in range(2):
            out = tmp_path / f"run{i}"
            assert _run("geodesic", CONFIGS / "geodesic_wall.json", out) == EXIT_OK
            hashes.append({f["name"]: f["sha256"] for f in _manifest(out)["files"]})
        assert hashes[0] == hashes[1]
        a = (tmp_path / "run0" / "manifest.json").read_bytes()
        b = (tmp_path / "run1" / "manifest.json").read_bytes()
        assert a == b

    def test_manifest_hashes_match_files(self, tmp_path):
        import hashlib

        _run("validate", CONFIGS / "validate_unit_circle.json", tmp_path)
        for f in _manifest(tmp_path)["files"]:
            data = (tmp_path / f["name"]).read_bytes()
            assert hashlib.sha256(data).hexdigest() == f["sha256"]
            assert len(data) == f["bytes"]


class TestExitCodes:
    def test_unknown_key_is_line_anchored(self, tmp_path, capsys):
        cfg = _write(tmp_path, '{"command": "validate",\n "curve": {"family": "Circle"},\n'
                               ' "bogus": 1}')
        assert _run("validate", cfg, tmp_path / "o") == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "cfg.json:3:" in err and "bogus" in err

    def test_out_of_range_value(self, tmp_path, capsys):
        cfg = _write(tmp_path, {"command": "validate", "curve": {"family": "Circle"},
                                "grid_resolution": 10})
        assert _run("validate", cfg, tmp_path / "o") == EXIT_CONFIG
        err = json.loads((tmp_path / "o" / "error.json").read_text())
        assert "grid_resolution" in err["message"]
        assert _manifest(tmp_path / "o")["status"] == "config_error"

    def test_bad_json(self, tmp_path, capsys):
        cfg = _write(tmp_path, '{"command": "validate", "curve": {')
        assert _run("validate", cfg, tmp_path / "o") == EXIT_CONFIG
        assert "invalid JSON" in capsys.readouterr().err

    def test_command_mismatch(self, tmp_path):
        assert _run("reach", CONFIGS / "validate_unit_circle.json", tmp_path) == EXIT_CONFIG

    def test_numerical_failure(self, tmp_path):
        cfg = _write(tmp_path, {"command": "orbits", "curve": SUPERLUMINAL,
                                "orbits": [{"sigma0": 0.0}]})
        assert _run("orbits", cfg, tmp_path / "o") == EXIT_NUMERIC
        assert _manifest(tmp_path / "o")["status"] == "numerical_failure"

    def test_property_violation(self, tmp_path):
        cfg = _write(tmp_path, {"command": "validate", "curve": SUPERLUMINAL})
        assert _run("validate", cfg, tmp_path / "o") == EXIT_PROPERTY
        err = json.loads((tmp_path / "o" / "error.json").read_text())
        assert err["check"] == "time-likeness"
        assert err["sigma"] == 0.0 and err["t"] == 0.0

    def test_bad_overrides(self, tmp_path):
        cfg = CONFIGS / "validate_unit_circle.json"
        assert _run("validate", cfg, tmp_path, "--resolution", "2") == EXIT_CONFIG
        assert _run("validate", cfg, tmp_path, "--horizon", "-1") == EXIT_CONFIG


class TestThreads:
    def test_env_var_threads_give_same_output(self, tmp_path, monkeypatch):
        cfg = CONFIGS / "geodesic_wall.json"
        _run("geodesic", cfg, tmp_path / "one")
        monkeypatch.setenv("MOVING_OBSTACLES_THREADS", "3")
        assert _run("geodesic", cfg, tmp_path / "three") == EXIT_OK
        one = {f["name"]: f["sha256"] for f in _manifest(tmp_path / "one")["files"]}
        three = {f["name"]: f["sha256"] for f in _manifest(tmp_path / "three")["files"]}
        assert one == three

    def test_invalid_env_var(self, tmp_path):
        env = {**os.environ, "MOVING_OBSTACLES_THREADS": "zero"}
        proc = subprocess.run(
            [sys.executable, "-m", "moving_obstacles", "validate", "--config",
             str(CONFIGS / "validate_unit_circle.json"), "--out", str(tmp_path)],
            env=env, capture_output=True, text=True)
        assert proc.returncode == EXIT_CONFIG
        assert "MOVING_OBSTACLES_THREADS" in proc.stderr
