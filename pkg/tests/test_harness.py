import json
import subprocess
import sys
from pathlib import Path

import pytest

from multiband_tof.cli import main
from multiband_tof.errors import ScenarioError
from multiband_tof.harness import ExperimentSpec, apply_override, load_scenario, run

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def _write(tmp_path, data, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data) if not isinstance(data, str) else data)
    return path


def test_json_syntax_error_reports_line_and_column(tmp_path):
    path = _write(tmp_path, '{\n  "kind": "tof",\n  "impairments": {"snr_db": 20,}\n}\n')
    with pytest.raises(ScenarioError, match="line 3, column 32"):
        load_scenario(path)


def test_schema_errors_name_the_field(tmp_path):
    path = _write(tmp_path, {"impairments": {"snr_db": "loud"}, "protocol": {"dwell_ms": -1}})
    with pytest.raises(ScenarioError) as info:
        load_scenario(path)
    msg = str(info.value)
    assert "impairments.snr_db" in msg and "protocol.dwell_ms" in msg


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(ScenarioError, match="dwell"):
        load_scenario(_write(tmp_path, {"dwell": 3}))


def test_overrides():
    data = {"a": {"b": 1}}
    apply_override(data, "a.b=2.5")
    apply_override(data, "a.c.d=[1, 2]")
    apply_override(data, "name=hello")
    assert data == {"a": {"b": 2.5, "c": {"d": [1, 2]}}, "name": "hello"}
    with pytest.raises(ScenarioError):
        apply_override(data, "novalue")
    with pytest.raises(ScenarioError):
        apply_override(data, "a.b.c=1")


def test_kind_mismatch(tmp_path):
    path = _write(tmp_path, {"kind": "sweep"})
    with pytest.raises(ScenarioError):
        run(ExperimentSpec("tof", str(path), out=str(tmp_path / "o")))


def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec("dance")
    with pytest.raises(ValueError):
        ExperimentSpec("tof", trials=0)


def test_sweep_outputs_and_bounds(tmp_path):
    out = tmp_path / "sweep"
    res = run(ExperimentSpec("sweep", str(SCENARIOS / "sweep_lossy.json"), trials=20, seed=1, out=str(out)))
    assert res.status == 0
    assert {p.name for p in out.iterdir()} == {"sweep.csv", "cdf.csv", "trace_trial0.csv", "summary.json"}
    summary = json.loads((out / "summary.json").read_text())
    assert summary["median"] < 120 and summary["p95"] >= summary["median"]
    tight = run(ExperimentSpec("sweep", str(SCENARIOS / "sweep_lossy.json"), trials=5, out=str(tmp_path / "t"),
                               overrides=["bounds.median_duration_ms=50"]))
    assert tight.status == 1 and tight.violations


def test_byte_identical_outputs(tmp_path):
    spec = dict(kind="tof", scenario=str(SCENARIOS / "tof_noise.json"), trials=2, seed=3,
                overrides=["random_scene.n_paths=2", "solver.tau_max_ns=100"])
    run(ExperimentSpec(out=str(tmp_path / "a"), **spec))
    run(ExperimentSpec(out=str(tmp_path / "b"), workers=2, **spec))
    for name in ("tof.csv", "cdf.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "tof.csv").read_text().splitlines()[0]
    assert header.startswith("trial,true_tof_ns,est_tof_ns,error_ns")


def test_profile_scenario_meets_its_bounds(tmp_path):
    res = run(ExperimentSpec("profile", str(SCENARIOS / "profile_three_paths.json"), out=str(tmp_path)))
    assert res.status == 0, res.violations
    assert (tmp_path / "profile_trial0.csv").read_text().startswith("tau_ns,magnitude,phase")


def test_calibrate_then_range(tmp_path):
    cal = tmp_path / "cal"
    res = run(ExperimentSpec("calibrate", str(SCENARIOS / "calibrate_3m.json"), trials=2, out=str(cal)))
    assert res.status == 0
    assert abs(res.summary["offset_ns"] - 30.0) < 0.1
    scn = json.loads((SCENARIOS / "tof_calibrated.json").read_text())
    scn["pipeline"]["calibration_file"] = str(cal / "calibration.json")
    scn["random_scene"]["n_paths"] = 1
    path = _write(tmp_path, scn)
    res = run(ExperimentSpec("tof", str(path), trials=2, out=str(tmp_path / "tof")))
    assert res.status == 0 and res.summary["median"] < 0.05


def test_missing_calibration_file(tmp_path):
    path = _write(tmp_path, {"pipeline": {"calibration_file": "nope.json"}})
    with pytest.raises(ScenarioError, match="does not exist"):
        run(ExperimentSpec("tof", str(path), out=str(tmp_path / "o")))


def test_follow_and_localize(tmp_path):
    res = run(ExperimentSpec("follow", str(SCENARIOS / "follow_walk.json"), trials=2, out=str(tmp_path / "f"),
                             overrides=["follow.duration_s=20"]))
    assert res.status == 0
    traj = (tmp_path / "f" / "follower_trial0.csv").read_text().splitlines()
    assert traj[0] == "t,x,y" and len(traj) == 20 * 12 + 2
    res = run(ExperimentSpec("localize", str(SCENARIOS / "localize_triangle.json"), trials=30, out=str(tmp_path / "l")))
    assert res.status == 0
    cdf = (tmp_path / "l" / "cdf.csv").read_text().splitlines()
    assert cdf[0] == "quantile,error_m" and len(cdf) == 102


def test_cli_exit_codes(tmp_path, capsys):
    ok = main(["sweep", "--scenario", str(SCENARIOS / "sweep_lossy.json"), "--trials", "3", "--out", str(tmp_path / "a")])
    assert ok == 0
    bad = main(["sweep", "--trials", "3", "--out", str(tmp_path / "b"), "--config-override", "bounds.max_duration_ms=1"])
    assert bad == 1
    broken = _write(tmp_path, "{oops")
    assert main(["sweep", "--scenario", str(broken), "--out", str(tmp_path / "c")]) == 2
    assert "line 1, column 2" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "multiband_tof", "sweep", "--trials", "2", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["kind"] == "sweep"
