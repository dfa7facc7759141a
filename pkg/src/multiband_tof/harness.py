"""Reproducible end-to-end experiments driven by JSON scenario files.

Each experiment kind (tof, profile, localize, sweep, follow, calibrate)
reads a scenario, runs ``trials`` independent trials seeded from one root
seed, writes per-trial CSV files plus ``summary.json`` into the output
directory, and reports which scenario bounds (if any) were violated.
All numerical work goes through the library modules.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .band_plan import BandPlan, default_band_plan
from .calibration import CalibrationRecord, calibrate
from .channel import (
    SPEED_OF_LIGHT,
    ImpairmentConfig,
    PathComponent,
    Scene,
    paths_from_scene,
    random_scene,
    synthesize_paths_sweep,
    write_sweep_csv,
)
from .csi import average_sweeps, zero_subcarrier_channels
from .errors import InsufficientDataError, LocalizationFailedError, ScenarioError
from .follow import (
    NoiseModel,
    TrackerConfig,
    random_walk_trajectory,
    read_trajectory_csv,
    simulate_follow,
    stationary_trajectory,
    write_trajectory_csv,
)
from .hopping import ProtocolConfig, run_sweep
from .localization import (
    distances_from_tofs,
    geometric_outlier_reject,
    localize,
    triangle_anchors,
    write_localization_csv,
)
from .solver import DelayGrid, SolverConfig, dominant_peaks, estimate_tof

log = logging.getLogger(__name__)

KINDS = ("tof", "profile", "localize", "sweep", "follow", "calibrate")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_point = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_complex = {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}]}
_range = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

SCENARIO_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "description": {"type": "string"},
        "kind": {"enum": list(KINDS)},
        "band_plan": {
            "type": "object",
            "required": ["bands"],
            "properties": {
                "bands": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["index", "center_hz"],
                        "additionalProperties": False,
                        "properties": {
                            "index": {"type": "integer"},
                            "center_hz": _pos,
                            "spacing_hz": _pos,
                            "subcarriers": {"type": "array", "items": {"type": "integer"}},
                        },
                    },
                }
            },
        },
        "band_indices": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "paths": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["delay_ns"],
                "additionalProperties": False,
                "properties": {"delay_ns": _nonneg, "amplitude": _complex},
            },
        },
        "scene": {
            "type": "object",
            "required": ["tx_position_m", "rx_antenna_positions_m"],
            "additionalProperties": False,
            "properties": {
                "tx_position_m": _point,
                "rx_antenna_positions_m": {"type": "array", "items": _point, "minItems": 1},
                "reflectors": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["position_m"],
                        "additionalProperties": False,
                        "properties": {"position_m": _point, "coefficient": _complex},
                    },
                },
            },
        },
        "random_scene": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_paths": {"type": "integer", "minimum": 1},
                "distance_range_m": _range,
                "extra_path_range_m": _range,
                "coefficient_range": _range,
                "rx_antenna_positions_m": {"type": "array", "items": _point, "minItems": 1},
            },
        },
        "impairments": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "detection_delay_median_ns": _nonneg,
                "detection_delay_stddev_ns": _nonneg,
                "cfo_hz": {"type": ["number", "null"]},
                "cfo_ppm": _nonneg,
                "snr_db": {"type": ["number", "null"]},
                "kappa": _complex,
                "fwd_rev_gap_us": _num,
                "gap_jitter": _nonneg,
                "alternate_initiator": {"type": "boolean"},
                "hardware_delay_ns": _num,
                "packets_per_band": {"type": "integer", "minimum": 1},
                "packet_interval_us": _nonneg,
                "dwell_ms": _pos,
                "quirk_phase_step_rad": {"type": ["number", "null"]},
            },
        },
        "pipeline": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["forward", "reciprocal", "quartic"]},
                "calibration_file": {"type": "string"},
                "calibration": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"offset_ns": _num, "kappa": _complex},
                },
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": _nonneg,
                "alpha_scale": _nonneg,
                "epsilon": _pos,
                "epsilon_scale": _pos,
                "max_iters": {"type": "integer", "minimum": 1},
                "peak_threshold_frac": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "check_monotone": {"type": "boolean"},
                "tau_min_ns": _nonneg,
                "tau_max_ns": _pos,
                "step_ns": _pos,
            },
        },
        "localization": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "anchors_m": {"type": "array", "items": _point, "minItems": 2},
                "anchor_spread_m": _pos,
                "device_distance_range_m": _range,
                "distance_source": {"enum": ["pipeline", "gaussian"]},
                "distance_sigma_m": _nonneg,
                "slack_frac": _nonneg,
                "slack_m": _nonneg,
                "n_paths": {"type": "integer", "minimum": 1},
            },
        },
        "protocol": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dwell_ms": _pos,
                "ack_timeout_ms": _pos,
                "retune_latency_us": _nonneg,
                "default_band": {"type": "integer", "minimum": 0},
                "loss_probability": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "airtime_us": _pos,
                "turnaround_us": _nonneg,
                "packets_per_band": {"type": "integer", "minimum": 1},
            },
        },
        "follow": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "target_distance_m": _pos,
                "step_gain": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "max_step_m": _pos,
                "window": {"type": "integer", "minimum": 1},
                "rate_window": {"type": ["integer", "null"], "minimum": 1},
                "outlier_sigma": _pos,
                "feedforward": {"type": "boolean"},
                "noise_sigma_m": _nonneg,
                "outlier_probability": {"type": "number", "minimum": 0, "maximum": 1},
                "trajectory": {"enum": ["walk", "stationary"]},
                "trajectory_file": {"type": "string"},
                "duration_s": _pos,
                "speed_mps": _pos,
                "turn_radius_m": _nonneg,
                "stationary_position_m": _point,
                "initial_follower_m": _point,
            },
        },
        "calibration_link": {
            "type": "object",
            "required": ["distance_m"],
            "additionalProperties": False,
            "properties": {"distance_m": _pos},
        },
        "bounds": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "median_error_ns": _nonneg,
                "p95_error_ns": _nonneg,
                "first_peak_ns": _nonneg,
                "first_peak_tol_ns": _nonneg,
                "peaks_ns": {"type": "array", "items": _nonneg},
                "peaks_tol_ns": _nonneg,
                "median_error_m": _nonneg,
                "p95_error_m": _nonneg,
                "median_duration_ms": _nonneg,
                "max_duration_ms": _nonneg,
                "require_synchronized": {"type": "boolean"},
                "median_rmse_m": _nonneg,
                "offset_ns": _num,
                "offset_tol_ns": _nonneg,
            },
        },
    },
}


# -- scenario loading --------------------------------------------------------


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(data: dict, override: str) -> None:
    """Apply ``dotted.key=value``; the value is parsed as JSON when possible."""
    if "=" not in override:
        raise ScenarioError(f"override {override!r} is not of the form key=value")
    key, raw = override.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ScenarioError(f"override {override!r} has an empty key")
    node = data
    for p in parts[:-1]:
        child = node.get(p)
        if child is None:
            child = node[p] = {}
        if not isinstance(child, dict):
            raise ScenarioError(f"override {override!r}: {p!r} is not an object")
        node = child
    node[parts[-1]] = _parse_value(raw)


def _error_path(err: jsonschema.ValidationError) -> str:
    path = ""
    for p in err.absolute_path:
        path += f"[{p}]" if isinstance(p, int) else (f".{p}" if path else str(p))
    return path or "<root>"


def validate_scenario(data) -> dict:
    validator = jsonschema.Draft7Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = [f"{_error_path(e)}: {e.message}" for e in errors]
        raise ScenarioError("invalid scenario:\n  " + "\n  ".join(lines))
    return data


def load_scenario(path: str | Path | None, overrides=()) -> dict:
    """Parse, override and validate a scenario file (None means empty)."""
    data: dict = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ScenarioError(f"{path}: top level must be a JSON object")
    data = copy.deepcopy(data)
    for ov in overrides:
        apply_override(data, ov)
    validate_scenario(data)
    if path is not None:
        data["_base_dir"] = str(Path(path).resolve().parent)
    return data


# -- builders -----------------------------------------------------------------


def _complex_value(v, default=1.0) -> complex:
    if v is None:
        return complex(default)
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


def build_plan(scn: dict) -> BandPlan:
    plan = BandPlan.from_dict(scn["band_plan"]) if "band_plan" in scn else default_band_plan()
    if "band_indices" in scn:
        wanted = set(scn["band_indices"])
        unknown = wanted - {b.index for b in plan}
        if unknown:
            raise ScenarioError(f"band_indices: unknown band(s) {sorted(unknown)}")
        plan = plan.subset(lambda b: b.index in wanted)
    return plan


def build_grid(scn: dict) -> DelayGrid:
    s = scn.get("solver", {})
    return DelayGrid(
        tau_min=s.get("tau_min_ns", 0.0) * 1e-9,
        tau_max=s.get("tau_max_ns", 200.0) * 1e-9,
        step=s.get("step_ns", 0.05) * 1e-9,
    )


def build_solver_config(scn: dict) -> SolverConfig:
    s = scn.get("solver", {})
    kw = {k: s[k] for k in ("alpha", "alpha_scale", "epsilon", "epsilon_scale", "max_iters",
                            "peak_threshold_frac", "check_monotone") if k in s}
    return SolverConfig(**kw)


def build_impairments(scn: dict) -> ImpairmentConfig:
    try:
        return ImpairmentConfig.from_dict(scn.get("impairments", {}))
    except (KeyError, ValueError) as exc:
        raise ScenarioError(f"impairments: {exc}") from exc


def build_calibration(scn: dict) -> CalibrationRecord:
    p = scn.get("pipeline", {})
    if "calibration" in p:
        return CalibrationRecord.from_dict(p["calibration"])
    if "calibration_file" in p:
        path = Path(p["calibration_file"])
        if not path.is_absolute():
            path = Path(scn.get("_base_dir", ".")) / path
        if not path.exists():
            raise ScenarioError(f"pipeline.calibration_file: {path} does not exist")
        return CalibrationRecord.from_json(path)
    return CalibrationRecord()


def trial_paths(scn: dict, rng) -> tuple[list[list[PathComponent]], Scene | None]:
    """Per-antenna path lists for one trial, plus the scene if geometric."""
    if "paths" in scn:
        paths = sorted(
            (PathComponent(p["delay_ns"] * 1e-9, _complex_value(p.get("amplitude"))) for p in scn["paths"]),
            key=lambda p: p.delay,
        )
        return [paths], None
    if "scene" in scn:
        scene = Scene.from_dict(scn["scene"])
    else:
        r = scn.get("random_scene", {})
        scene = random_scene(
            rng,
            n_paths=r.get("n_paths", 5),
            rx_antenna_positions=[tuple(p) for p in r.get("rx_antenna_positions_m", [[0.0, 0.0]])],
            distance_range=tuple(r.get("distance_range_m", (1.0, 15.0))),
            extra_path_range=tuple(r.get("extra_path_range_m", (0.5, 12.0))),
            coefficient_range=tuple(r.get("coefficient_range", (0.3, 0.8))),
        )
    return [paths_from_scene(scene, a) for a in range(len(scene.rx_antenna_positions))], scene


def _trial_seeds(seed: int, trials: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(trials)]


def _summary_stats(values) -> dict:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return {"median": None, "p95": None, "mean": None}
    return {
        "median": float(np.median(v)),
        "p95": float(np.percentile(v, 95)),
        "mean": float(np.mean(v)),
    }


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _write_cdf(path: Path, values, column: str) -> None:
    v = np.sort(np.asarray(values, dtype=float))
    q = np.linspace(0, 1, 101)
    vals = np.quantile(v, q) if v.size else np.full(q.size, np.nan)
    vals = np.maximum.accumulate(vals)
    _write_csv(path, ["quantile", column], [(float(a), float(b)) for a, b in zip(q, vals)])


def _check_upper(violations, bounds, key, value, label):
    if key in bounds and value is not None and value > bounds[key]:
        violations.append(f"{label} {value:.6g} exceeds bound {key}={bounds[key]}")


# -- experiment kinds ----------------------------------------------------------


def _tof_trial(args):
    scn, trial, seed = args
    plan, grid, cfg = build_plan(scn), build_grid(scn), build_solver_config(scn)
    imp, cal = build_impairments(scn), build_calibration(scn)
    mode = scn.get("pipeline", {}).get("mode", "reciprocal")
    rng = np.random.default_rng(seed)
    paths, _ = trial_paths(scn, rng)
    meas = synthesize_paths_sweep(paths, plan, imp, seed=rng)
    channels = zero_subcarrier_channels(meas, mode=mode, kappa=cal.kappa)
    est, prof = estimate_tof(channels, plan, grid, cfg)
    tof = max(est.seconds - cal.offset, 0.0)
    truth = paths[0][0].delay
    return (trial, truth * 1e9, tof * 1e9, (tof - truth) * 1e9, prof.converged, prof.iterations,
            est.profile_peak_count, prof.objective_nonincreasing())


def _map(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def run_tof(scn, trials, seed, out: Path, workers=1):
    jobs = [(scn, t, s) for t, s in enumerate(_trial_seeds(seed, trials))]
    rows = sorted(_map(_tof_trial, jobs, workers))
    _write_csv(out / "tof.csv",
               ["trial", "true_tof_ns", "est_tof_ns", "error_ns", "converged", "iterations", "peak_count",
                "objective_monotone"], rows)
    abs_err = [abs(r[3]) for r in rows]
    stats = _summary_stats(abs_err)
    _write_cdf(out / "cdf.csv", abs_err, "abs_error_ns")
    bounds = scn.get("bounds", {})
    violations = []
    _check_upper(violations, bounds, "median_error_ns", stats["median"], "median |error| (ns)")
    _check_upper(violations, bounds, "p95_error_ns", stats["p95"], "p95 |error| (ns)")
    summary = {"metric": "abs_tof_error_ns", **stats,
               "unconverged": int(sum(not r[4] for r in rows)),
               "objective_monotone": bool(all(r[7] for r in rows))}
    return summary, violations


def run_profile(scn, trials, seed, out: Path, workers=1):
    plan, grid, cfg = build_plan(scn), build_grid(scn), build_solver_config(scn)
    imp, cal = build_impairments(scn), build_calibration(scn)
    mode = scn.get("pipeline", {}).get("mode", "reciprocal")
    bounds = scn.get("bounds", {})
    violations = []
    rows = []
    for trial, s in enumerate(_trial_seeds(seed, trials)):
        rng = np.random.default_rng(s)
        paths, _ = trial_paths(scn, rng)
        meas = synthesize_paths_sweep(paths, plan, imp, seed=rng)
        if trial == 0:
            write_sweep_csv(meas, out / "sweep_trial0.csv")
        channels = zero_subcarrier_channels(meas, mode=mode, kappa=cal.kappa)
        est, prof = estimate_tof(channels, plan, grid, cfg)
        prof.to_csv(out / f"profile_trial{trial}.csv")
        want = bounds.get("peaks_ns")
        count = len(want) if want else len(paths[0])
        peaks = dominant_peaks(prof, count)
        tof = max(est.seconds - cal.offset, 0.0)
        rows.append((trial, tof * 1e9, ";".join(f"{p[0] * 1e9:.3f}" for p in peaks), prof.converged))
        if "first_peak_ns" in bounds:
            tol = bounds.get("first_peak_tol_ns", 0.1)
            if abs(tof * 1e9 - bounds["first_peak_ns"]) > tol:
                violations.append(f"trial {trial}: ToF {tof * 1e9:.3f} ns not within {tol} of {bounds['first_peak_ns']}")
        if want:
            tol = bounds.get("peaks_tol_ns", 0.5)
            got = [p[0] * 1e9 for p in peaks]
            if len(got) != len(want) or any(abs(g - w) > tol for g, w in zip(got, sorted(want))):
                violations.append(f"trial {trial}: peaks {np.round(got, 3).tolist()} do not match {want} +- {tol}")
    _write_csv(out / "profile_summary.csv", ["trial", "tof_ns", "dominant_peaks_ns", "converged"], rows)
    summary = {"metric": "tof_ns", **_summary_stats([r[1] for r in rows]),
               "dominant_peaks_ns_trial0": rows[0][2]}
    return summary, violations


def _anchors(loc: dict) -> np.ndarray:
    if "anchors_m" in loc:
        return np.array(loc["anchors_m"], dtype=float)
    spread = loc.get("anchor_spread_m", 1.0)
    return triangle_anchors(spread)


def _localize_trial(args):
    scn, trial, seed = args
    loc = scn.get("localization", {})
    anchors = _anchors(loc)
    rng = np.random.default_rng(seed)
    # the scene's transmitter is the device being located
    scene = random_scene(
        rng,
        n_paths=loc.get("n_paths", 5),
        rx_antenna_positions=[tuple(a) for a in anchors],
        distance_range=tuple(loc.get("device_distance_range_m", (1.0, 10.0))),
    )
    device = np.array(scene.tx_position)
    source = loc.get("distance_source", "pipeline")
    if source == "gaussian":
        sigma = loc.get("distance_sigma_m", 0.15)
        true_d = np.linalg.norm(anchors - device, axis=1)
        tofs = (true_d + sigma * rng.standard_normal(len(anchors))) / SPEED_OF_LIGHT
        cal = CalibrationRecord()
    else:
        plan, grid, cfg = build_plan(scn), build_grid(scn), build_solver_config(scn)
        imp, cal = build_impairments(scn), build_calibration(scn)
        mode = scn.get("pipeline", {}).get("mode", "reciprocal")
        paths = [paths_from_scene(scene, a) for a in range(len(anchors))]
        meas = synthesize_paths_sweep(paths, plan, imp, seed=rng)
        tofs = []
        for a in range(len(anchors)):
            channels = zero_subcarrier_channels(meas, mode=mode, kappa=cal.kappa, antenna=a)
            tofs.append(estimate_tof(channels, plan, grid, cfg)[0].seconds)
    dset = distances_from_tofs(tofs, cal.offset)
    try:
        dset = geometric_outlier_reject(dset, anchors, slack_frac=loc.get("slack_frac", 0.1),
                                        slack_abs=loc.get("slack_m", 0.1))
        pos = localize(dset, anchors)
        est = (pos.x, pos.y)
    except (InsufficientDataError, LocalizationFailedError) as exc:
        log.warning("trial %d: %s", trial, exc)
        est = (float("nan"), float("nan"))
    return (trial, float(device[0]), float(device[1]), float(est[0]), float(est[1]))


def run_localize(scn, trials, seed, out: Path, workers=1):
    jobs = [(scn, t, s) for t, s in enumerate(_trial_seeds(seed, trials))]
    rows = sorted(_map(_localize_trial, jobs, workers))
    write_localization_csv(rows, out / "localization.csv")
    err = [float(np.hypot(r[3] - r[1], r[4] - r[2])) for r in rows]
    failed = int(sum(not np.isfinite(e) for e in err))
    finite = [e if np.isfinite(e) else float("inf") for e in err]
    _write_cdf(out / "cdf.csv", finite, "error_m")
    stats = _summary_stats(finite)
    bounds = scn.get("bounds", {})
    violations = []
    _check_upper(violations, bounds, "median_error_m", stats["median"], "median error (m)")
    _check_upper(violations, bounds, "p95_error_m", stats["p95"], "p95 error (m)")
    return {"metric": "error_m", **stats, "failed": failed}, violations


def build_protocol(scn: dict) -> ProtocolConfig:
    p = scn.get("protocol", {})
    kw = {}
    for key, (name, scale) in {
        "dwell_ms": ("dwell", 1e-3),
        "ack_timeout_ms": ("ack_timeout", 1e-3),
        "retune_latency_us": ("retune_latency", 1e-6),
        "airtime_us": ("airtime", 1e-6),
        "turnaround_us": ("turnaround", 1e-6),
    }.items():
        if key in p:
            kw[name] = p[key] * scale
    for key in ("default_band", "loss_probability", "packets_per_band"):
        if key in p:
            kw[key] = p[key]
    try:
        return ProtocolConfig(**kw)
    except ValueError as exc:
        raise ScenarioError(f"protocol: {exc}") from exc


def run_sweep_experiment(scn, trials, seed, out: Path, workers=1):
    plan, cfg = build_plan(scn), build_protocol(scn)
    rows = []
    for trial, s in enumerate(_trial_seeds(seed, trials)):
        trace = run_sweep(plan, cfg, s)
        if trial == 0:
            trace.to_csv(out / "trace_trial0.csv")
        rows.append((trial, trace.total_duration * 1e3, trace.timeouts, trace.synchronized,
                     len(trace.capture_times), len(trace.safety_violations)))
    _write_csv(out / "sweep.csv", ["trial", "duration_ms", "timeouts", "synchronized", "bands_captured",
                                   "safety_violations"], rows)
    durations = [r[1] for r in rows]
    _write_cdf(out / "cdf.csv", durations, "duration_ms")
    stats = _summary_stats(durations)
    bounds = scn.get("bounds", {})
    violations = []
    _check_upper(violations, bounds, "median_duration_ms", stats["median"], "median duration (ms)")
    _check_upper(violations, bounds, "max_duration_ms", max(durations), "max duration (ms)")
    unsync = sum(not r[3] or r[4] != len(plan) for r in rows)
    if bounds.get("require_synchronized", True) and unsync:
        violations.append(f"{unsync} trial(s) ended unsynchronized or incomplete")
    return {"metric": "duration_ms", **stats, "max": float(max(durations)), "unsynchronized": unsync}, violations


def build_tracker(scn: dict) -> TrackerConfig:
    f = scn.get("follow", {})
    kw = {}
    for key, name in {"target_distance_m": "target_distance", "step_gain": "step_gain", "max_step_m": "max_step",
                      "window": "window", "rate_window": "rate_window", "outlier_sigma": "outlier_sigma",
                      "feedforward": "feedforward"}.items():
        if key in f:
            kw[name] = f[key]
    try:
        return TrackerConfig(**kw)
    except ValueError as exc:
        raise ScenarioError(f"follow: {exc}") from exc


def run_follow(scn, trials, seed, out: Path, workers=1):
    f = scn.get("follow", {})
    cfg = build_tracker(scn)
    noise = NoiseModel(sigma=f.get("noise_sigma_m", 0.15), outlier_probability=f.get("outlier_probability", 0.0))
    duration = f.get("duration_s", 60.0)
    rows = []
    for trial, s in enumerate(_trial_seeds(seed, trials)):
        rng = np.random.default_rng(s)
        if "trajectory_file" in f:
            path = Path(f["trajectory_file"])
            if not path.is_absolute():
                path = Path(scn.get("_base_dir", ".")) / path
            traj = read_trajectory_csv(path)
        elif f.get("trajectory", "walk") == "stationary":
            traj = stationary_trajectory(tuple(f.get("stationary_position_m", (0.0, 0.0))), duration)
        else:
            traj = random_walk_trajectory(rng, duration, speed=f.get("speed_mps", 1.0),
                                          turn_radius=f.get("turn_radius_m", 1.0))
        trace = simulate_follow(traj, noise, cfg, seed=rng, initial_follower=f.get("initial_follower_m"),
                                duration=None if "trajectory_file" in f else duration)
        if trial == 0:
            trace.to_csv(out / "follower_trial0.csv")
            write_trajectory_csv(np.column_stack([trace.time, trace.user]), out / "user_trial0.csv")
        rows.append((trial, trace.rmse(), float(abs(trace.error[-1]))))
    _write_csv(out / "follow.csv", ["trial", "rmse_m", "final_abs_error_m"], rows)
    stats = _summary_stats([r[1] for r in rows])
    violations = []
    _check_upper(violations, scn.get("bounds", {}), "median_rmse_m", stats["median"], "median RMSE (m)")
    return {"metric": "rmse_m", **stats}, violations


def run_calibrate(scn, trials, seed, out: Path, workers=1):
    if "calibration_link" not in scn:
        raise ScenarioError("calibrate needs a calibration_link object with distance_m")
    dist = scn["calibration_link"]["distance_m"]
    plan, grid, cfg, imp = build_plan(scn), build_grid(scn), build_solver_config(scn), build_impairments(scn)
    scene = Scene((dist, 0.0), [(0.0, 0.0)])
    paths = [paths_from_scene(scene, 0)]
    per_band: dict[int, list] = {}
    for s in _trial_seeds(seed, trials):
        meas = synthesize_paths_sweep(paths, plan, imp, seed=s)
        for c in zero_subcarrier_channels(meas, mode="reciprocal", kappa=1.0):
            per_band.setdefault(c.band_index, []).append(c)
    channels = [average_sweeps(per_band[b]) for b in sorted(per_band)]
    record = calibrate(channels, plan, dist / SPEED_OF_LIGHT, paths[0][0].amplitude.real, grid, cfg)
    record.to_json(out / "calibration.json")
    k = complex(record.kappa)
    summary = {"metric": "calibration", "offset_ns": record.offset * 1e9, "kappa": [k.real, k.imag],
               "kappa_phase_rad": float(np.angle(k)), "kappa_magnitude": float(abs(k))}
    violations = []
    bounds = scn.get("bounds", {})
    if "offset_ns" in bounds:
        tol = bounds.get("offset_tol_ns", 0.1)
        if abs(summary["offset_ns"] - bounds["offset_ns"]) > tol:
            violations.append(f"offset {summary['offset_ns']:.4f} ns not within {tol} of {bounds['offset_ns']}")
    return summary, violations


RUNNERS = {
    "tof": run_tof,
    "profile": run_profile,
    "localize": run_localize,
    "sweep": run_sweep_experiment,
    "follow": run_follow,
    "calibrate": run_calibrate,
}


@dataclass
class ExperimentSpec:
    kind: str
    scenario: str | None = None
    trials: int = 1
    seed: int = 0
    out: str = "out"
    overrides: list[str] = field(default_factory=list)
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass
class RunResult:
    status: int
    summary: dict
    violations: list[str]


def run(spec: ExperimentSpec) -> RunResult:
    """Execute an experiment; status 0 when every scenario bound holds, 1 otherwise."""
    scn = load_scenario(spec.scenario, spec.overrides)
    if scn.get("kind") not in (None, spec.kind):
        raise ScenarioError(f"scenario is for kind {scn['kind']!r}, not {spec.kind!r}")
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    summary, violations = RUNNERS[spec.kind](scn, spec.trials, spec.seed, out, spec.workers)
    summary = {
        "kind": spec.kind,
        "scenario": None if spec.scenario is None else Path(spec.scenario).name,
        "trials": spec.trials,
        "seed": spec.seed,
        "overrides": list(spec.overrides),
        **summary,
        "violations": violations,
        "passed": not violations,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return RunResult(0 if not violations else 1, summary, violations)
