import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multiband_tof.errors import InsufficientDataError
from multiband_tof.follow import (
    CONTROL_RATE_HZ,
    NoiseModel,
    TrackerConfig,
    controller_step,
    random_walk_trajectory,
    read_trajectory_csv,
    robust_distance,
    simulate_follow,
    stationary_trajectory,
    write_trajectory_csv,
)

NO_NOISE = NoiseModel(sigma=0.0)


def test_controller_step_sign_and_clamp():
    cfg = TrackerConfig(target_distance=1.4, step_gain=0.5, max_step=0.3)
    assert controller_step(1.6, cfg) == pytest.approx(0.1)
    assert controller_step(1.2, cfg) == pytest.approx(-0.1)
    assert controller_step(5.0, cfg) == 0.3
    assert controller_step(0.0, cfg) == -0.3


def test_robust_distance_rejects_outlier():
    cfg = TrackerConfig(outlier_sigma=3.0)
    x = [1.0, 1.02, 0.98, 1.01, 0.99, 9.0]
    assert robust_distance(x, cfg) == pytest.approx(1.0, abs=1e-9)
    assert robust_distance([2.0, 2.0, 2.0], cfg) == 2.0
    with pytest.raises(InsufficientDataError):
        robust_distance([], cfg)


def test_config_validation():
    for kw in ({"target_distance": 0}, {"step_gain": 0}, {"step_gain": 1.5}, {"window": 0}, {"max_step": 0}):
        with pytest.raises(ValueError):
            TrackerConfig(**kw)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(-1.0, 1.0), st.integers(1, 12))
def test_stationary_error_contracts_geometrically(gain, offset, window):
    cfg = TrackerConfig(step_gain=gain, window=window, max_step=10.0)
    start = np.array([-(1.4 + offset), 0.0])
    trace = simulate_follow(stationary_trajectory((0.0, 0.0), 3.0), NO_NOISE, cfg, initial_follower=start)
    # trace.error[i] is measured before tick i's step
    err = np.abs(np.concatenate([[offset], trace.error[1:]]))
    ratios = err[1:8] / np.maximum(err[:7], 1e-300)
    assert np.all(err[1:] <= err[:-1] + 1e-12)
    mask = err[:7] > 1e-9
    np.testing.assert_allclose(ratios[mask], 1 - gain, atol=1e-6)


def test_clamped_steps_still_converge():
    cfg = TrackerConfig(max_step=0.3)
    trace = simulate_follow(stationary_trajectory((0.0, 0.0), 4.0), NO_NOISE, cfg, initial_follower=(-4.0, 0.0))
    assert abs(trace.error[-1]) < 1e-6


def test_averaging_helps_stationary_user():
    traj = stationary_trajectory((0.0, 0.0), 30.0)
    rmse = {}
    for w in (1, 4, 12):
        rmse[w] = [simulate_follow(traj, NoiseModel(0.15), TrackerConfig(window=w), seed=s).rmse(12) for s in range(12)]
    assert np.mean(rmse[4]) <= np.mean(rmse[1])
    assert np.mean(rmse[12]) <= np.mean(rmse[4])


def test_walk_trajectory_speed_and_duration():
    traj = random_walk_trajectory(np.random.default_rng(0), duration=30.0, speed=1.0)
    assert traj[-1, 0] >= 30.0
    step = np.linalg.norm(np.diff(traj[:, 1:], axis=0), axis=1)
    dt = np.diff(traj[:, 0])
    np.testing.assert_allclose(step / dt, 1.0, rtol=1e-3)


def test_simulation_timing_and_determinism():
    traj = random_walk_trajectory(np.random.default_rng(1), duration=10.0)
    a = simulate_follow(traj, NoiseModel(0.15), seed=3, duration=10.0)
    b = simulate_follow(traj, NoiseModel(0.15), seed=3, duration=10.0)
    assert len(a.time) == int(10.0 * CONTROL_RATE_HZ) + 1
    np.testing.assert_allclose(np.diff(a.time), 1 / CONTROL_RATE_HZ)
    assert np.array_equal(a.follower, b.follower)


def test_outliers_are_filtered():
    traj = random_walk_trajectory(np.random.default_rng(2), duration=30.0)
    noise = NoiseModel(0.15, outlier_probability=0.05, outlier_scale=3.0)
    robust = simulate_follow(traj, noise, TrackerConfig(), seed=0).rmse(12)
    assert robust < 0.15


def test_trajectory_csv_round_trip(tmp_path):
    traj = random_walk_trajectory(np.random.default_rng(0), duration=5.0)
    path = tmp_path / "t.csv"
    write_trajectory_csv(traj, path)
    assert path.read_text().splitlines()[0] == "t,x,y"
    np.testing.assert_array_equal(read_trajectory_csv(path), traj)
    bad = tmp_path / "bad.csv"
    bad.write_text("t,x\n0,1\n")
    with pytest.raises(ValueError):
        read_trajectory_csv(bad)
