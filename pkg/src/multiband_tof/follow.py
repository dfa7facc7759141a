"""Distance-keeping follower driven by noisy range measurements."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import median_abs_deviation, theilslopes

from .errors import InsufficientDataError

CONTROL_RATE_HZ = 12.0


@dataclass(frozen=True)
class TrackerConfig:
    """Controller and filter settings.

    ``window`` past measurements are motion-compensated, projected to the
    current tick with a robust range-rate fit over the last ``rate_window``
    samples (None: same as ``window``; skipped when ``window`` is 1),
    outlier filtered and averaged. ``feedforward`` adds the fitted range rate to the
    proportional step so a steadily walking user does not cause a lag.
    """

    target_distance: float = 1.4
    step_gain: float = 0.6
    max_step: float = 0.3
    window: int = 12
    outlier_sigma: float = 3.0
    feedforward: bool = True
    rate_window: int | None = 36

    def __post_init__(self):
        if self.target_distance <= 0:
            raise ValueError("target_distance must be positive")
        if not 0 < self.step_gain <= 1:
            raise ValueError("step_gain must lie in (0, 1]")
        if self.max_step <= 0:
            raise ValueError("max_step must be positive")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.rate_window is not None and self.rate_window < 1:
            raise ValueError("rate_window must be >= 1")

    @property
    def effective_rate_window(self) -> int:
        return self.window if self.rate_window is None else self.rate_window


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian range noise plus occasional gross outliers."""

    sigma: float = 0.15
    outlier_probability: float = 0.0
    outlier_scale: float = 3.0

    def sample(self, rng, true_distance: float) -> float:
        m = true_distance + self.sigma * rng.standard_normal()
        if self.outlier_probability and rng.random() < self.outlier_probability:
            m += self.outlier_scale * rng.standard_normal()
        return max(m, 0.0)


def controller_step(measured_distance: float, config: TrackerConfig) -> float:
    """Signed step along the follower-to-device bearing; positive moves closer."""
    cmd = config.step_gain * (measured_distance - config.target_distance)
    return float(np.clip(cmd, -config.max_step, config.max_step))


def robust_distance(samples, config: TrackerConfig) -> float:
    """Mean of the samples within ``outlier_sigma`` scaled MADs of the median."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise InsufficientDataError("empty measurement window")
    med = np.median(x)
    mad = median_abs_deviation(x, scale="normal")
    keep = np.abs(x - med) <= config.outlier_sigma * mad
    if not keep.any():
        keep = x == med
    if not keep.any():
        return float(med)
    return float(x[keep].mean())


def _position_at(traj: np.ndarray, t: float) -> np.ndarray:
    return np.array([np.interp(t, traj[:, 0], traj[:, 1]), np.interp(t, traj[:, 0], traj[:, 2])])


@dataclass
class FollowTrace:
    time: np.ndarray
    true_distance: np.ndarray
    follower: np.ndarray  # positions after each tick's command, N x 2
    user: np.ndarray
    measured: np.ndarray
    estimate: np.ndarray
    target_distance: float

    @property
    def error(self) -> np.ndarray:
        return self.true_distance - self.target_distance

    def rmse(self, skip: int = 0) -> float:
        return float(np.sqrt(np.mean(self.error[skip:] ** 2)))

    def to_csv(self, path: str | Path) -> None:
        """Follower trajectory as (t, x, y)."""
        write_trajectory_csv(np.column_stack([self.time, self.follower]), path)


def simulate_follow(
    trajectory,
    noise: NoiseModel | None = None,
    config: TrackerConfig | None = None,
    seed=None,
    rate_hz: float = CONTROL_RATE_HZ,
    initial_follower=None,
    duration: float | None = None,
) -> FollowTrace:
    """Closed-loop follow simulation at a fixed control rate.

    ``trajectory`` is an array of (t, x, y) user waypoints, linearly
    interpolated. Each tick measures the current distance, updates the
    estimate and commands a step along the (known) bearing to the user.
    The follower starts at the target distance on the user's -x side
    unless ``initial_follower`` is given.
    """
    noise = noise or NoiseModel()
    config = config or TrackerConfig()
    rng = np.random.default_rng(seed)
    traj = np.asarray(trajectory, dtype=float)
    if traj.ndim != 2 or traj.shape[1] != 3:
        raise ValueError("trajectory must be an N x 3 array of (t, x, y)")
    t0 = traj[0, 0]
    span = traj[-1, 0] - t0 if duration is None else duration
    n_ticks = int(np.floor(span * rate_hz + 1e-9)) + 1
    dt = 1.0 / rate_hz

    user0 = _position_at(traj, t0)
    follower = (
        np.asarray(initial_follower, dtype=float)
        if initial_follower is not None
        else user0 - np.array([config.target_distance, 0.0])
    )

    times, true_d, fol, usr, meas, est = [], [], [], [], [], []
    hist_t, hist_user = [], []
    for i in range(n_ticks):
        t = t0 + i * dt
        user = _position_at(traj, t)
        diff = user - follower
        d = float(np.linalg.norm(diff))
        bearing = diff / d if d > 0 else np.array([1.0, 0.0])
        m = noise.sample(rng, d)

        # past ranges re-expressed from the follower's current position
        hist_t.append(t)
        hist_user.append(follower + m * bearing)
        keep = max(config.window, config.effective_rate_window)
        hist_t, hist_user = hist_t[-keep:], hist_user[-keep:]
        ht = np.asarray(hist_t)
        # signed projection on the current bearing stays linear in time even
        # when an old user position now lies behind the follower
        r = (np.asarray(hist_user) - follower) @ bearing
        rate = 0.0
        nr = config.effective_rate_window
        if config.window > 1 and nr > 2 and len(r) > 2:
            rate = theilslopes(r[-nr:], ht[-nr:])[0]
        r, ht = r[-config.window :], ht[-config.window :]
        estimate = robust_distance(r + rate * (t - ht), config)

        step = config.step_gain * (estimate - config.target_distance)
        if config.feedforward:
            step += rate * dt
        step = float(np.clip(step, -config.max_step, config.max_step))
        follower = follower + step * bearing

        times.append(t)
        true_d.append(d)
        fol.append(follower.copy())
        usr.append(user)
        meas.append(m)
        est.append(estimate)

    return FollowTrace(
        time=np.array(times),
        true_distance=np.array(true_d),
        follower=np.array(fol),
        user=np.array(usr),
        measured=np.array(meas),
        estimate=np.array(est),
        target_distance=config.target_distance,
    )


def stationary_trajectory(position=(0.0, 0.0), duration: float = 5.0) -> np.ndarray:
    return np.array([[0.0, *position], [duration, *position]], dtype=float)


def random_walk_trajectory(
    rng,
    duration: float = 60.0,
    speed: float = 1.0,
    segment_range: tuple[float, float] = (3.0, 8.0),
    turn_radius: float = 1.0,
    sample_dt: float = 0.02,
) -> np.ndarray:
    """Walk of straight segments joined by circular turns, at constant speed.

    Segment lengths are uniform in ``segment_range``; each turn is uniform
    in (-pi, pi) and taken on an arc of ``turn_radius`` (0 turns in place,
    which no walking person can do at speed).
    """
    rng = np.random.default_rng(rng)
    pos = np.zeros(2)
    heading = rng.uniform(0, 2 * np.pi)
    t = 0.0
    pts = [(t, *pos)]
    while t < duration:
        length = rng.uniform(*segment_range)
        pos = pos + length * np.array([np.cos(heading), np.sin(heading)])
        t += length / speed
        pts.append((t, *pos))
        turn = rng.uniform(-np.pi, np.pi)
        if turn_radius <= 0:
            heading += turn
            continue
        n = max(int(np.ceil(abs(turn) * turn_radius / speed / sample_dt)), 1)
        step = turn / n
        for _ in range(n):
            # chord of the arc for this small heading change
            chord = 2 * turn_radius * np.sin(abs(step) / 2)
            mid = heading + step / 2
            pos = pos + chord * np.array([np.cos(mid), np.sin(mid)])
            heading += step
            t += abs(step) * turn_radius / speed
            pts.append((t, *pos))
    return np.array(pts)


def write_trajectory_csv(rows, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y"])
        for t, x, y in np.asarray(rows, dtype=float):
            writer.writerow([repr(float(t)), repr(float(x)), repr(float(y))])


def read_trajectory_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"t", "x", "y"} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"trajectory CSV missing columns {sorted(missing)}")
        rows = [(float(r["t"]), float(r["x"]), float(r["y"])) for r in reader]
    if len(rows) < 1:
        raise InsufficientDataError("trajectory CSV has no rows")
    return np.array(rows)
