"""Keeping a fixed distance to a walking user from noisy ranges.

Run: python3 notebooks/05_follow_me.py [out_dir]
Writes user and follower trajectories as (t, x, y) CSV.
"""

import sys
from pathlib import Path

import numpy as np

from multiband_tof import TrackerConfig, simulate_follow
from multiband_tof.follow import NoiseModel, random_walk_trajectory, stationary_trajectory, write_trajectory_csv

out = Path(sys.argv[1] if len(sys.argv) > 1 else "out/notebooks")
out.mkdir(parents=True, exist_ok=True)

# a still user: the error shrinks by (1 - gain) per tick once inside the clamp
still = simulate_follow(stationary_trajectory((0, 0), 2.0), NoiseModel(0.0), TrackerConfig(),
                        initial_follower=(-2.4, 0.0))
print("stationary error (cm) per tick:", np.round(still.error[:10] * 100, 3))

traj = random_walk_trajectory(np.random.default_rng(0), duration=60.0)
noise = NoiseModel(sigma=0.15)
for window in (1, 4, 12):
    trace = simulate_follow(traj, noise, TrackerConfig(window=window), seed=0, duration=60.0)
    print(f"window {window:2d}: distance RMSE {trace.rmse() * 100:.1f} cm")
    if window == 12:
        trace.to_csv(out / "follower.csv")
        write_trajectory_csv(np.column_stack([trace.time, trace.user]), out / "user.csv")

# the same loop without the range-rate feedforward lags a walking user
lag = simulate_follow(traj, noise, TrackerConfig(window=12, feedforward=False), seed=0, duration=60.0)
print(f"window 12 without feedforward: {lag.rmse() * 100:.1f} cm")
