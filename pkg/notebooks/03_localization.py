"""Locating a device from three antennas, and the effect of antenna spread.

Run: python3 notebooks/03_localization.py [out_dir]
Writes a per-trial CSV and an error CDF per spread.
"""

import sys
from pathlib import Path

import numpy as np

from multiband_tof import ImpairmentConfig, default_band_plan, estimate_tof, zero_subcarrier_channels
from multiband_tof.channel import SPEED_OF_LIGHT, random_scene, synthesize_sweep
from multiband_tof.localization import (
    distances_from_tofs,
    geometric_outlier_reject,
    localize,
    triangle_anchors,
    write_localization_csv,
)

out = Path(sys.argv[1] if len(sys.argv) > 1 else "out/notebooks")
out.mkdir(parents=True, exist_ok=True)
plan = default_band_plan()

# one full pipeline run: 5-path room, 20 dB, three antennas 30 cm apart
anchors = triangle_anchors(0.3)
scene = random_scene(np.random.default_rng(4), n_paths=5, rx_antenna_positions=anchors, distance_range=(2, 6))
sweep = synthesize_sweep(scene, plan, ImpairmentConfig(snr_db=20), seed=4)
tofs = [estimate_tof(zero_subcarrier_channels(sweep, antenna=a), plan)[0] for a in range(3)]
d = distances_from_tofs(tofs)
pos = localize(geometric_outlier_reject(d, anchors), anchors)
truth = np.array(scene.tx_position)
print("distances (m):", np.round(d.meters, 3), " true:", np.round(np.linalg.norm(anchors - truth, axis=1), 3))
print(f"estimate ({pos.x:.3f}, {pos.y:.3f}) vs truth ({truth[0]:.3f}, {truth[1]:.3f})")

# range errors turn into position errors roughly in proportion to
# distance / antenna spread; compare two spreads on the same noise draws
rng = np.random.default_rng(0)
sigma = 0.03  # meters of range noise per antenna
for spread in (0.3, 1.0):
    rows = []
    layout = triangle_anchors(spread)
    for trial in range(300):
        r, theta = rng.uniform(1, 10), rng.uniform(0, 2 * np.pi)
        dev = r * np.array([np.cos(theta), np.sin(theta)])
        noisy = np.linalg.norm(layout - dev, axis=1) + sigma * rng.standard_normal(3)
        est = localize(distances_from_tofs(noisy / SPEED_OF_LIGHT), layout)
        rows.append((trial, dev[0], dev[1], est.x, est.y))
    write_localization_csv(rows, out / f"localization_{int(spread * 100)}cm.csv")
    err = [np.hypot(r[3] - r[1], r[4] - r[2]) for r in rows]
    print(f"spread {spread * 100:.0f} cm: median error {np.median(err) * 100:.1f} cm, "
          f"p95 {np.percentile(err, 95) * 100:.1f} cm")
