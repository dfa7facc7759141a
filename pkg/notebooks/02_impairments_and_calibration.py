"""Hardware impairments the pipeline removes, and the one-time calibration.

Run: python3 notebooks/02_impairments_and_calibration.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from multiband_tof import ImpairmentConfig, PathComponent, Scene, calibrate, default_band_plan, estimate_tof
from multiband_tof.channel import SPEED_OF_LIGHT, synthesize_paths_sweep, synthesize_sweep, true_channel
from multiband_tof.csi import interpolate_zero_subcarrier, zero_subcarrier_channels

out = Path(sys.argv[1] if len(sys.argv) > 1 else "out/notebooks")
out.mkdir(parents=True, exist_ok=True)
plan = default_band_plan()
paths = [PathComponent(12e-9, 1.0), PathComponent(19e-9, 0.5j)]

# packet detection delay tilts the phase across subcarriers but not at k=0
m = synthesize_paths_sweep([paths], plan, ImpairmentConfig.ideal(detection_delay_median=180e-9))[0]
slope = np.polyfit(m.subcarriers, np.unwrap(np.angle(m.values)), 1)[0]
h0 = true_channel(paths, plan[0].center_frequency)
print(f"phase slope across subcarriers: {slope:.3f} rad/subcarrier")
print(f"k=0 phase error after interpolation: {abs(np.angle(interpolate_zero_subcarrier(m) / h0)):.2e} rad")

# carrier offset rotates forward and reverse CSI in opposite senses; their
# product does not depend on it
for cfo in (0.0, 25e3, -50e3):
    imp = ImpairmentConfig(cfo_hz=cfo)
    ch = zero_subcarrier_channels(synthesize_paths_sweep([paths], plan, imp, seed=1))
    print(f"CFO {cfo / 1e3:+6.1f} kHz: band-0 product phase {np.angle(ch[0].value):+.9f} rad")

# hardware adds a fixed delay and a reciprocity constant; calibrate once on a
# link of known length, then reuse the record
hw = ImpairmentConfig(hardware_delay=30e-9, kappa=0.9 * np.exp(0.6j), snr_db=30)
link = Scene((3.0, 0.0), [(0.0, 0.0)])
record = calibrate(zero_subcarrier_channels(synthesize_sweep(link, plan, hw, seed=2)), plan,
                   3.0 / SPEED_OF_LIGHT, path_amplitude=1 / 3)
record.to_json(out / "calibration.json")
print(f"\ncalibration: offset {record.offset * 1e9:.3f} ns, kappa {record.kappa:.3f}")

target = Scene((4.0, 2.5), [(0.0, 0.0)])
chans = zero_subcarrier_channels(synthesize_sweep(target, plan, hw, seed=3), kappa=record.kappa)
est, _ = estimate_tof(chans, plan)
print(f"distance to a device at {np.hypot(4, 2.5):.3f} m: "
      f"raw {est.seconds * SPEED_OF_LIGHT:.3f} m, calibrated {(est.seconds - record.offset) * SPEED_OF_LIGHT:.3f} m")
