"""The band-hopping handshake: timing, losses and recovery.

Run: python3 notebooks/04_channel_hopping.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from multiband_tof import ProtocolConfig, run_sweep
from multiband_tof.hopping import sweep_duration_cdf

out = Path(sys.argv[1] if len(sys.argv) > 1 else "out/notebooks")
out.mkdir(parents=True, exist_ok=True)

clean = run_sweep(config=ProtocolConfig(), seed=0)
print(f"no loss: {clean.total_duration * 1e3:.1f} ms for {len(clean.capture_times)} bands")

# deliverable transmissions 0-7 are the four measurement exchanges on the
# first band, 8 is the hop request and 9 its ACK; dropping the ACK leaves
# the two ends on different bands until they time out and regroup
lossy = run_sweep(config=ProtocolConfig(loss_pattern=frozenset({9})), seed=0)
lossy.to_csv(out / "hop_trace_lost_ack.csv")
for t, node, kind, band in lossy.events:
    if "timeout" in kind or "lost" in kind or "default" in kind:
        print(f"  {t * 1e3:7.3f} ms  {node}  {kind:15s} band {band}")
print(f"one lost ACK: {lossy.total_duration * 1e3:.1f} ms, synchronized={lossy.synchronized}")

for p in (0.01, 0.05, 0.1, 0.2):
    d = sweep_duration_cdf(ProtocolConfig(loss_probability=p), trials=300, seed=1) * 1e3
    print(f"loss {p:4.2f}: median {np.median(d):6.1f} ms, p95 {np.percentile(d, 95):6.1f} ms")

for dwell in (2.4e-3, 3.0e-3):
    t = run_sweep(config=ProtocolConfig(dwell=dwell)).total_duration
    print(f"dwell {dwell * 1e3:.1f} ms -> sweep {t * 1e3:.1f} ms")
