"""One-time calibration of the reciprocity constant and a fixed ToF offset.

Against a device at a known distance the combined channel on band i is
``kappa * a^2 * exp(-j 4 pi f_i (tof + offset))``. The offset comes from a
continuous refinement of the delay around the on-grid profile peak, and
kappa from the residual common phase and gain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import CalibrationError
from .solver import DelayGrid, SolverConfig, estimate_tof


@dataclass(frozen=True)
class CalibrationRecord:
    offset: float = 0.0  # seconds subtracted from every ToF estimate
    kappa: complex = 1.0

    def __post_init__(self):
        if complex(self.kappa) == 0:
            raise CalibrationError("kappa must be nonzero")

    def to_dict(self) -> dict:
        k = complex(self.kappa)
        return {"offset_ns": self.offset * 1e9, "kappa": [k.real, k.imag]}

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationRecord":
        try:
            k = data.get("kappa", [1.0, 0.0])
            kappa = complex(k[0], k[1]) if isinstance(k, (list, tuple)) else complex(k)
            return cls(offset=float(data.get("offset_ns", 0.0)) * 1e-9, kappa=kappa)
        except (TypeError, ValueError, IndexError) as exc:
            raise CalibrationError(f"malformed calibration record: {exc}") from exc

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "CalibrationRecord":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _coherence(z, f, exponent, tau):
    return np.abs(np.sum(z * np.exp(2j * np.pi * f * exponent * tau)))


def calibrate(
    band_channels,
    plan,
    known_tof: float,
    path_amplitude: float = 1.0,
    grid: DelayGrid | None = None,
    config: SolverConfig | None = None,
) -> CalibrationRecord:
    """Offset and kappa from combined channels of a known-distance link.

    ``band_channels`` must be reciprocity products (exponent 2) formed with
    kappa = 1. ``path_amplitude`` is the direct-path amplitude expected at
    the known distance; it fixes the magnitude of kappa.
    """
    grid = grid or DelayGrid()
    exps = {c.exponent for c in band_channels}
    if exps != {2}:
        raise CalibrationError("calibration expects exponent-2 reciprocity products")
    if path_amplitude <= 0:
        raise CalibrationError("path_amplitude must be positive")
    est, _ = estimate_tof(band_channels, plan, grid, config)
    f = np.array([plan.band(c.band_index).center_frequency for c in band_channels])
    z = np.array([c.value for c in band_channels])
    # the on-grid peak sits within half a grid step (in squared-delay units)
    half = grid.step / 2
    res = minimize_scalar(
        lambda tau: -_coherence(z, f, 2, tau),
        bounds=(max(est.seconds - half, 0.0), est.seconds + half),
        method="bounded",
        options={"xatol": 1e-15},
    )
    tau = float(res.x)
    common = np.mean(z * np.exp(4j * np.pi * f * tau))
    kappa = common / path_amplitude**2
    if kappa == 0:
        raise CalibrationError("calibration link returned a zero channel")
    return CalibrationRecord(offset=tau - known_tof, kappa=complex(kappa))
