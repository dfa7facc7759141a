"""Wi-Fi band plans: center frequencies, OFDM subcarrier grids, and the
delay range over which a set of center frequencies is unambiguous.

The default plan is the US 802.11 20 MHz channelization: 2.4 GHz channels
1-11 plus the 24 UNII/DFS channels at 5 GHz, 35 bands in total.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SUBCARRIER_SPACING_HZ = 312.5e3
MEASURED_SUBCARRIERS = tuple(k for k in range(-15, 16) if k != 0)

CHANNELS_24GHZ = tuple(range(1, 12))
CHANNELS_5GHZ = (
    tuple(range(36, 65, 4))  # UNII-1/2
    + tuple(range(100, 141, 4))  # UNII-2e (DFS)
    + tuple(range(149, 166, 4))  # UNII-3
)


class InvalidSubcarrierError(ValueError):
    pass


def channel_center_hz(channel: int) -> float:
    """Center frequency of an 802.11 channel number (2.4 or 5 GHz)."""
    if 1 <= channel <= 13:
        return 2407e6 + 5e6 * channel
    if channel == 14:
        return 2484e6
    return 5000e6 + 5e6 * channel


@dataclass(frozen=True)
class Band:
    index: int
    center_frequency: float
    subcarrier_spacing: float = SUBCARRIER_SPACING_HZ
    subcarrier_indices: tuple[int, ...] = MEASURED_SUBCARRIERS

    def __post_init__(self):
        if self.center_frequency <= 0:
            raise ValueError("center_frequency must be positive")
        if self.subcarrier_spacing <= 0:
            raise ValueError("subcarrier_spacing must be positive")
        if len(set(self.subcarrier_indices)) != len(self.subcarrier_indices):
            raise ValueError("subcarrier indices must be distinct")
        object.__setattr__(self, "subcarrier_indices", tuple(int(k) for k in self.subcarrier_indices))

    @property
    def is_24ghz(self) -> bool:
        return self.center_frequency < 3e9

    def subcarrier_frequencies(self) -> np.ndarray:
        k = np.asarray(self.subcarrier_indices, dtype=float)
        return self.center_frequency + k * self.subcarrier_spacing


@dataclass(frozen=True)
class BandPlan:
    bands: tuple[Band, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "bands", tuple(self.bands))
        centers = [b.center_frequency for b in self.bands]
        if len(set(centers)) != len(centers):
            raise ValueError("band center frequencies must be pairwise distinct")

    def __len__(self):
        return len(self.bands)

    def __iter__(self):
        return iter(self.bands)

    def __getitem__(self, i):
        return self.bands[i]

    @property
    def center_frequencies(self) -> np.ndarray:
        return np.array([b.center_frequency for b in self.bands])

    def band(self, index: int) -> Band:
        for b in self.bands:
            if b.index == index:
                return b
        raise KeyError(f"no band with index {index}")

    def subset(self, predicate) -> "BandPlan":
        return BandPlan(tuple(b for b in self.bands if predicate(b)))

    def to_dict(self) -> dict:
        return {
            "bands": [
                {
                    "index": b.index,
                    "center_hz": b.center_frequency,
                    "spacing_hz": b.subcarrier_spacing,
                    "subcarriers": list(b.subcarrier_indices),
                }
                for b in self.bands
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BandPlan":
        try:
            bands = [
                Band(
                    index=int(entry["index"]),
                    center_frequency=float(entry["center_hz"]),
                    subcarrier_spacing=float(entry.get("spacing_hz", SUBCARRIER_SPACING_HZ)),
                    subcarrier_indices=tuple(entry.get("subcarriers", MEASURED_SUBCARRIERS)),
                )
                for entry in data["bands"]
            ]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed band plan: {exc!r}") from exc
        return cls(tuple(bands))

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def from_json(cls, path: str | Path) -> "BandPlan":
        return cls.from_dict(json.loads(Path(path).read_text()))


def default_band_plan() -> BandPlan:
    """The 35-band US plan (11 at 2.4 GHz, 24 at 5 GHz incl. DFS)."""
    channels = CHANNELS_24GHZ + CHANNELS_5GHZ
    return BandPlan(tuple(Band(index=i, center_frequency=channel_center_hz(ch)) for i, ch in enumerate(channels)))


def subcarrier_frequency(band: Band, k: int) -> float:
    if k != 0 and k not in band.subcarrier_indices:
        raise InvalidSubcarrierError(f"subcarrier {k} not in band {band.index}")
    return band.center_frequency + k * band.subcarrier_spacing


def phase_mismatch(frequencies, separations) -> np.ndarray:
    """Worst-case per-band phase difference between delays ``separations`` apart.

    Returns, for every separation, ``max_i |wrap(2*pi*f_i*sep)|`` in radians.
    """
    f = np.asarray(frequencies, dtype=float)
    sep = np.atleast_1d(np.asarray(separations, dtype=float))
    cycles = np.multiply.outer(sep, f)
    frac = cycles - np.round(cycles)
    return 2 * np.pi * np.abs(frac).max(axis=1)


def unambiguous_range(
    plan: BandPlan,
    phase_tolerance: float = 0.1,
    grid_step: float = 0.05e-9,
    max_delay: float = 5e-6,
    chunk: int = 1 << 15,
) -> float:
    """Smallest delay separation on the grid at which the plan aliases.

    Two delays whose difference is a multiple of ``grid_step`` are
    indistinguishable when every center-frequency phase agrees within
    ``phase_tolerance``. Separations inside the trivial basin around zero
    are skipped. If no alias is found below ``max_delay`` that value is
    returned, so the result is then a lower bound.
    """
    if len(plan) == 0:
        raise ValueError("plan is empty")
    f = plan.center_frequencies
    n_total = int(np.floor(max_delay / grid_step))
    left_basin = False
    start = 1
    while start <= n_total:
        k = np.arange(start, min(start + chunk, n_total + 1))
        ambiguous = phase_mismatch(f, k * grid_step) < phase_tolerance
        if not left_basin:
            clear = np.flatnonzero(~ambiguous)
            if clear.size == 0:
                start += chunk
                continue
            left_basin = True
            ambiguous[: clear[0]] = False
        hits = np.flatnonzero(ambiguous)
        if hits.size:
            return float(k[hits[0]] * grid_step)
        start += chunk
    return float(max_delay)
