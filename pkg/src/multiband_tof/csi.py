"""Per-band zero-subcarrier channels from raw CSI sweeps.

Packet detection delay adds a phase ramp that vanishes at the (unmeasured)
zero subcarrier, so interpolating to k=0 removes it. Carrier frequency
offset rotates forward and reverse CSI in opposite directions, so their
product is CFO-free at equal timestamps.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .channel import FORWARD, REVERSE, CsiMeasurement
from .errors import CalibrationError, InconsistentInputError, InsufficientDataError

MIN_SUBCARRIERS_PER_SIDE = 4


@dataclass(frozen=True)
class BandChannel:
    """Zero-subcarrier channel of one band raised to ``exponent``.

    exponent 1 is the raw channel, 2 the reciprocity product, 4 its square.
    """

    band_index: int
    value: complex
    exponent: int = 1
    antenna: int = 0

    def __post_init__(self):
        if self.exponent not in (1, 2, 4):
            raise ValueError("exponent must be 1, 2 or 4")


def _unwrap_outward(k: np.ndarray, phase: np.ndarray) -> np.ndarray:
    pos = k > 0
    neg = k < 0
    out = np.empty_like(phase)
    p_idx = np.flatnonzero(pos)[np.argsort(k[pos])]
    n_idx = np.flatnonzero(neg)[np.argsort(-k[neg])]
    out[p_idx] = np.unwrap(phase[p_idx])
    n_phase = np.unwrap(phase[n_idx])
    # bridge the k=0 gap: extrapolate the positive side's innermost slope
    slope = out[p_idx[1]] - out[p_idx[0]]
    predicted = out[p_idx[0]] + slope * (k[n_idx[0]] - k[p_idx[0]]) / (k[p_idx[1]] - k[p_idx[0]])
    n_phase += 2 * np.pi * np.round((predicted - n_phase[0]) / (2 * np.pi))
    out[n_idx] = n_phase
    return out


def interpolate_zero_subcarrier(m: CsiMeasurement) -> complex:
    """Cubic-spline estimate of the channel at k=0.

    Unwrapped phase and magnitude are splined separately across the
    subcarrier index and recombined.
    """
    k = np.asarray(m.subcarriers)
    values = np.asarray(m.values)
    if (k > 0).sum() < MIN_SUBCARRIERS_PER_SIDE or (k < 0).sum() < MIN_SUBCARRIERS_PER_SIDE:
        raise InsufficientDataError(
            f"need {MIN_SUBCARRIERS_PER_SIDE} subcarriers on each side of k=0, got {(k < 0).sum()}/{(k > 0).sum()}"
        )
    phase = _unwrap_outward(k, np.angle(values))
    order = np.argsort(k)
    ks = k[order].astype(float)
    phi0 = float(CubicSpline(ks, phase[order])(0.0))
    mag0 = max(float(CubicSpline(ks, np.abs(values)[order])(0.0)), 0.0)
    return mag0 * np.exp(1j * phi0)


def reciprocal_combine(fwd: complex, rev: complex, kappa: complex = 1.0, band_index: int = 0, antenna: int = 0) -> BandChannel:
    """``fwd * rev / kappa``: the squared channel with CFO cancelled."""
    if kappa == 0:
        raise CalibrationError("kappa must be nonzero")
    return BandChannel(band_index, complex(fwd) * complex(rev) / complex(kappa), exponent=2, antenna=antenna)


def quartic_combine(channels):
    """Square exponent-2 band channels into exponent 4.

    Accepts a single :class:`BandChannel` or an iterable of them.
    """
    if isinstance(channels, BandChannel):
        if channels.exponent != 2:
            raise InconsistentInputError("quartic_combine expects exponent-2 input")
        return BandChannel(channels.band_index, channels.value**2, exponent=4, antenna=channels.antenna)
    return [quartic_combine(c) for c in channels]


def average_sweeps(channels: Sequence[BandChannel]) -> BandChannel:
    if not channels:
        raise InsufficientDataError("nothing to average")
    first = channels[0]
    for c in channels[1:]:
        if c.exponent != first.exponent:
            raise InconsistentInputError("cannot average channels with different exponents")
        if c.band_index != first.band_index or c.antenna != first.antenna:
            raise InconsistentInputError("cannot average channels from different bands/antennas")
    value = complex(np.mean([c.value for c in channels]))
    return BandChannel(first.band_index, value, first.exponent, first.antenna)


def zero_subcarrier_channels(
    measurements: Iterable[CsiMeasurement],
    mode: str = "reciprocal",
    kappa: complex = 1.0,
    antenna: int = 0,
) -> list[BandChannel]:
    """Run interpolation, combining and per-band averaging on a sweep.

    ``mode`` is ``"forward"`` (exponent 1, forward CSI only; valid only
    without CFO), ``"reciprocal"`` (exponent 2) or ``"quartic"``
    (exponent 4 on every band). Returns one channel per band, ordered by
    band index.
    """
    if mode not in ("forward", "reciprocal", "quartic"):
        raise ValueError(f"unknown mode {mode!r}")
    packets: dict[int, dict[int, dict[str, complex]]] = defaultdict(lambda: defaultdict(dict))
    for m in measurements:
        if m.antenna != antenna:
            continue
        packets[m.band_index][m.packet][m.direction] = interpolate_zero_subcarrier(m)

    out = []
    for band in sorted(packets):
        per_packet = []
        for pk in sorted(packets[band]):
            pair = packets[band][pk]
            if mode == "forward":
                if FORWARD in pair:
                    per_packet.append(BandChannel(band, pair[FORWARD], 1, antenna))
                continue
            if FORWARD not in pair or REVERSE not in pair:
                continue
            combined = reciprocal_combine(pair[FORWARD], pair[REVERSE], kappa, band, antenna)
            per_packet.append(quartic_combine(combined) if mode == "quartic" else combined)
        if per_packet:
            out.append(average_sweeps(per_packet))
    if not out:
        raise InsufficientDataError(f"no usable packets for antenna {antenna}")
    return out
