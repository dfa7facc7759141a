"""Ground-truth multipath geometry and synthetic per-subcarrier CSI sweeps.

The simulator is the oracle the estimation pipeline is checked against:
every impairment it injects (packet detection delay, carrier frequency
offset, reciprocity constant, hardware delay, noise) is something the
pipeline must remove or tolerate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .band_plan import BandPlan
from .errors import DegenerateGeometryError

SPEED_OF_LIGHT = 299_792_458.0

FORWARD = "forward"  # measured at the receiver for the transmitter's packet
REVERSE = "reverse"  # measured at the transmitter for the receiver's ACK


@dataclass(frozen=True)
class PathComponent:
    delay: float
    amplitude: complex

    def __post_init__(self):
        if self.delay < 0:
            raise ValueError("path delay must be non-negative")
        if abs(self.amplitude) <= 0:
            raise ValueError("path amplitude must be nonzero")


@dataclass(frozen=True)
class Reflector:
    position: tuple[float, float]
    coefficient: complex = 0.5


@dataclass
class Scene:
    tx_position: tuple[float, float]
    rx_antenna_positions: list[tuple[float, float]]
    reflectors: list[Reflector] = field(default_factory=list)

    def __post_init__(self):
        self.tx_position = tuple(float(v) for v in self.tx_position)
        self.rx_antenna_positions = [tuple(float(v) for v in p) for p in self.rx_antenna_positions]
        if not self.rx_antenna_positions:
            raise ValueError("scene needs at least one receive antenna")
        if len(set(self.rx_antenna_positions)) != len(self.rx_antenna_positions):
            raise ValueError("receive antennas must be pairwise distinct")
        self.reflectors = [
            r if isinstance(r, Reflector) else Reflector(tuple(r[0]), complex(r[1])) for r in self.reflectors
        ]

    def to_dict(self) -> dict:
        return {
            "tx_position_m": list(self.tx_position),
            "rx_antenna_positions_m": [list(p) for p in self.rx_antenna_positions],
            "reflectors": [
                {"position_m": list(r.position), "coefficient": [r.coefficient.real, r.coefficient.imag]}
                for r in self.reflectors
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scene":
        reflectors = []
        for r in data.get("reflectors", []):
            coef = r.get("coefficient", 0.5)
            if isinstance(coef, (list, tuple)):
                coef = complex(coef[0], coef[1])
            reflectors.append(Reflector(tuple(r["position_m"]), complex(coef)))
        return cls(
            tx_position=tuple(data["tx_position_m"]),
            rx_antenna_positions=[tuple(p) for p in data["rx_antenna_positions_m"]],
            reflectors=reflectors,
        )


@dataclass
class ImpairmentConfig:
    """Hardware impairments injected into a synthetic sweep.

    ``cfo_hz`` fixes the transmitter-minus-receiver carrier offset on every
    band; when it is None a fresh offset is drawn uniformly within
    ``+-cfo_ppm`` of the band center on each hop. ``fwd_rev_gap`` separates
    a packet from its ACK; with ``alternate_initiator`` the two devices take
    turns starting the exchange so the gap sign alternates across packets.
    ``gap_jitter`` is the relative standard deviation of that gap.
    """

    detection_delay_median: float = 177e-9
    detection_delay_stddev: float = 24.76e-9
    cfo_hz: float | None = None
    cfo_ppm: float = 20.0
    snr_db: float = float("inf")
    kappa: complex = 1.0
    fwd_rev_gap: float = 0.0
    gap_jitter: float = 0.0
    alternate_initiator: bool = True
    hardware_delay: float = 0.0
    packets_per_band: int = 3
    packet_interval: float = 250e-6
    dwell: float = 2.4e-3
    quirk_phase_step: float | None = None

    def __post_init__(self):
        if not np.isfinite(self.snr_db) and self.snr_db != float("inf"):
            raise ValueError("snr_db must be finite or +inf (noise off)")
        if self.packets_per_band < 1:
            raise ValueError("packets_per_band must be >= 1")
        self.kappa = complex(self.kappa)

    @classmethod
    def ideal(cls, **overrides) -> "ImpairmentConfig":
        """No detection delay, no CFO, no noise, unit kappa."""
        base = cls(detection_delay_median=0.0, detection_delay_stddev=0.0, cfo_hz=0.0, packets_per_band=1)
        return replace(base, **overrides)

    def to_dict(self) -> dict:
        return {
            "detection_delay_median_ns": self.detection_delay_median * 1e9,
            "detection_delay_stddev_ns": self.detection_delay_stddev * 1e9,
            "cfo_hz": self.cfo_hz,
            "cfo_ppm": self.cfo_ppm,
            "snr_db": None if np.isinf(self.snr_db) else self.snr_db,
            "kappa": [self.kappa.real, self.kappa.imag],
            "fwd_rev_gap_us": self.fwd_rev_gap * 1e6,
            "gap_jitter": self.gap_jitter,
            "alternate_initiator": self.alternate_initiator,
            "hardware_delay_ns": self.hardware_delay * 1e9,
            "packets_per_band": self.packets_per_band,
            "packet_interval_us": self.packet_interval * 1e6,
            "dwell_ms": self.dwell * 1e3,
            "quirk_phase_step_rad": self.quirk_phase_step,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ImpairmentConfig":
        kw = {}
        scale = {
            "detection_delay_median_ns": ("detection_delay_median", 1e-9),
            "detection_delay_stddev_ns": ("detection_delay_stddev", 1e-9),
            "fwd_rev_gap_us": ("fwd_rev_gap", 1e-6),
            "hardware_delay_ns": ("hardware_delay", 1e-9),
            "packet_interval_us": ("packet_interval", 1e-6),
            "dwell_ms": ("dwell", 1e-3),
        }
        for key, value in data.items():
            if value is None and key not in ("cfo_hz", "quirk_phase_step_rad", "snr_db"):
                continue
            if key in scale:
                name, factor = scale[key]
                kw[name] = float(value) * factor
            elif key == "kappa":
                kw["kappa"] = complex(value[0], value[1]) if isinstance(value, (list, tuple)) else complex(value)
            elif key == "snr_db":
                kw["snr_db"] = float("inf") if value is None else float(value)
            elif key == "quirk_phase_step_rad":
                kw["quirk_phase_step"] = None if value is None else float(value)
            elif key in ("cfo_hz", "cfo_ppm", "gap_jitter"):
                kw[key] = None if value is None else float(value)
            elif key in ("alternate_initiator",):
                kw[key] = bool(value)
            elif key == "packets_per_band":
                kw[key] = int(value)
            else:
                raise KeyError(key)
        return cls(**kw)


@dataclass(frozen=True)
class CsiMeasurement:
    band_index: int
    direction: str
    subcarriers: tuple[int, ...]
    values: np.ndarray
    timestamp: float
    antenna: int = 0
    packet: int = 0

    def __post_init__(self):
        if self.direction not in (FORWARD, REVERSE):
            raise ValueError(f"direction must be {FORWARD!r} or {REVERSE!r}")
        if 0 in self.subcarriers:
            raise ValueError("the zero subcarrier is never measured")
        if len(self.subcarriers) != len(self.values):
            raise ValueError("one value per subcarrier")


def _distance(a, b) -> float:
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def paths_from_scene(scene: Scene, antenna: int = 0) -> list[PathComponent]:
    """Direct path plus one single-bounce path per reflector, sorted by delay.

    Amplitudes fall off as 1/path-length; reflections are further scaled by
    the reflector's complex coefficient.
    """
    if not 0 <= antenna < len(scene.rx_antenna_positions):
        raise IndexError(f"antenna {antenna} out of range")
    rx = scene.rx_antenna_positions[antenna]
    d = _distance(scene.tx_position, rx)
    if d == 0:
        raise DegenerateGeometryError("transmitter coincides with receive antenna")
    paths = [PathComponent(d / SPEED_OF_LIGHT, complex(1.0 / d))]
    for r in scene.reflectors:
        d1 = _distance(scene.tx_position, r.position)
        d2 = _distance(r.position, rx)
        if d1 == 0 or d2 == 0:
            raise DegenerateGeometryError("reflector coincides with an endpoint")
        total = d1 + d2
        paths.append(PathComponent(total / SPEED_OF_LIGHT, complex(r.coefficient) / total))
    return sorted(paths, key=lambda p: p.delay)


def true_channel(paths: Sequence[PathComponent], f):
    """Sum of a_k exp(-j 2 pi f tau_k); scalar in, scalar out."""
    if not paths:
        raise ValueError("need at least one path")
    f_arr = np.asarray(f, dtype=float)
    delays = np.array([p.delay for p in paths])
    amps = np.array([p.amplitude for p in paths], dtype=complex)
    h = np.exp(-2j * np.pi * np.multiply.outer(f_arr, delays)) @ amps
    return complex(h) if np.ndim(h) == 0 else h


def _draw_detection_delay(rng, cfg: ImpairmentConfig, size) -> np.ndarray:
    if cfg.detection_delay_stddev == 0:
        return np.full(size, max(cfg.detection_delay_median, 0.0))
    mu, sd = cfg.detection_delay_median, cfg.detection_delay_stddev
    a = (0.0 - mu) / sd
    return stats.truncnorm.rvs(a, np.inf, loc=mu, scale=sd, size=size, random_state=rng)


def synthesize_paths_sweep(
    paths_per_antenna: Sequence[Sequence[PathComponent]],
    plan: BandPlan,
    impairments: ImpairmentConfig | None = None,
    seed=None,
) -> list[CsiMeasurement]:
    """Synthesize forward and reverse CSI for every band, packet and antenna.

    For packet p on band i the forward value on subcarrier k is
    ``exp(-j2pi(f_ik - f_i0) delta) * H(f_ik) * exp(+j2pi cfo t)`` plus
    noise; the reverse value carries kappa and the opposite CFO rotation.
    """
    cfg = impairments if impairments is not None else ImpairmentConfig.ideal()
    rng = np.random.default_rng(seed)
    n_ant = len(paths_per_antenna)
    out: list[CsiMeasurement] = []

    # per-antenna noise floor from the mean channel power over the sweep
    shifted = [
        [PathComponent(p.delay + cfg.hardware_delay, p.amplitude) for p in paths] for paths in paths_per_antenna
    ]
    all_f = np.concatenate([b.subcarrier_frequencies() for b in plan])
    noise_sd = []
    for paths in shifted:
        power = float(np.mean(np.abs(true_channel(paths, all_f)) ** 2))
        noise_sd.append(0.0 if np.isinf(cfg.snr_db) else np.sqrt(power / 10 ** (cfg.snr_db / 10)))

    n_pk = cfg.packets_per_band
    for slot, band in enumerate(plan):
        fk = band.subcarrier_frequencies()
        dfk = fk - band.center_frequency
        cfo = cfg.cfo_hz
        if cfo is None:
            cfo = rng.uniform(-1.0, 1.0) * cfg.cfo_ppm * 1e-6 * band.center_frequency
        base = [true_channel(paths, fk) for paths in shifted]
        band_start = slot * cfg.dwell
        for pk in range(n_pk):
            t0 = band_start + pk * cfg.packet_interval
            gap = cfg.fwd_rev_gap
            if cfg.gap_jitter:
                gap *= 1.0 + cfg.gap_jitter * rng.standard_normal()
            if cfg.alternate_initiator and pk % 2 == 1:
                times = {REVERSE: t0, FORWARD: t0 + gap}
            else:
                times = {FORWARD: t0, REVERSE: t0 + gap}
            delays = _draw_detection_delay(rng, cfg, 2)
            for j, direction in enumerate((FORWARD, REVERSE)):
                t = times[direction]
                sign = 1.0 if direction == FORWARD else -1.0
                common = np.exp(sign * 2j * np.pi * cfo * t)
                if direction == REVERSE:
                    common *= cfg.kappa
                if cfg.quirk_phase_step is not None and band.is_24ghz:
                    common *= np.exp(1j * cfg.quirk_phase_step * rng.integers(0, 4))
                ramp = np.exp(-2j * np.pi * dfk * delays[j])
                for ant in range(n_ant):
                    values = base[ant] * ramp * common
                    if noise_sd[ant] > 0:
                        noise = rng.standard_normal(len(fk)) + 1j * rng.standard_normal(len(fk))
                        values = values + noise * noise_sd[ant] / np.sqrt(2)
                    out.append(
                        CsiMeasurement(
                            band_index=band.index,
                            direction=direction,
                            subcarriers=band.subcarrier_indices,
                            values=values,
                            timestamp=t,
                            antenna=ant,
                            packet=pk,
                        )
                    )
    return out


def synthesize_sweep(
    scene: Scene, plan: BandPlan, impairments: ImpairmentConfig | None = None, seed=None
) -> list[CsiMeasurement]:
    paths = [paths_from_scene(scene, a) for a in range(len(scene.rx_antenna_positions))]
    return synthesize_paths_sweep(paths, plan, impairments, seed)


def random_scene(
    rng,
    n_paths: int = 5,
    rx_antenna_positions: Sequence[tuple[float, float]] = ((0.0, 0.0),),
    distance_range: tuple[float, float] = (1.0, 15.0),
    extra_path_range: tuple[float, float] = (0.5, 12.0),
    coefficient_range: tuple[float, float] = (0.3, 0.8),
) -> Scene:
    """Random transmitter plus ``n_paths - 1`` single-bounce reflectors.

    The transmitter sits at a random bearing and range from the antenna
    centroid. Each reflector lies on an ellipse around the transmitter and
    first antenna chosen so its bounce adds a length drawn from
    ``extra_path_range``; reflection phases are uniform.
    """
    rng = np.random.default_rng(rng)
    anchors = np.asarray(rx_antenna_positions, dtype=float)
    center = anchors.mean(axis=0)
    d = rng.uniform(*distance_range)
    theta = rng.uniform(0, 2 * np.pi)
    tx = center + d * np.array([np.cos(theta), np.sin(theta)])
    rx0 = anchors[0]
    focal = np.linalg.norm(tx - rx0)
    mid = (tx + rx0) / 2
    axis = (tx - rx0) / focal
    normal = np.array([-axis[1], axis[0]])
    reflectors = []
    for _ in range(n_paths - 1):
        total = focal + rng.uniform(*extra_path_range)
        semi_major = total / 2
        semi_minor = np.sqrt(semi_major**2 - (focal / 2) ** 2)
        phi = rng.uniform(0, 2 * np.pi)
        pos = mid + semi_major * np.cos(phi) * axis + semi_minor * np.sin(phi) * normal
        mag = rng.uniform(*coefficient_range)
        coef = mag * np.exp(2j * np.pi * rng.uniform())
        reflectors.append(Reflector((float(pos[0]), float(pos[1])), complex(coef)))
    return Scene(
        tx_position=(float(tx[0]), float(tx[1])),
        rx_antenna_positions=[tuple(map(float, a)) for a in anchors],
        reflectors=reflectors,
    )


SWEEP_CSV_FIELDS = ["band_index", "direction", "k", "re", "im", "timestamp", "antenna", "packet"]


def write_sweep_csv(measurements: Sequence[CsiMeasurement], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_CSV_FIELDS)
        for m in measurements:
            for k, v in zip(m.subcarriers, m.values):
                writer.writerow(
                    [m.band_index, m.direction, k, repr(float(v.real)), repr(float(v.imag)),
                     repr(float(m.timestamp)), m.antenna, m.packet]
                )


def read_sweep_csv(path: str | Path) -> list[CsiMeasurement]:
    """Inverse of :func:`write_sweep_csv`.

    ``antenna`` and ``packet`` columns are optional; without ``packet`` the
    rows of one band/direction/antenna are grouped by timestamp.
    """
    groups: dict[tuple, list] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"band_index", "direction", "k", "re", "im", "timestamp"} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"sweep CSV missing columns: {sorted(missing)}")
        for row in reader:
            key = (
                int(row["band_index"]),
                row["direction"],
                int(row.get("antenna") or 0),
                row.get("packet") if row.get("packet") not in (None, "") else None,
                float(row["timestamp"]),
            )
            groups.setdefault(key, []).append((int(row["k"]), complex(float(row["re"]), float(row["im"]))))
    out = []
    packet_counter: dict[tuple, int] = {}
    for (band, direction, ant, packet, ts), rows in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][4])):
        rows.sort()
        if packet is None:
            counter_key = (band, direction, ant)
            packet_counter[counter_key] = packet_counter.get(counter_key, -1) + 1
            pk = packet_counter[counter_key]
        else:
            pk = int(packet)
        out.append(
            CsiMeasurement(
                band_index=band,
                direction=direction,
                subcarriers=tuple(k for k, _ in rows),
                values=np.array([v for _, v in rows]),
                timestamp=ts,
                antenna=ant,
                packet=pk,
            )
        )
    return out
