"""Distances from time of flight and 2D position by circle intersection."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .channel import SPEED_OF_LIGHT
from .errors import InsufficientDataError, LocalizationFailedError


@dataclass(frozen=True)
class DistanceEntry:
    rx: int
    tx: int
    meters: float
    confidence: float = 1.0

    def __post_init__(self):
        if self.meters < 0:
            raise ValueError("distance must be non-negative")


@dataclass(frozen=True)
class DistanceSet:
    entries: tuple[DistanceEntry, ...] = ()

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def meters(self) -> np.ndarray:
        return np.array([e.meters for e in self.entries])


@dataclass(frozen=True)
class Position2D:
    x: float
    y: float
    residual: float = 0.0
    mirror: "Position2D | None" = field(default=None, compare=False)

    def __post_init__(self):
        if self.residual < 0:
            raise ValueError("residual must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


def distances_from_tofs(estimates, calibration_offset: float = 0.0, pairs=None) -> DistanceSet:
    """``c * (tof - offset)`` per estimate, clamped at zero.

    ``estimates`` holds ToFEstimate objects or plain seconds; ``pairs``
    gives the (rx, tx) antenna indices of each, default ``(i, 0)``.
    """
    entries = []
    for i, est in enumerate(estimates):
        seconds = getattr(est, "seconds", est)
        rx, tx = pairs[i] if pairs is not None else (i, 0)
        conf = 0.0 if getattr(est, "low_confidence", False) else 1.0
        meters = max(SPEED_OF_LIGHT * (float(seconds) - calibration_offset), 0.0)
        entries.append(DistanceEntry(rx, tx, meters, conf))
    return DistanceSet(tuple(entries))


def geometric_outlier_reject(
    d: DistanceSet,
    rx_positions,
    tx_positions=((0.0, 0.0),),
    slack_frac: float = 0.1,
    slack_abs: float = 0.1,
) -> DistanceSet:
    """Drop entries that break the antenna-baseline triangle inequality.

    Two distances measured across antennas separated by baseline ``b``
    cannot differ by more than ``b``; a pair violates the check when
    ``|d1 - d2| > b + slack_frac * b + slack_abs``. The entry involved in
    the most violations (largest total excess on ties) is removed until the
    set is consistent.
    """
    rx = np.asarray(rx_positions, dtype=float)
    tx = np.asarray(tx_positions, dtype=float)
    entries = list(d.entries)

    def violations(items):
        n = len(items)
        count = np.zeros(n, dtype=int)
        excess = np.zeros(n)
        for i in range(n):
            for j in range(i + 1, n):
                a, b = items[i], items[j]
                base = np.linalg.norm(rx[a.rx] - rx[b.rx]) + np.linalg.norm(tx[a.tx] - tx[b.tx])
                over = abs(a.meters - b.meters) - (base * (1 + slack_frac) + slack_abs)
                if over > 0:
                    count[[i, j]] += 1
                    excess[[i, j]] += over
        return count, excess

    while True:
        count, excess = violations(entries)
        if not count.any():
            break
        worst = max(range(len(entries)), key=lambda i: (count[i], excess[i]))
        entries.pop(worst)
    if len(entries) < 2:
        raise InsufficientDataError("fewer than two geometrically consistent distances")
    return DistanceSet(tuple(entries))


def triangle_anchors(spread: float, center=(0.0, 0.0)) -> np.ndarray:
    """Equilateral triangle of side ``spread`` (meters) around ``center``."""
    ang = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
    radius = spread / np.sqrt(3)
    return np.asarray(center, dtype=float) + np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])


def _collinear(anchors: np.ndarray) -> bool:
    if len(anchors) < 3:
        return True
    s = np.linalg.svd(anchors - anchors.mean(axis=0), compute_uv=False)
    return s[1] <= 1e-9 * max(s[0], 1e-300)


def _reflect(point, a, b):
    axis = (b - a) / np.linalg.norm(b - a)
    rel = point - a
    return a + 2 * np.dot(rel, axis) * axis - rel


def localize(
    d: DistanceSet,
    rx_positions,
    n_starts: int = 8,
    weighted: bool = False,
) -> Position2D:
    """Least-squares point closest to the range circles.

    Minimizes ``sum_j w_j (||x - a_j|| - d_j)^2`` from ``n_starts`` initial
    points on a ring around the anchor centroid and keeps the best local
    minimum. With two anchors, or collinear anchors, the reflection across
    the anchor axis fits equally well and is returned as ``.mirror``.
    """
    rx = np.asarray(rx_positions, dtype=float)
    entries = list(d.entries)
    anchors = np.array([rx[e.rx] for e in entries])
    dist = np.array([e.meters for e in entries])
    w = np.sqrt(np.array([e.confidence for e in entries])) if weighted else np.ones(len(entries))
    if len(entries) < 2 or len(np.unique(anchors, axis=0)) < 2:
        raise InsufficientDataError("need distances to at least two distinct anchors")

    def resid(x):
        return w * (np.linalg.norm(anchors - x, axis=1) - dist)

    def jac(x):
        diff = x - anchors
        norm = np.maximum(np.linalg.norm(diff, axis=1), 1e-12)
        return w[:, None] * diff / norm[:, None]

    centroid = anchors.mean(axis=0)
    radius = max(float(np.mean(dist)), 1e-3)
    best = None
    for k in range(n_starts):
        ang = 2 * np.pi * (k + 0.5) / n_starts
        x0 = centroid + radius * np.array([np.cos(ang), np.sin(ang)])
        sol = least_squares(resid, x0, jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if sol.status <= 0 or not np.all(np.isfinite(sol.x)):
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None:
        raise LocalizationFailedError("no least-squares start converged")
    x = best.x
    rms = float(np.sqrt(np.mean((np.linalg.norm(anchors - x, axis=1) - dist) ** 2)))
    mirror = None
    uniq = np.unique(anchors, axis=0)
    if _collinear(uniq):
        mx = _reflect(x, uniq[0], uniq[-1])
        mirror = Position2D(float(mx[0]), float(mx[1]), rms)
    return Position2D(float(x[0]), float(x[1]), rms, mirror)


def disambiguate_by_motion(
    candidates: Sequence[Position2D],
    movement,
    post_move_distance: float,
    origin=(0.0, 0.0),
    tie_tol: float = 1e-9,
) -> tuple[Position2D, bool]:
    """Pick the candidate consistent with a distance measured after moving.

    The measuring node starts at ``origin`` and moves by ``movement``.
    Returns ``(choice, tie)``; on a tie the first candidate is returned.
    """
    if len(candidates) != 2:
        raise ValueError("expected exactly two candidates")
    here = np.asarray(origin, dtype=float) + np.asarray(movement, dtype=float)
    err = [abs(np.linalg.norm(c.as_array() - here) - post_move_distance) for c in candidates]
    if abs(err[0] - err[1]) <= tie_tol:
        return candidates[0], True
    return candidates[int(np.argmin(err))], False


LOCALIZATION_CSV_FIELDS = ["trial", "true_x", "true_y", "est_x", "est_y", "error_m"]


def write_localization_csv(rows, path: str | Path) -> None:
    """rows: iterables of (trial, true_x, true_y, est_x, est_y)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOCALIZATION_CSV_FIELDS)
        for trial, tx, ty, ex, ey in sorted(rows, key=lambda r: r[0]):
            err = float(np.hypot(ex - tx, ey - ty))
            writer.writerow([trial, repr(float(tx)), repr(float(ty)), repr(float(ex)), repr(float(ey)), repr(err)])
