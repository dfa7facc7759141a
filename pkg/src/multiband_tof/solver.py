"""Sparse inverse non-uniform DFT and time-of-flight extraction.

The multipath profile ``p`` lives on a uniform delay grid; channels are
observed at a handful of scattered center frequencies ``f_i``:

    h_i = sum_k p_k exp(-j 2 pi f_i tau_k)

:func:`invert_ndft` recovers a sparse ``p`` by proximal gradient descent
on ``||h - F p||_2^2 + alpha ||p||_1`` and :func:`first_peak` reads the
direct-path delay off the earliest significant peak. :func:`crt_estimate`
is the single-path vote-counting baseline.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import NoPeakError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DelayGrid:
    tau_min: float = 0.0
    tau_max: float = 200e-9
    step: float = 0.05e-9

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("grid step must be positive")
        if self.tau_max < self.tau_min:
            raise ValueError("tau_max must be >= tau_min")

    @property
    def size(self) -> int:
        return int(np.floor((self.tau_max - self.tau_min) / self.step + 1e-9)) + 1

    @property
    def values(self) -> np.ndarray:
        return self.tau_min + self.step * np.arange(self.size)

    def index_of(self, tau: float) -> int:
        return int(np.clip(np.round((tau - self.tau_min) / self.step), 0, self.size - 1))


class NdftOperator:
    """Matrix-free F with ``F[i, k] = exp(-j 2 pi f_i tau_k)``.

    The uniform delay grid is split into blocks of ``block`` points so both
    products reduce to one small matrix-matrix multiply against a shared
    block Vandermonde factor.
    """

    def __init__(self, frequencies, grid: DelayGrid, block: int = 64):
        self.frequencies = np.asarray(frequencies, dtype=float).ravel()
        self.grid = grid
        self.shape = (self.frequencies.size, grid.size)
        self.block = block
        n, m = self.shape
        nb = -(-m // block)
        self._nb = nb
        f = self.frequencies
        self._offset = np.exp(2j * np.pi * f * grid.tau_min)  # conj of the tau_min phase
        self._w = np.exp(2j * np.pi * np.outer(np.arange(block) * grid.step, f))  # block x n
        self._w_conj = self._w.conj()
        self._s = np.exp(2j * np.pi * np.outer(f, np.arange(nb) * block * grid.step))  # n x nb
        self._s_conj_t = np.ascontiguousarray(self._s.conj().T)  # nb x n
        self._dense = None
        self._norm = None

    @property
    def dense(self) -> np.ndarray:
        if self._dense is None:
            self._dense = np.exp(-2j * np.pi * np.outer(self.frequencies, self.grid.values))
        return self._dense

    def apply(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=complex)
        nz = np.flatnonzero(p)
        if nz.size == 0:
            return np.zeros(self.shape[0], dtype=complex)
        if nz.size <= self._nb:
            return self.dense[:, nz] @ p[nz]
        padded = np.zeros(self._nb * self.block, dtype=complex)
        padded[: p.size] = p
        partial = padded.reshape(self._nb, self.block) @ self._w_conj  # nb x n
        return (self._s_conj_t * partial).sum(axis=0) * self._offset.conj()

    def apply_sparse(self, support, values) -> np.ndarray:
        """F p for p given by its support indices and values."""
        if len(support) == 0:
            return np.zeros(self.shape[0], dtype=complex)
        if len(support) <= self._nb:
            return self.dense[:, support] @ values
        p = np.zeros(self.shape[1], dtype=complex)
        p[support] = values
        return self.apply(p)

    def adjoint(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=complex)
        if self.grid.tau_min != 0:
            r = r * self._offset
        blocks = self._w @ (r[:, None] * self._s)  # block x nb
        return blocks.T.reshape(-1)[: self.shape[1]]

    @property
    def norm(self) -> float:
        if self._norm is None:
            self._norm = _power_iteration(self)
        return self._norm


def gram_matrix(frequencies, grid: DelayGrid) -> np.ndarray:
    """F F^H in closed form: geometric sums over the uniform delay grid."""
    f = np.asarray(frequencies, dtype=float).ravel()
    df = f[:, None] - f[None, :]
    m = grid.size
    x = -2 * np.pi * df * grid.step
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = (1 - np.exp(1j * m * x)) / (1 - np.exp(1j * x))
    small = np.abs(np.sin(x / 2)) < 1e-12
    ratio[small] = m * np.exp(1j * (m - 1) * x[small] / 2) if m > 0 else 0
    return np.exp(-2j * np.pi * df * grid.tau_min) * ratio


def _power_iteration(op: NdftOperator, tol: float = 1e-6, max_iter: int = 1_000_000) -> float:
    # iterate on the n x n Gram matrix F F^H, which shares F's top singular
    # value and is tiny compared to F^H F; stop well inside ``tol`` because
    # the Rayleigh quotient's step size badly understates its error when the
    # top eigenvalues are close
    n, m = op.shape
    gram = gram_matrix(op.frequencies, op.grid)
    v = np.ones(n, dtype=complex) / np.sqrt(n)
    lam = 0.0
    for _ in range(max_iter):
        w = gram @ v
        new_lam = float(np.vdot(v, w).real)
        norm_w = np.linalg.norm(w)
        if norm_w == 0:
            return 0.0
        v = w / norm_w
        if abs(new_lam - lam) <= 1e-6 * tol * new_lam:
            lam = new_lam
            break
        lam = new_lam
    # the Rayleigh quotient never exceeds lambda_max; the residual bounds the gap
    return float(np.sqrt(max(lam, 0.0)))


@lru_cache(maxsize=16)
def _cached_operator(freq_key: tuple, grid: DelayGrid) -> NdftOperator:
    return NdftOperator(np.array(freq_key), grid)


def get_operator(frequencies, grid: DelayGrid) -> NdftOperator:
    return _cached_operator(tuple(np.asarray(frequencies, dtype=float).ravel().tolist()), grid)


def ndft_apply(p, grid: DelayGrid, frequencies) -> np.ndarray:
    return get_operator(frequencies, grid).apply(p)


def ndft_adjoint(r, grid: DelayGrid, frequencies) -> np.ndarray:
    return get_operator(frequencies, grid).adjoint(r)


def spectral_norm(frequencies, grid: DelayGrid) -> float:
    """Largest singular value of F (power iteration, 1e-6 relative)."""
    return get_operator(frequencies, grid).norm


def sparsify(p, threshold: float) -> np.ndarray:
    """Complex soft threshold: shrink magnitudes by ``threshold``, keep phase."""
    p = np.asarray(p, dtype=complex)
    mag = np.abs(p)
    keep = mag > threshold
    out = np.zeros_like(p)
    out[keep] = p[keep] * ((mag[keep] - threshold) / mag[keep])
    return out


@dataclass
class SolverConfig:
    """Inverse-NDFT settings.

    ``alpha``/``epsilon`` of None mean data-scaled defaults:
    ``alpha = alpha_scale * ||F^H h||_inf`` and ``epsilon = epsilon_scale * ||h||_2``.
    """

    alpha: float | None = None
    alpha_scale: float = 0.5
    epsilon: float | None = None
    epsilon_scale: float = 1e-6
    max_iters: int = 20_000
    peak_threshold_frac: float = 0.2
    check_monotone: bool = False

    def __post_init__(self):
        if self.alpha is not None and self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 < self.peak_threshold_frac <= 1:
            raise ValueError("peak_threshold_frac must lie in (0, 1]")


@dataclass
class MultipathProfile:
    grid: DelayGrid
    p: np.ndarray
    exponent: int = 1
    converged: bool = True
    iterations: int = 0
    alpha: float = 0.0
    objective_history: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def delays(self) -> np.ndarray:
        return self.grid.values

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.p)

    @property
    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.p))

    def objective_nonincreasing(self, rtol: float = 1e-10) -> bool:
        obj = self.objective_history
        if obj.size < 2:
            return True
        return bool(np.all(np.diff(obj) <= rtol * np.abs(obj[:-1]) + 1e-300))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau_ns", "magnitude", "phase"])
            for tau, v in zip(self.delays, self.p):
                writer.writerow([f"{tau * 1e9:.6f}", repr(float(abs(v))), repr(float(np.angle(v)))])


@dataclass(frozen=True)
class ToFEstimate:
    seconds: float
    peak_magnitude: float
    profile_peak_count: int
    low_confidence: bool = False

    def __post_init__(self):
        if self.seconds < 0:
            raise ValueError("time of flight must be non-negative")


def lasso_objective(op: NdftOperator, h, p, alpha: float) -> float:
    resid = h - op.apply(p)
    return float(np.vdot(resid, resid).real + alpha * np.abs(p).sum())


def invert_ndft(
    h,
    frequencies,
    grid: DelayGrid | None = None,
    config: SolverConfig | None = None,
    exponent: int = 1,
) -> MultipathProfile:
    """Sparse multipath profile from per-band channels.

    Minimizes ``||h - F p||^2 + alpha ||p||_1`` by iterating
    ``p <- sparsify(p - gamma F^H (F p - h), gamma alpha / 2)`` from p = 0,
    with ``gamma = 1 / ||F||_2^2`` (the reciprocal Lipschitz constant of
    the half-gradient), until successive iterates differ by less than
    epsilon or ``max_iters`` is hit.
    """
    grid = grid or DelayGrid()
    config = config or SolverConfig()
    h = np.asarray(h, dtype=complex).ravel()
    f = np.asarray(frequencies, dtype=float).ravel()
    if h.size != f.size:
        raise ValueError("one channel value per frequency")
    if h.size < 2:
        raise ValueError("need at least two frequencies")
    op = get_operator(f, grid)
    gamma = 1.0 / op.norm**2
    alpha = config.alpha if config.alpha is not None else config.alpha_scale * float(np.abs(op.adjoint(h)).max())
    eps = config.epsilon if config.epsilon is not None else config.epsilon_scale * float(np.linalg.norm(h))
    eps = max(eps, 1e-300)
    thresh = gamma * alpha / 2

    # p is kept as its support ``nz`` and values ``pv``; the dense vector is
    # only rebuilt at the end
    m = grid.size
    nz = np.zeros(0, dtype=np.intp)
    pv = np.zeros(0, dtype=complex)
    l1 = 0.0
    history = np.empty(config.max_iters + 1)
    converged = False
    it = 0
    while it < config.max_iters:
        resid = op.apply_sparse(nz, pv) - h
        history[it] = np.vdot(resid, resid).real + alpha * l1
        if config.check_monotone and it and history[it] > history[it - 1] * (1 + 1e-10):
            raise AssertionError(f"objective increased at iteration {it}")
        z = op.adjoint(resid)
        z *= -gamma
        z[nz] += pv
        mag = np.abs(z)
        keep = mag > thresh
        nz_new = np.flatnonzero(keep)
        mv = mag[nz_new]
        pv_new = z[nz_new] * ((mv - thresh) / mv)
        # ||p_new - p||: entries on the new support, plus old entries that were zeroed
        prev = np.zeros(m, dtype=complex)
        prev[nz] = pv
        dropped = pv[~keep[nz]]
        step = np.sqrt(np.sum(np.abs(pv_new - prev[nz_new]) ** 2) + np.sum(np.abs(dropped) ** 2))
        nz, pv = nz_new, pv_new
        l1 = float(np.sum(mv) - thresh * mv.size)
        it += 1
        if step < eps:
            converged = True
            break
    p = np.zeros(m, dtype=complex)
    p[nz] = pv
    history[it] = lasso_objective(op, h, p, alpha)
    if not converged:
        log.debug("inverse NDFT stopped at max_iters=%d without converging", config.max_iters)
    return MultipathProfile(
        grid=grid,
        p=p,
        exponent=exponent,
        converged=converged,
        iterations=it,
        alpha=alpha,
        objective_history=history[: it + 1].copy(),
    )


def find_peaks(profile: MultipathProfile, threshold_frac: float = 0.2) -> list[tuple[float, float]]:
    """Local maxima of |p| at or above ``threshold_frac * max|p|``, in delay order.

    Plateaus report their leftmost point. Delays are raw profile delays
    (not divided by the exponent).
    """
    mag = profile.magnitude
    peak = mag.max(initial=0.0)
    if peak <= 0:
        return []
    level = threshold_frac * peak
    tau = profile.delays
    out = []
    i, m = 0, mag.size
    while i < m:
        if mag[i] < level or (i > 0 and mag[i] <= mag[i - 1]):
            i += 1
            continue
        j = i
        while j + 1 < m and mag[j + 1] == mag[i]:
            j += 1
        if j + 1 >= m or mag[j + 1] < mag[i]:
            out.append((float(tau[i]), float(mag[i])))
        i = j + 1
    return out


def first_peak(profile: MultipathProfile, config: SolverConfig | None = None) -> ToFEstimate:
    """Direct-path delay: the earliest significant peak, divided by the exponent."""
    config = config or SolverConfig()
    peaks = find_peaks(profile, config.peak_threshold_frac)
    if not peaks:
        raise NoPeakError("profile is identically zero")
    tau, mag = peaks[0]
    return ToFEstimate(seconds=tau / profile.exponent, peak_magnitude=mag, profile_peak_count=len(peaks))


def dominant_peaks(profile: MultipathProfile, count: int, threshold_frac: float = 0.05) -> list[tuple[float, float]]:
    """The ``count`` largest peaks, returned in delay order."""
    peaks = sorted(find_peaks(profile, threshold_frac), key=lambda pk: -pk[1])[:count]
    return sorted(peaks)


def _angular_distance(a, b):
    return np.abs(np.angle(np.exp(1j * (np.asarray(a) - np.asarray(b)))))


def crt_estimate(
    phases,
    frequencies,
    grid: DelayGrid | None = None,
    phase_tolerance: float = 0.1,
    exponent: int = 1,
) -> ToFEstimate:
    """Grid delay agreeing with the most per-band phase equations.

    A band votes for delay tau when ``-2 pi f_i * exponent * tau`` is within
    ``phase_tolerance`` of its measured phase. Ties go to the smaller delay.
    ``peak_magnitude`` carries the winning vote count.
    """
    grid = grid or DelayGrid()
    phases = np.asarray(phases, dtype=float).ravel()
    f = np.asarray(frequencies, dtype=float).ravel()
    if phases.size != f.size:
        raise ValueError("one phase per frequency")
    taus = grid.values
    votes = np.zeros(taus.size, dtype=int)
    for fi, phi in zip(f, phases):
        predicted = -2 * np.pi * fi * exponent * taus
        votes += _angular_distance(predicted, phi) < phase_tolerance
    best = int(np.argmax(votes))  # argmax returns the first maximum
    count = int(votes[best])
    return ToFEstimate(
        seconds=float(taus[best]),
        peak_magnitude=float(count),
        profile_peak_count=int(np.sum(votes == count)),
        low_confidence=count <= f.size // 2,
    )


def estimate_tof(band_channels, plan, grid: DelayGrid | None = None, config: SolverConfig | None = None):
    """Profile and first-peak ToF from a list of :class:`~.csi.BandChannel`.

    Returns ``(ToFEstimate, MultipathProfile)``.
    """
    exps = {c.exponent for c in band_channels}
    if len(exps) != 1:
        raise ValueError("band channels carry mixed exponents")
    exponent = exps.pop()
    freqs = np.array([plan.band(c.band_index).center_frequency for c in band_channels])
    h = np.array([c.value for c in band_channels])
    profile = invert_ndft(h, freqs, grid, config, exponent=exponent)
    return first_peak(profile, config), profile
