"""End-to-end acceptance checks, one test per criterion.

Each test carries a ``criterion`` marker; the conftest hook prints one
PASS/FAIL line per criterion at the end of the run. Every solver call made
here records whether its objective trace was non-increasing so the last
criterion can check all of them.
"""

import time

import numpy as np
import pytest

from multiband_tof.band_plan import default_band_plan, unambiguous_range
from multiband_tof.channel import (
    SPEED_OF_LIGHT,
    ImpairmentConfig,
    PathComponent,
    paths_from_scene,
    random_scene,
    synthesize_paths_sweep,
    true_channel,
)
from multiband_tof.csi import zero_subcarrier_channels
from multiband_tof.errors import InsufficientDataError, LocalizationFailedError
from multiband_tof.follow import NoiseModel, TrackerConfig, random_walk_trajectory, simulate_follow, stationary_trajectory
from multiband_tof.hopping import ProtocolConfig, run_sweep
from multiband_tof.localization import distances_from_tofs, geometric_outlier_reject, localize, triangle_anchors
from multiband_tof.solver import (
    DelayGrid,
    SolverConfig,
    crt_estimate,
    dominant_peaks,
    estimate_tof,
    find_peaks,
    invert_ndft,
    ndft_adjoint,
    ndft_apply,
)

from .oracles import brute_force_ambiguity

PLAN = default_band_plan()
GRID = DelayGrid()
MONOTONE: list[bool] = []


def _record(profile):
    MONOTONE.append(profile.objective_nonincreasing())
    return profile


def _tof(paths, imp, mode, seed=0, antenna_paths=None, config=None):
    meas = synthesize_paths_sweep(antenna_paths or [paths], PLAN, imp, seed=seed)
    chans = zero_subcarrier_channels(meas, mode=mode)
    est, prof = estimate_tof(chans, PLAN, GRID, config)
    _record(prof)
    return est, prof, chans


def _report(msg):
    print(f"    {msg}")


@pytest.mark.criterion(1, "single-path oracle, inverse NDFT and vote search within 0.05 ns")
def test_c01_single_path_oracle():
    start = time.perf_counter()
    worst_ndft = worst_crt = 0.0
    for tau_ns in (0.5, 1, 2, 5, 10, 50, 150):
        tau = tau_ns * 1e-9
        est, _, chans = _tof([PathComponent(tau, 1.0)], ImpairmentConfig.ideal(), "forward")
        crt = crt_estimate(np.angle([c.value for c in chans]), PLAN.center_frequencies, GRID)
        worst_ndft = max(worst_ndft, abs(est.seconds - tau))
        worst_crt = max(worst_crt, abs(crt.seconds - tau))
    elapsed = time.perf_counter() - start
    _report(f"worst error {worst_ndft * 1e9:.4f} ns (NDFT), {worst_crt * 1e9:.4f} ns (vote), {elapsed:.1f} s")
    assert worst_ndft <= 0.05e-9 + 1e-15
    assert worst_crt <= 0.05e-9 + 1e-15
    assert elapsed < 60


@pytest.mark.criterion(2, "three-path profile peaks within 0.5 ns, first peak 5.2 +- 0.1 ns")
def test_c02_three_path_profile():
    truth = [5.2e-9, 10e-9, 16e-9]
    paths = [
        PathComponent(truth[0], 1.0),
        PathComponent(truth[1], 0.7 * np.exp(1.1j)),
        PathComponent(truth[2], 0.45 * np.exp(-2.3j)),
    ]
    # the default stopping rule halts before the 10 ns mass settles on one
    # grid point; run to convergence and report both
    _, quick, _ = _tof(paths, ImpairmentConfig.ideal(), "forward")
    quick_peaks = np.round(np.array([t for t, _ in dominant_peaks(quick, 3)]) * 1e9, 3)
    _report(f"default stopping: {quick.iterations} iterations, converged={quick.converged}, peaks {quick_peaks} ns")
    tight = SolverConfig(epsilon_scale=1e-12, max_iters=400_000)
    est, prof, _ = _tof(paths, ImpairmentConfig.ideal(), "forward", config=tight)
    peaks = [t for t, _ in dominant_peaks(prof, 3)]
    _report(f"converged in {prof.iterations} iterations: dominant peaks {np.round(np.array(peaks) * 1e9, 3)} ns, "
            f"ToF {est.seconds * 1e9:.3f} ns")
    assert prof.converged
    assert len(peaks) == 3
    assert np.all(np.abs(np.array(peaks) - truth) <= 0.5e-9)
    assert abs(est.seconds - 5.2e-9) <= 0.1e-9


@pytest.mark.criterion(3, "squared-channel peaks at 4/6/8 ns, ToF 2 ns")
def test_c03_squared_channel_algebra():
    paths = [PathComponent(2e-9, 1.0), PathComponent(4e-9, 0.5)]
    # detection delay and per-hop CFO on, no noise
    est, prof, _ = _tof(paths, ImpairmentConfig(), "reciprocal", seed=3)
    assert prof.exponent == 2
    peaks = [t for t, _ in dominant_peaks(prof, 3)]
    _report(f"peaks {np.round(np.array(peaks) * 1e9, 3)} ns, ToF {est.seconds * 1e9:.3f} ns")
    assert len(peaks) == 3
    assert np.all(np.abs(np.array(peaks) - [4e-9, 6e-9, 8e-9]) <= 0.1e-9)
    assert abs(est.seconds - 2e-9) <= 0.05e-9


@pytest.mark.criterion(4, "detection-delay invariance over 100 trials within 0.05 ns")
def test_c04_detection_delay_invariance():
    worst = 0.0
    for trial in range(100):
        paths = paths_from_scene(random_scene(np.random.default_rng(trial), n_paths=3))
        no_delay = ImpairmentConfig(detection_delay_median=0.0, detection_delay_stddev=0.0)
        with_delay = ImpairmentConfig(detection_delay_median=177e-9, detection_delay_stddev=24.76e-9)
        a, _, _ = _tof(paths, no_delay, "reciprocal", seed=trial)
        b, _, _ = _tof(paths, with_delay, "reciprocal", seed=trial)
        worst = max(worst, abs(a.seconds - b.seconds))
    _report(f"largest ToF change {worst * 1e9:.4f} ns")
    assert worst <= 0.05e-9


def _combined(paths, imp, seed):
    return np.array([c.value for c in zero_subcarrier_channels(synthesize_paths_sweep([paths], PLAN, imp, seed=seed))])


@pytest.mark.criterion(5, "CFO cancels at equal timestamps; 16-packet averaging cuts gap phase error 3x")
def test_c05_cfo_cancellation():
    paths = [PathComponent(15e-9, 1.0), PathComponent(22e-9, 0.4j)]
    ref = _combined(paths, ImpairmentConfig(cfo_hz=0.0), seed=1)
    worst = 0.0
    for cfo in np.linspace(-50e3, 50e3, 21):
        got = _combined(paths, ImpairmentConfig(cfo_hz=cfo), seed=1)
        worst = max(worst, float(np.max(np.abs(np.angle(got / ref)))))
    assert worst < 1e-6

    # 50 us between a packet and its ACK: the residual CFO after the radio's
    # own coarse correction turns into a phase error that alternating the
    # initiator cancels on average; gap jitter and noise remain
    def spread(n_packets):
        errs = []
        for trial in range(40):
            rng = np.random.default_rng(trial)
            imp = ImpairmentConfig(
                cfo_hz=rng.uniform(-2e3, 2e3), fwd_rev_gap=50e-6, gap_jitter=0.1,
                alternate_initiator=True, snr_db=30, packets_per_band=n_packets,
            )
            truth = true_channel(paths, PLAN.center_frequencies) ** 2
            errs.append(np.angle(_combined(paths, imp, seed=trial) / truth))
        return float(np.std(np.concatenate(errs)))

    one, sixteen = spread(1), spread(16)
    _report(f"equal-timestamp phase change {worst:.2e} rad; gap phase std {one:.4f} -> {sixteen:.4f} rad "
            f"({one / sixteen:.1f}x)")
    assert one / sixteen >= 3


@pytest.fixture(scope="module")
def noise_corridor():
    """Criterion-6 Monte Carlo: signed ToF errors, wall time, path counts."""
    start = time.perf_counter()
    errors = []
    imp = ImpairmentConfig(snr_db=20)
    for trial in range(200):
        rng = np.random.default_rng(10_000 + trial)
        paths = paths_from_scene(random_scene(rng, n_paths=5))
        est, _, _ = _tof(paths, imp, "reciprocal", seed=rng)
        errors.append(est.seconds - paths[0].delay)
    return np.array(errors), time.perf_counter() - start


@pytest.mark.criterion(6, "20 dB noise corridor: median ToF error < 1 ns over 200 trials in < 5 min")
def test_c06_noise_corridor(noise_corridor):
    errors, elapsed = noise_corridor
    abs_err = np.abs(errors) * 1e9
    _report(f"median {np.median(abs_err):.4f} ns, p95 {np.percentile(abs_err, 95):.4f} ns, "
            f"{np.mean(abs_err > 1):.1%} above 1 ns, {elapsed:.0f} s")
    assert len(errors) >= 200
    assert np.median(abs_err) < 1.0
    assert elapsed < 300


def _locate(anchors, device, range_errors):
    d_true = np.linalg.norm(anchors - device, axis=1)
    tofs = np.maximum(d_true / SPEED_OF_LIGHT + range_errors, 0.0)
    try:
        d = geometric_outlier_reject(distances_from_tofs(tofs), anchors)
        pos = localize(d, anchors)
    except (InsufficientDataError, LocalizationFailedError):
        return np.inf
    return float(np.hypot(pos.x - device[0], pos.y - device[1]))


@pytest.mark.criterion(7, "localization: 100 cm spread beats 30 cm (paired), 100 cm median < 1 m")
def test_c07_localization_corridor(noise_corridor):
    errors, _ = noise_corridor
    rng = np.random.default_rng(7)
    wide, narrow = triangle_anchors(1.0), triangle_anchors(0.3)
    err_wide, err_narrow = [], []
    for _ in range(600):
        r, theta = rng.uniform(1.0, 10.0), rng.uniform(0, 2 * np.pi)
        device = r * np.array([np.cos(theta), np.sin(theta)])
        draw = rng.choice(errors, size=3)  # same draw for both layouts
        err_wide.append(_locate(wide, device, draw))
        err_narrow.append(_locate(narrow, device, draw))
    med_wide, med_narrow = np.median(err_wide), np.median(err_narrow)
    _report(f"median error {med_wide * 100:.1f} cm (100 cm spread) vs {med_narrow * 100:.1f} cm (30 cm), "
            f"p95 {np.percentile(err_wide, 95) * 100:.1f} / {np.percentile(err_narrow, 95) * 100:.1f} cm")
    assert med_wide < med_narrow
    assert med_wide < 1.0


@pytest.mark.criterion(8, "two paths 10 ns apart: merged on any single band, resolved by the full plan")
def test_c08_bandwidth_stitching():
    truth = np.array([20e-9, 30e-9])
    paths = [PathComponent(truth[0], 1.0), PathComponent(truth[1], 0.8j)]
    merged = 0
    for band in PLAN:
        f = band.subcarrier_frequencies()
        prof = _record(invert_ndft(true_channel(paths, f), f, GRID))
        merged += len(find_peaks(prof)) == 1
    f = PLAN.center_frequencies
    prof = _record(invert_ndft(true_channel(paths, f), f, GRID))
    peaks = np.array([t for t, _ in find_peaks(prof)])
    _report(f"{merged}/35 single bands show one merged peak; full plan peaks {np.round(peaks * 1e9, 3)} ns")
    assert merged == len(PLAN)
    assert len(peaks) == 2 and np.all(np.abs(peaks - truth) <= 0.5e-9)


@pytest.mark.criterion(9, "2.4 GHz sub-plan unambiguous over >= 200 ns")
def test_c09_unambiguous_range():
    sub = PLAN.subset(lambda b: b.is_24ghz)
    got = unambiguous_range(sub)
    oracle = brute_force_ambiguity(sub.center_frequencies)
    _report(f"search {got * 1e9:.2f} ns, brute-force oracle {oracle * 1e9:.2f} ns")
    assert got == pytest.approx(oracle, abs=1e-15)
    assert got >= 200e-9


@pytest.mark.criterion(10, "sweep 84 +- 2 ms; 5% loss median < 120 ms over 1000 seeds; always synchronized")
def test_c10_sweep_timing():
    clean = run_sweep(PLAN, ProtocolConfig(), seed=0)
    assert abs(clean.total_duration - 84e-3) <= 2e-3
    assert clean.synchronized and len(clean.capture_times) == 35
    cfg = ProtocolConfig(loss_probability=0.05)
    durations, synced = [], []
    for seed in np.random.SeedSequence(2024).spawn(1000):
        trace = run_sweep(PLAN, cfg, seed=seed)
        durations.append(trace.total_duration)
        synced.append(trace.synchronized and len(trace.capture_times) == 35 and not trace.safety_violations)
    med = float(np.median(durations))
    _report(f"clean {clean.total_duration * 1e3:.2f} ms; lossy median {med * 1e3:.2f} ms, "
            f"max {max(durations) * 1e3:.2f} ms, {sum(synced)}/1000 synchronized")
    assert med < 120e-3
    assert all(synced)


@pytest.mark.criterion(11, "follow loop: stationary < 1 mm within 10 ticks; walking RMSE < 10 cm and below window 1")
def test_c11_follow_loop():
    cfg = TrackerConfig()
    # 1 m too far: the clamped first step plus geometric decay
    still = simulate_follow(
        stationary_trajectory((0.0, 0.0), 2.0), NoiseModel(sigma=0.0), cfg,
        initial_follower=(-(cfg.target_distance + 1.0), 0.0),
    )
    settle = int(np.argmax(np.abs(still.error) < 1e-3))
    assert np.all(np.abs(still.error[settle:]) < 1e-3)
    assert settle <= 10

    noise = NoiseModel(sigma=0.15)
    rmse12, rmse1 = [], []
    for seed in range(10):
        traj = random_walk_trajectory(np.random.default_rng(seed), duration=60.0)
        rmse12.append(simulate_follow(traj, noise, TrackerConfig(window=12), seed=seed, duration=60.0).rmse())
        rmse1.append(simulate_follow(traj, noise, TrackerConfig(window=1), seed=seed, duration=60.0).rmse())
    _report(f"stationary settles in {settle} ticks; walking RMSE window 12: median {np.median(rmse12) * 100:.2f} cm, "
            f"max {max(rmse12) * 100:.2f} cm; window 1: median {np.median(rmse1) * 100:.2f} cm")
    assert max(rmse12) < 0.10
    assert all(a < b for a, b in zip(rmse12, rmse1))


@pytest.mark.criterion(12, "solver: monotone objective everywhere, adjoint identity 1e-10, alpha-monotone sparsity")
def test_c12_solver_properties():
    rng = np.random.default_rng(12)
    f = PLAN.center_frequencies
    worst_adj = 0.0
    for _ in range(50):
        p = rng.standard_normal(GRID.size) + 1j * rng.standard_normal(GRID.size)
        r = rng.standard_normal(f.size) + 1j * rng.standard_normal(f.size)
        lhs = np.vdot(r, ndft_apply(p, GRID, f))
        rhs = np.vdot(ndft_adjoint(r, GRID, f), p)
        worst_adj = max(worst_adj, abs(lhs - rhs) / abs(lhs))
    assert worst_adj <= 1e-10

    # three decades of alpha; the coarse grid lets the smallest alphas
    # converge in seconds rather than minutes
    grid = DelayGrid(0.0, 100e-9, 0.5e-9)
    paths = paths_from_scene(random_scene(np.random.default_rng(5), n_paths=5, distance_range=(1.0, 8.0)))
    h = true_channel(paths, f)
    hmax = float(np.abs(ndft_adjoint(h, grid, f)).max())
    counts = []
    for a in np.logspace(-3, 0, 10) * 2.2 * hmax:
        prof = _record(invert_ndft(h, f, grid, SolverConfig(alpha=a, epsilon_scale=1e-8, max_iters=200_000)))
        assert prof.converged
        counts.append(prof.nonzero_count)
    _report(f"{len(MONOTONE)} solves, {sum(MONOTONE)} monotone; adjoint error {worst_adj:.1e}; "
            f"nonzeros over alpha sweep {counts}")
    assert all(b <= a for a, b in zip(counts, counts[1:]))
    assert counts[0] > counts[-1]
    assert all(MONOTONE)
