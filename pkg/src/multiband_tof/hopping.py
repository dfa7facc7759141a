"""Discrete-event simulation of the channel-hopping handshake.

The transmitter (``tx``) drives the sweep. On each band it runs a few
measurement exchanges (packet + ACK), then near the end of the dwell sends
a control packet naming the next band. The receiver (``rx``) acknowledges
and both retune. A missing control ACK makes the transmitter retry until
``ack_timeout`` and then fall back to the default band; a receiver that
hears nothing for ``ack_timeout`` falls back too, so the two always meet
again on the default band, where the transmitter repeats its control
packet until it gets through.
"""

from __future__ import annotations

import csv
import heapq
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .band_plan import BandPlan, default_band_plan

TX = "tx"
RX = "rx"

# packet kinds
MEAS = "meas"
MEAS_ACK = "meas_ack"
CTRL = "ctrl"
CTRL_ACK = "ctrl_ack"


@dataclass(frozen=True)
class ProtocolConfig:
    """Timing and loss model.

    ``default_band`` is a position in the plan. ``loss_pattern``, when set,
    replaces random loss: it lists which deliverable transmissions (counted
    from 0 in simulation order) are dropped.
    """

    dwell: float = 2.4e-3
    ack_timeout: float = 5e-3
    retune_latency: float = 100e-6
    default_band: int = 0
    loss_probability: float = 0.0
    airtime: float = 100e-6
    turnaround: float = 50e-6
    packets_per_band: int = 3
    loss_pattern: frozenset | None = None
    max_duration: float = 60.0

    def __post_init__(self):
        if self.dwell <= 0:
            raise ValueError("dwell must be positive")
        if not 0 <= self.loss_probability < 1:
            raise ValueError("loss_probability must lie in [0, 1)")
        if self.ack_timeout <= self.exchange_time:
            raise ValueError("ack_timeout must exceed one packet/ACK turnaround")
        if self.packets_per_band < 1:
            raise ValueError("packets_per_band must be >= 1")
        if self.packets_per_band * self.exchange_time + self.control_budget > self.dwell + 1e-12:
            raise ValueError("dwell too short for the measurement and control exchanges")

    @property
    def exchange_time(self) -> float:
        """Packet airtime, turnaround, ACK airtime."""
        return 2 * self.airtime + self.turnaround

    @property
    def control_budget(self) -> float:
        return self.exchange_time + self.retune_latency


@dataclass
class SweepTrace:
    capture_times: dict[int, float]
    total_duration: float
    timeouts: int
    reverted_to_default: bool
    synchronized: bool
    final_bands: tuple[int | None, int | None]
    events: list[tuple[float, str, str, int | None]] = field(default_factory=list)
    safety_violations: list[float] = field(default_factory=list)

    @property
    def capture_timestamps(self) -> np.ndarray:
        return np.array(sorted(self.capture_times.values()))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["event_time", "node", "event_type", "band"])
            for t, node, kind, band in self.events:
                writer.writerow([f"{t:.9f}", node, kind, "" if band is None else band])


class _Sim:
    def __init__(self, plan: BandPlan, cfg: ProtocolConfig, seed):
        self.plan = plan
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.n = len(plan)
        if not 0 <= cfg.default_band < self.n:
            raise ValueError("default_band outside the plan")
        self.default = cfg.default_band
        self.queue = []
        self.counter = itertools.count()
        self.deliverable = 0
        self.now = 0.0
        self.events = []
        self.violations = []

        # node state: band None while retuning
        self.band = {TX: self.default, RX: self.default}
        self.captured: dict[int, float] = {}
        self.timeouts = 0
        self.reverted = False

        # transmitter bookkeeping
        self.tx_current = self.default
        self.tx_next = None
        self.tx_mode = "idle"  # measure | control | persist | retune | done
        self.tx_token = 0  # invalidates stale timers
        self.tx_successes = 0
        self.tx_deadline = 0.0
        self.ctrl_first = 0.0
        self.tx_done_at = None

        # receiver bookkeeping
        self.rx_timer = 0  # monotonic id; stale silence timers are ignored
        self.rx_armed = False  # off default with a revert timer running, or retuning to default
        self.rx_parked_at = 0.0

    # -- engine --------------------------------------------------------
    def at(self, t, prio, fn, *args):
        heapq.heappush(self.queue, (t, prio, next(self.counter), fn, args))

    def log(self, node, kind, band):
        self.events.append((self.now, node, kind, band))

    def run(self):
        self.log(TX, "start", self.default)
        self.log(RX, "start", self.default)
        self.at(0.0, 1, self.tx_begin_or_control)
        while self.queue:
            t, _, _, fn, args = heapq.heappop(self.queue)
            if t > self.cfg.max_duration:
                break
            self.now = t
            fn(*args)
            self.check_safety()

    def transmit(self, sender, kind, payload=None):
        band = self.band[sender]
        self.log(sender, f"send_{kind}", self.plan[band].index)
        self.at(self.now + self.cfg.airtime, 0, self.deliver, sender, kind, band, payload)

    def deliver(self, sender, kind, band, payload):
        receiver = RX if sender == TX else TX
        if self.band[receiver] != band:
            return
        idx = self.deliverable
        self.deliverable += 1
        if self.cfg.loss_pattern is not None:
            lost = idx in self.cfg.loss_pattern
        else:
            lost = self.cfg.loss_probability > 0 and self.rng.random() < self.cfg.loss_probability
        if lost:
            self.log(receiver, f"lost_{kind}", self.plan[band].index)
            return
        self.log(receiver, f"recv_{kind}", self.plan[band].index)
        if receiver == RX:
            self.rx_receive(kind, payload)
        else:
            self.tx_receive(kind, payload)

    def retune(self, node, target, then):
        self.band[node] = None
        self.log(node, "retune_start", self.plan[target].index)
        self.at(self.now + self.cfg.retune_latency, 0, self._arrive, node, target, then)

    def _arrive(self, node, target, then):
        self.band[node] = target
        self.log(node, "retune_done", self.plan[target].index)
        then()

    def check_safety(self):
        a, b = self.band[TX], self.band[RX]
        if a is None or b is None or a == b:
            return
        # diverged: at least one side must be on, or bounded-time headed to, the default band
        tx_safe = a == self.default or self.tx_mode in ("control", "persist", "done")
        rx_safe = b == self.default or self.rx_armed
        if not (tx_safe or rx_safe):
            self.violations.append(self.now)

    # -- transmitter -----------------------------------------------------
    def next_band(self, after):
        for step in range(1, self.n + 1):
            cand = (after + step) % self.n
            if cand not in self.captured:
                return cand
        return None

    def tx_begin_or_control(self):
        if self.default not in self.captured:
            self.tx_begin_slot(self.default)
        else:
            self.tx_control_start()

    def tx_begin_slot(self, band):
        self.tx_current = band
        self.tx_mode = "measure"
        self.tx_successes = 0
        self.tx_deadline = self.now + self.cfg.dwell - self.cfg.control_budget
        self.tx_send_meas()

    def tx_send_meas(self):
        if self.now + self.cfg.exchange_time > self.tx_deadline + 1e-12:
            self.at(self.tx_deadline, 1, self.tx_control_start)
            return
        self.tx_token += 1
        self.transmit(TX, MEAS)
        self.at(self.now + self.cfg.exchange_time, 1, self.tx_meas_timeout, self.tx_token)

    def tx_meas_timeout(self, token):
        if token == self.tx_token and self.tx_mode == "measure":
            self.tx_send_meas()

    def tx_control_start(self):
        nxt = self.next_band(self.tx_current)
        self.tx_next = self.default if nxt is None else nxt
        self.tx_mode = "control"
        self.ctrl_first = self.now
        self.tx_send_ctrl()

    def tx_send_ctrl(self):
        self.tx_token += 1
        self.transmit(TX, CTRL, self.tx_next)
        self.at(self.now + self.cfg.exchange_time, 1, self.tx_ctrl_timeout, self.tx_token)

    def tx_ctrl_timeout(self, token):
        if token != self.tx_token or self.tx_mode not in ("control", "persist"):
            return
        if self.tx_mode == "persist":
            self.tx_send_ctrl()
            return
        if self.now - self.ctrl_first + self.cfg.exchange_time > self.cfg.ack_timeout:
            self.timeouts += 1
            self.reverted = True
            self.log(TX, "timeout_revert", self.plan[self.default].index)
            if self.tx_next == self.default and len(self.captured) == self.n:
                self.tx_mode = "retune"
                self.retune(TX, self.default, self.tx_finish)
            elif self.band[TX] == self.default:
                self.tx_mode = "persist"
                self.tx_send_ctrl()
            else:
                self.tx_mode = "retune"
                self.retune(TX, self.default, self.tx_persist)
        else:
            self.tx_send_ctrl()

    def tx_persist(self):
        self.tx_mode = "persist"
        self.tx_current = self.default
        self.tx_send_ctrl()

    def tx_receive(self, kind, payload):
        if kind == MEAS_ACK and self.tx_mode == "measure":
            self.tx_token += 1
            self.tx_successes += 1
            if self.tx_successes >= self.cfg.packets_per_band:
                self.captured[self.tx_current] = self.now
                self.log(TX, "capture", self.plan[self.tx_current].index)
                self.tx_mode = "wait"
                self.at(self.tx_deadline, 1, self.tx_control_start)
            else:
                self.tx_send_meas()
        elif kind == CTRL_ACK and self.tx_mode in ("control", "persist") and payload == self.tx_next:
            self.tx_token += 1
            target = self.tx_next
            self.tx_mode = "retune"
            if target == self.default and len(self.captured) == self.n:
                if self.band[TX] == self.default:
                    self.tx_finish()
                else:
                    self.retune(TX, target, self.tx_finish)
            elif self.band[TX] == target:
                self.tx_begin_slot(target)
            else:
                self.retune(TX, target, lambda: self.tx_begin_slot(target))

    def tx_finish(self):
        self.tx_mode = "done"
        self.tx_done_at = self.now
        self.log(TX, "done", self.plan[self.default].index)

    # -- receiver --------------------------------------------------------
    def rx_arm(self):
        self.rx_timer += 1
        if self.band[RX] != self.default:
            self.rx_armed = True
            self.at(self.now + self.cfg.ack_timeout, 1, self.rx_silence, self.rx_timer)
        else:
            self.rx_armed = False
            self.rx_parked_at = self.now

    def rx_silence(self, timer):
        if timer != self.rx_timer or self.band[RX] is None:
            return
        self.reverted = True
        self.log(RX, "timeout_revert", self.plan[self.default].index)
        self.rx_timer += 1
        self.retune(RX, self.default, self.rx_arm)

    def rx_receive(self, kind, payload):
        if self.band[RX] != self.default:
            self.rx_arm()
        if kind == MEAS:
            self.at(self.now + self.cfg.turnaround, 0, self.rx_reply, MEAS_ACK, None, self.band[RX])
        elif kind == CTRL:
            self.at(self.now + self.cfg.turnaround, 0, self.rx_reply, CTRL_ACK, payload, self.band[RX])

    def rx_reply(self, kind, payload, band):
        if self.band[RX] != band:
            return
        self.transmit(RX, kind, payload)
        if kind == CTRL_ACK:
            target = payload
            if target == band:
                return
            def leave():
                self.rx_timer += 1
                self.retune(RX, target, self.rx_arm)

            self.at(self.now + self.cfg.airtime, 0, leave)


def run_sweep(plan: BandPlan | None = None, config: ProtocolConfig | None = None, seed=None) -> SweepTrace:
    """Simulate one full sweep; deterministic for a given seed."""
    plan = plan or default_band_plan()
    cfg = config or ProtocolConfig()
    sim = _Sim(plan, cfg, seed)
    sim.run()
    end = max(sim.tx_done_at if sim.tx_done_at is not None else sim.now, sim.rx_parked_at)
    sync = sim.tx_mode == "done" and sim.band[TX] == sim.band[RX] == sim.default
    return SweepTrace(
        capture_times={plan[b].index: t for b, t in sim.captured.items()},
        total_duration=end,
        timeouts=sim.timeouts,
        reverted_to_default=sim.reverted,
        synchronized=sync,
        final_bands=(sim.band[TX], sim.band[RX]),
        events=sim.events,
        safety_violations=sim.violations,
    )


def sweep_duration_cdf(
    config: ProtocolConfig | None = None, trials: int = 1000, plan: BandPlan | None = None, seed: int = 0
) -> np.ndarray:
    """Sorted sweep durations over ``trials`` seeds."""
    ss = np.random.SeedSequence(seed)
    durations = [run_sweep(plan, config, s).total_duration for s in ss.spawn(trials)]
    return np.sort(np.array(durations))
