"""Slotted contention simulators: grant-based orthogonal access with collisions
and backoff (OMA) versus grant-free non-orthogonal access with successive
interference cancellation (NOMA).

Both schemes share one scenario: D devices, N_s subbands of W/N_s bandwidth
each, a fixed payload per device, equal received SNR for every device, and
1-ms slots. OMA devices that collide (two contenders on one subband, or any
contender on an occupied subband) redraw a uniform backoff; a device alone
on a free subband captures it at the full subband rate for the whole packet.
NOMA devices transmit every slot regardless; the k devices sharing a subband
are SIC-decoded in ascending device-id order, the i-th of them at rate
(W/N_s) * log2(1 + snr / (1 + (k-i)*snr)), which telescopes to the k-user
sum rate (W/N_s) * log2(1 + k*snr).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .engine import Engine, derive_stream

US_PER_MS = 1000


@dataclass(frozen=True)
class MaScenario:
    """Contention scenario. Defaults are sized so transmissions span many
    slots (61 at the default SNR), which is what makes the OMA/NOMA tradeoff
    visible: collisions cost OMA backoff, sharing costs NOMA rate, and the
    two dominate at opposite ends of the device-count axis."""

    devices: int
    subbands: int = 10
    bandwidth_hz: float = 1e8
    payload_bits: float = 4e6
    snr: float = 100.0
    slot_ms: float = 1.0
    backoff_window: int = 16
    max_slots: int = 20000
    arrival: str = "batch"  # "batch" (all at t=0) or "poisson"
    poisson_rate_per_ms: float = 1.0
    oma_grant_overhead_ms: float = 0.0

    def __post_init__(self):
        if self.devices < 1 or self.subbands < 1:
            raise ValueError("devices and subbands must be >= 1")
        if self.bandwidth_hz <= 0 or self.payload_bits <= 0 or self.slot_ms <= 0:
            raise ValueError("bandwidth, payload and slot length must be positive")
        if self.snr <= 0:
            raise ValueError("snr must be positive (linear)")
        if self.backoff_window < 1:
            raise ValueError("backoff_window must be >= 1")
        if self.arrival not in ("batch", "poisson"):
            raise ValueError(f"arrival must be 'batch' or 'poisson', got {self.arrival!r}")
        if self.arrival == "poisson" and self.poisson_rate_per_ms <= 0:
            raise ValueError("poisson_rate_per_ms must be positive")

    @property
    def subband_hz(self) -> float:
        return self.bandwidth_hz / self.subbands

    @property
    def full_rate_bits_per_slot(self) -> float:
        """Bits one uncontended device moves per slot."""
        return self.subband_hz * math.log2(1.0 + self.snr) * (self.slot_ms / 1e3)

    @property
    def uncontended_slots(self) -> int:
        return math.ceil(self.payload_bits / self.full_rate_bits_per_slot)


@dataclass(frozen=True)
class AccessResult:
    scheme: str
    scenario: MaScenario
    seed: int
    delay_ms: np.ndarray = field(repr=False)  # per device; NaN if undelivered

    @property
    def delivered(self) -> int:
        return int(np.sum(np.isfinite(self.delay_ms)))

    @property
    def undelivered(self) -> int:
        return int(self.delay_ms.size - self.delivered)

    @property
    def delivered_delays(self) -> np.ndarray:
        return self.delay_ms[np.isfinite(self.delay_ms)]

    def mean_delay_ms(self, censor_undelivered: bool = True) -> float:
        """Mean delivery delay; undelivered devices count at the simulation
        horizon (a lower bound on their true delay) unless censoring is off."""
        if censor_undelivered:
            horizon = self.scenario.max_slots * self.scenario.slot_ms
            return float(np.mean(np.nan_to_num(self.delay_ms, nan=horizon)))
        d = self.delivered_delays
        return float(np.mean(d)) if d.size else math.nan


def _arrival_slots(scenario: MaScenario, seed: int, stream: str) -> np.ndarray:
    if scenario.arrival == "batch":
        return np.zeros(scenario.devices, dtype=np.int64)
    rng = derive_stream(seed, stream).generator
    gaps = rng.exponential(1.0 / scenario.poisson_rate_per_ms, size=scenario.devices)
    return np.floor(np.cumsum(gaps) / scenario.slot_ms).astype(np.int64)


def noma_sic_rates(k: int, snr: float, subband_hz: float) -> np.ndarray:
    """Per-user rates (bits/s) on one subband with k SIC-ordered users."""
    i = np.arange(1, k + 1, dtype=np.float64)
    return subband_hz * np.log2(1.0 + snr / (1.0 + (k - i) * snr))


def simulate_oma(scenario: MaScenario, seed: int) -> AccessResult:
    """Slotted random subband choice with capture and uniform backoff."""
    d = scenario.devices
    arrivals = _arrival_slots(scenario, seed, "oma.arrivals")
    rng = derive_stream(seed, "oma.contention").generator

    tx_slots = scenario.uncontended_slots
    backoff_until = np.zeros(d, dtype=np.int64)
    done = np.zeros(d, dtype=bool)
    transmitting_until = np.full(d, -1, dtype=np.int64)
    subband_busy_until = np.zeros(scenario.subbands, dtype=np.int64)  # exclusive
    delay_ms = np.full(d, np.nan)

    engine = Engine()
    slot_us = int(round(scenario.slot_ms * US_PER_MS))

    def tick():
        t = engine.now // slot_us
        finished = (transmitting_until == t) & ~done
        if np.any(finished):
            done[finished] = True
            delay_ms[finished] = (
                (t - arrivals[finished]) * scenario.slot_ms + scenario.oma_grant_overhead_ms
            )
        contending = np.nonzero(
            (arrivals <= t) & ~done & (transmitting_until < 0) & (backoff_until <= t)
        )[0]
        if contending.size:
            picks = rng.integers(0, scenario.subbands, size=contending.size)
            counts = np.bincount(picks, minlength=scenario.subbands)
            occupied = subband_busy_until > t
            ok = (counts[picks] == 1) & ~occupied[picks]
            winners = contending[ok]
            transmitting_until[winners] = t + tx_slots
            subband_busy_until[picks[ok]] = t + tx_slots
            losers = contending[~ok]
            if losers.size:
                backoff_until[losers] = t + rng.integers(
                    1, scenario.backoff_window + 1, size=losers.size
                )
        if t + 1 < scenario.max_slots and not (done.all() and transmitting_until.max() <= t):
            engine.schedule_at((t + 1) * slot_us, tick, tag="slot")

    engine.schedule_at(0, tick, tag="slot")
    engine.run_until(scenario.max_slots * slot_us)
    # transmissions that end exactly at the horizon still complete
    t_end = scenario.max_slots
    finished = (transmitting_until >= 0) & (transmitting_until <= t_end) & ~done
    done[finished] = True
    delay_ms[finished] = (
        (transmitting_until[finished] - arrivals[finished]) * scenario.slot_ms
        + scenario.oma_grant_overhead_ms
    )
    return AccessResult("oma", scenario, seed, delay_ms)


def simulate_noma(scenario: MaScenario, seed: int) -> AccessResult:
    """Grant-free transmission with per-slot subband choice and SIC rates."""
    d = scenario.devices
    arrivals = _arrival_slots(scenario, seed, "noma.arrivals")
    rng = derive_stream(seed, "noma.subbands").generator

    remaining = np.full(d, float(scenario.payload_bits))
    done = np.zeros(d, dtype=bool)
    delay_ms = np.full(d, np.nan)
    slot_s = scenario.slot_ms / 1e3
    snr = scenario.snr
    sub_hz = scenario.subband_hz

    engine = Engine()
    slot_us = int(round(scenario.slot_ms * US_PER_MS))

    def tick():
        t = engine.now // slot_us
        active = np.nonzero((arrivals <= t) & ~done)[0]  # ascending id = SIC order
        if active.size:
            picks = rng.integers(0, scenario.subbands, size=active.size)
            order = np.argsort(picks, kind="stable")
            sorted_picks = picks[order]
            counts = np.bincount(sorted_picks, minlength=scenario.subbands)
            starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
            pos = np.arange(active.size) - starts[sorted_picks]  # 0-based decode index
            k = counts[sorted_picks].astype(np.float64)
            rates = sub_hz * np.log2(1.0 + snr / (1.0 + (k - pos - 1.0) * snr))
            remaining[active[order]] -= rates * slot_s
            newly = active[order][remaining[active[order]] <= 1e-9]
            if newly.size:
                done[newly] = True
                delay_ms[newly] = (t + 1 - arrivals[newly]) * scenario.slot_ms
        if t + 1 < scenario.max_slots and not done.all():
            engine.schedule_at((t + 1) * slot_us, tick, tag="slot")

    engine.schedule_at(0, tick, tag="slot")
    engine.run_until(scenario.max_slots * slot_us)
    return AccessResult("noma", scenario, seed, delay_ms)


def simulate(scenario: MaScenario, scheme: str, seed: int) -> AccessResult:
    if scheme == "oma":
        return simulate_oma(scenario, seed)
    if scheme == "noma":
        return simulate_noma(scenario, seed)
    raise ValueError(f"unknown scheme {scheme!r}")


@dataclass(frozen=True)
class CurvePoint:
    scheme: str
    devices: int
    mean_delay_ms: float
    ci95_ms: float
    seed_means: Tuple[float, ...]
    undelivered_total: int


def delay_vs_devices(
    scenario: MaScenario,
    device_counts: Sequence[int],
    seeds: Sequence[int],
    scheme: str,
) -> List[CurvePoint]:
    """Mean delay (censored at the horizon) vs device count, with a normal
    95% interval over per-seed means."""
    counts = list(device_counts)
    if counts != sorted(counts):
        raise ValueError("device_counts must be ascending")
    points = []
    for dcount in counts:
        sc = replace(scenario, devices=dcount)
        means = []
        undelivered = 0
        for seed in seeds:
            res = simulate(sc, scheme, seed)
            means.append(res.mean_delay_ms())
            undelivered += res.undelivered
        arr = np.asarray(means)
        ci = 1.96 * arr.std(ddof=1) / math.sqrt(arr.size) if arr.size > 1 else 0.0
        points.append(
            CurvePoint(scheme, dcount, float(arr.mean()), float(ci), tuple(means), undelivered)
        )
    return points
