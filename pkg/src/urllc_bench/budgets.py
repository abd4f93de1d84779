"""Closed-form delay budgets for LTE access procedures and receiver processing.

Budgets are exact: component durations are kept as rational milliseconds
(`fractions.Fraction`), so composed totals like 17 ms or 7.5 ms are equalities,
not float approximations. Conversion to integer microseconds happens only at
the simulator boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from numbers import Rational
from typing import Dict, List, Sequence, Tuple, Union

MsLike = Union[int, float, str, Fraction]

# LTE Release 8 access-delay constants (ms).
GRANT_ACQUISITION_MS = Fraction(5)
RANDOM_ACCESS_MS = Fraction(19, 2)  # 9.5
TTI_MS = Fraction(1)
SIGNAL_PROCESSING_MS = Fraction(3)
HARQ_RETX_MS = Fraction(8)
TTI_ALIGNMENT_MS = Fraction(1, 2)  # downlink subframe alignment, 0.5

# Scheduling-request opportunities: the 5 ms grant-acquisition figure is the
# mean wait for a request opportunity; simulators that need a waiting-time
# distribution draw uniform(0, 2 * SR_PERIOD_MS).
SR_PERIOD_MS = Fraction(5)

# Measured time (s) per receiver function module at 1.4 / 5 / 10 MHz,
# closed-loop spatial multiplexing, 4x2 antennas, 16-QAM, rate 0.3691, 10 dB.
PROCESSING_TIME_S: Dict[str, Tuple[float, float, float]] = {
    "CFO Compensation": (0.0010, 0.0023, 0.0037),
    "FFT": (2.9004e-04, 6.2917e-04, 8.3004e-04),
    "Disassemble Reference Signal": (1.2523e-04, 2.2708e-04, 3.1685e-04),
    "Channel Estimation (MMSE)": (0.0015, 0.0141, 0.0878),
    "Disassemble Symbols": (0.0013, 0.0045, 0.0087),
    "MIMO Detection (MMSE-SIC)": (0.0028, 0.0242, 0.0760),
    "SINR Calculation": (2.4947e-04, 6.6754e-04, 0.0012),
    "Layer Demapping": (4.3253e-05, 1.0988e-04, 3.8987e-04),
    "Turbo Decoding": (0.0129, 0.0498, 0.1048),
}

BANDWIDTH_COLUMNS = ("1.4MHz", "5MHz", "10MHz")


class Procedure(Enum):
    UPLINK_GRANT_BASED = "uplink_grant_based"
    DOWNLINK = "downlink"
    RANDOM_ACCESS = "random_access"


def as_ms(value: MsLike) -> Fraction:
    """Coerce a duration to exact rational milliseconds.

    Floats are converted through their decimal string so 0.1 becomes 1/10,
    not the nearest binary float.
    """
    if isinstance(value, bool):
        raise TypeError("duration must be a number, not bool")
    if isinstance(value, Rational):
        frac = Fraction(value)
    elif isinstance(value, float):
        frac = Fraction(str(value))
    elif isinstance(value, (int, str)):
        frac = Fraction(value)
    else:
        raise TypeError(f"cannot interpret {value!r} as milliseconds")
    return frac


@dataclass(frozen=True)
class DelayComponent:
    name: str
    duration_ms: Fraction

    def __post_init__(self):
        object.__setattr__(self, "duration_ms", as_ms(self.duration_ms))
        if self.duration_ms < 0:
            raise ValueError(f"component {self.name!r} has negative duration")


@dataclass(frozen=True)
class DelayBudget:
    """An ordered composition of delay components plus HARQ and core terms."""

    procedure: Procedure
    components: Tuple[DelayComponent, ...]
    harq_retx: int = 0
    harq_rtt_ms: Fraction = HARQ_RETX_MS
    core_network_extra_ms: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "harq_rtt_ms", as_ms(self.harq_rtt_ms))
        object.__setattr__(self, "core_network_extra_ms", as_ms(self.core_network_extra_ms))
        if self.harq_retx < 0:
            raise ValueError("harq_retx must be >= 0")

    @property
    def total_ms(self) -> Fraction:
        total = sum((c.duration_ms for c in self.components), Fraction(0))
        return total + self.harq_retx * self.harq_rtt_ms + self.core_network_extra_ms

    def rows(self) -> List[Tuple[str, Fraction, Fraction]]:
        """(component, ms, cumulative ms) rows, HARQ and core terms included."""
        out: List[Tuple[str, Fraction, Fraction]] = []
        cum = Fraction(0)
        for c in self.components:
            cum += c.duration_ms
            out.append((c.name, c.duration_ms, cum))
        if self.harq_retx:
            extra = self.harq_retx * self.harq_rtt_ms
            cum += extra
            out.append((f"harq_retransmissions(x{self.harq_retx})", extra, cum))
        if self.core_network_extra_ms:
            cum += self.core_network_extra_ms
            out.append(("core_network_extra", self.core_network_extra_ms, cum))
        return out


def uplink_budget(
    sr_wait: MsLike = GRANT_ACQUISITION_MS,
    tti: MsLike = TTI_MS,
    proc: MsLike = SIGNAL_PROCESSING_MS,
) -> DelayBudget:
    """Grant-based uplink: SR wait, SR, grant, then data, with processing between.

    Defaults compose to 17 ms: 5 + 1 + 3 + 1 + 3 + 1 + 3.
    """
    sr_wait, tti, proc = as_ms(sr_wait), as_ms(tti), as_ms(proc)
    for v in (sr_wait, tti, proc):
        if v < 0:
            raise ValueError("durations must be >= 0")
    components = (
        DelayComponent("scheduling_request_wait", sr_wait),
        DelayComponent("scheduling_request_transmission", tti),
        DelayComponent("grant_processing_at_bs", proc),
        DelayComponent("grant_transmission", tti),
        DelayComponent("grant_decoding_at_ue", proc),
        DelayComponent("uplink_data_transmission", tti),
        DelayComponent("data_decoding_at_bs", proc),
    )
    return DelayBudget(Procedure.UPLINK_GRANT_BASED, components)


def downlink_budget(
    proc_in: MsLike = SIGNAL_PROCESSING_MS,
    tti_align: MsLike = TTI_ALIGNMENT_MS,
    tti: MsLike = TTI_MS,
    ue_proc: MsLike = SIGNAL_PROCESSING_MS,
) -> DelayBudget:
    """Downlink data path, 7.5 ms with defaults (no grant acquisition needed)."""
    proc_in, tti_align, tti, ue_proc = map(as_ms, (proc_in, tti_align, tti, ue_proc))
    for v in (proc_in, tti_align, tti, ue_proc):
        if v < 0:
            raise ValueError("durations must be >= 0")
    components = (
        DelayComponent("incoming data processing", proc_in),
        DelayComponent("TTI alignment", tti_align),
        DelayComponent("transmission", tti),
        DelayComponent("data decoding in UE", ue_proc),
    )
    return DelayBudget(Procedure.DOWNLINK, components)


def random_access_budget(core_network_extra: MsLike = 0) -> DelayBudget:
    """Random-access entry for a user not aligned with the base station: 9.5 ms.

    Covers preamble transmission and detection, scheduling, and processing at
    both ends. An unaligned user then still runs the grant-based uplink
    procedure, so compose with `uplink_budget` for the full 26.5 ms path.
    """
    components = (DelayComponent("random_access_procedure", RANDOM_ACCESS_MS),)
    return DelayBudget(
        Procedure.RANDOM_ACCESS,
        components,
        core_network_extra_ms=as_ms(core_network_extra),
    )


def with_harq(budget: DelayBudget, retx: int) -> DelayBudget:
    """Add `retx` HARQ round trips (8 ms each by default) to a budget."""
    if retx < 0:
        raise ValueError("retx must be >= 0")
    return replace(budget, harq_retx=budget.harq_retx + retx)


class MissingModuleError(KeyError):
    """A processing profile lacks one of the nine receiver modules."""


@dataclass(frozen=True)
class ProcessingProfile:
    bandwidth: str  # one of BANDWIDTH_COLUMNS
    module_times_s: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def for_bandwidth(cls, bandwidth: str) -> "ProcessingProfile":
        if bandwidth not in BANDWIDTH_COLUMNS:
            raise ValueError(f"bandwidth must be one of {BANDWIDTH_COLUMNS}, got {bandwidth!r}")
        col = BANDWIDTH_COLUMNS.index(bandwidth)
        times = {name: cols[col] for name, cols in PROCESSING_TIME_S.items()}
        return cls(bandwidth=bandwidth, module_times_s=times)


def processing_total(profile: ProcessingProfile) -> Tuple[float, Dict[str, float]]:
    """Sum a receiver-processing profile and return per-module time shares.

    Raises MissingModuleError naming the first absent module; extra rows are
    rejected too, so a profile is exactly the nine receive modules.
    """
    for name in PROCESSING_TIME_S:
        if name not in profile.module_times_s:
            raise MissingModuleError(name)
    unknown = set(profile.module_times_s) - set(PROCESSING_TIME_S)
    if unknown:
        raise ValueError(f"unknown receiver modules: {sorted(unknown)}")
    for name, t in profile.module_times_s.items():
        if not t > 0:
            raise ValueError(f"module {name!r} must have positive time, got {t}")
    total = sum(profile.module_times_s.values())
    shares = {name: t / total for name, t in profile.module_times_s.items()}
    return total, shares
