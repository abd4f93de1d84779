"""Discrete-event core: a seeded, deterministic event queue and named RNG streams.

Simulation time is an integer count of microseconds. All stochastic
subsystems draw from named substreams derived from one root seed, so adding
a new subsystem never perturbs the draws of existing ones and any run can be
replayed bit-for-bit from (config, seed).
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

US_PER_MS = 1000


class SchedulingError(RuntimeError):
    """An event was scheduled before the engine's current time."""


@dataclass(order=False)
class Event:
    fire_at: int  # microseconds
    action: Callable[[], None]
    tag: str = ""
    seq: int = -1  # assigned by the engine at schedule time


class Engine:
    """Single-threaded event loop ordered by (fire_at, insertion seq).

    Ties at the same firing time are processed in insertion order; there are
    no priority classes. An optional trace records (fire_at, seq, tag) for
    every processed event so replays can be compared byte-for-byte.
    """

    def __init__(self, trace: bool = False):
        self.now: int = 0
        self._heap: List[Tuple[int, int, Event]] = []
        self._next_seq: int = 0
        self.trace: Optional[List[Tuple[int, int, str]]] = [] if trace else None

    def schedule(self, event: Event) -> int:
        if event.fire_at < self.now:
            raise SchedulingError(
                f"event {event.tag!r} scheduled at t={event.fire_at} but now={self.now}"
            )
        event.seq = self._next_seq
        self._next_seq += 1
        heapq.heappush(self._heap, (event.fire_at, event.seq, event))
        return event.seq

    def schedule_at(self, fire_at: int, action: Callable[[], None], tag: str = "") -> int:
        return self.schedule(Event(fire_at=fire_at, action=action, tag=tag))

    def run_until(self, deadline: int) -> int:
        """Process every event with fire_at <= deadline, in order.

        Returns the number of events processed. `now` ends at the last
        processed firing time (it never advances past events, so an empty
        queue leaves `now` unchanged).
        """
        processed = 0
        while self._heap and self._heap[0][0] <= deadline:
            fire_at, seq, event = heapq.heappop(self._heap)
            self.now = fire_at
            if self.trace is not None:
                self.trace.append((fire_at, seq, event.tag))
            event.action()
            processed += 1
        return processed

    def pending(self) -> int:
        return len(self._heap)


@dataclass
class RngStream:
    """A named, reproducible random stream.

    The generator is Philox (counter-based); its 128-bit key is the SHA-256
    of the root seed and the stream label, so the same (seed, stream_id)
    yields the same draws on every platform and distinct labels give
    independent streams.
    """

    seed: int
    stream_id: str
    generator: np.random.Generator = field(repr=False, default=None)

    def __post_init__(self):
        if self.generator is None:
            self.generator = np.random.Generator(np.random.Philox(key=self._key()))

    def _key(self) -> np.ndarray:
        material = self.seed.to_bytes(8, "little", signed=False) + self.stream_id.encode("utf-8")
        digest = hashlib.sha256(material).digest()
        return np.frombuffer(digest[:16], dtype=np.uint64)


def derive_stream(root_seed: int, stream_id: str) -> RngStream:
    """Derive the named substream of a root seed."""
    if not stream_id:
        raise ValueError("stream_id must be non-empty")
    if not 0 <= root_seed < 2**64:
        raise ValueError("root_seed must fit in an unsigned 64-bit integer")
    return RngStream(seed=root_seed, stream_id=stream_id)
