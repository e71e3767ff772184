"""Deterministic discrete-event engine.

The clock is an integer count of nanoseconds. Events live in a binary heap
keyed by ``(at, seqno)`` where ``seqno`` is a global insertion counter, so
simultaneous events run in the order they were scheduled.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import random

import numpy as np

from ..errors import SchedulingError
from .packet import Packet

NS_PER_S = 1_000_000_000


def seconds(t: float) -> int:
    """Convert seconds to integer nanoseconds (rounded to nearest)."""
    return round(t * NS_PER_S)


def to_seconds(t_ns: int) -> float:
    return t_ns / NS_PER_S


def derive_seed(seed, *path):
    """Stable 64-bit child seed for a named component of a run."""
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for p in path:
        if isinstance(p, str):
            p = int.from_bytes(hashlib.sha256(p.encode()).digest()[:8], "little")
        words.append(int(p))
    ss = np.random.SeedSequence(words)
    return int(ss.generate_state(1, np.uint64)[0])


def component_rng(seed, *path) -> random.Random:
    """Mersenne-Twister stream for one simulator component.

    Streams are independent per component so that, e.g., enabling an AQM does
    not shift the packet-error draws of the bottleneck link.
    """
    return random.Random(derive_seed(seed, *path))


class Simulation:
    """Event queue plus clock and global packet bookkeeping."""

    def __init__(self, seed=0, trace=False):
        self.seed = seed
        self.now = 0
        self._heap = []
        self._counter = itertools.count()
        self._packet_ids = itertools.count()
        self.trace = [] if trace else None
        self.processed = 0
        # conservation counters
        self.sent = 0
        self.delivered = 0
        self.dropped = 0
        self.corrupted = 0

    # -- events -----------------------------------------------------------
    def schedule(self, at: int, handler, arg=None):
        if at < self.now:
            raise SchedulingError(
                f"cannot schedule {getattr(handler, '__qualname__', handler)} at {at} ns: clock is {self.now} ns")
        heapq.heappush(self._heap, (at, next(self._counter), handler, arg))

    def peek(self):
        """Time of the next pending event, or None."""
        return self._heap[0][0] if self._heap else None

    def pending(self):
        return len(self._heap)

    def run_until(self, t_end: int):
        if t_end < self.now:
            raise SchedulingError(f"run_until({t_end}) is before the clock ({self.now})")
        heap = self._heap
        pop = heapq.heappop
        trace = self.trace
        n = 0
        while heap and heap[0][0] <= t_end:
            at, seqno, handler, arg = pop(heap)
            self.now = at
            if trace is not None:
                trace.append((at, seqno, handler.__qualname__, getattr(arg, "id", None)))
            handler(arg)
            n += 1
        self.processed += n
        self.now = t_end

    # -- packets ----------------------------------------------------------
    def new_packet(self, flow, kind, seq, size, **kw) -> Packet:
        self.sent += 1
        return Packet(next(self._packet_ids), flow, kind, seq, size, self.now, **kw)

    @property
    def in_flight(self):
        return self.sent - self.delivered - self.dropped - self.corrupted

    def packets_in_events(self):
        """Packets carried by pending events (in transit on some link)."""
        return sum(1 for ev in self._heap if isinstance(ev[3], Packet))
