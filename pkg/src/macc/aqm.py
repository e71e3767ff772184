"""Router queue disciplines.

A :class:`PacketQueue` is the buffer that sits in front of a bottleneck link.
It delegates the admission decision (and, for CoDel, the dequeue decision) to
a discipline object:

* :class:`DropTail` drops only when the buffer is full.
* :class:`Red` is Floyd/Jacobson random early detection on an EWMA of the
  queue length.
* :class:`CoDel` admits unless full and drops at dequeue based on sojourn time.
* :class:`RlDiscipline` is the learned discipline: the agent picks one of two
  (p_drop, p_enqueue) modes per epoch and each data packet is dropped with
  probability ``p_drop / (p_drop + p_enqueue)``.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass

from .errors import ConfigError
from .sim.engine import NS_PER_S, seconds
from .sim.packet import DATA


class Verdict(enum.Enum):
    ENQUEUED = "enqueued"
    DROPPED = "dropped"


ENQUEUED = Verdict.ENQUEUED
DROPPED = Verdict.DROPPED

DROP_CAUSES = ("full", "red_early", "rl_random", "codel")

# The two reachable (p_drop, p_enqueue) modes, indexed by ``a & 1``.
RL_MODES = {0: (0.4, 0.7), 1: (0.6, 0.3)}


@dataclass(frozen=True)
class AqmMode:
    p_drop: float
    p_enqueue: float

    @property
    def drop_probability(self):
        """Per-packet drop probability after normalising the pair."""
        return self.p_drop / (self.p_drop + self.p_enqueue)


@dataclass(frozen=True)
class QueueState:
    occupancy: int
    capacity: int
    dequeue_rate: float  # packets / second over the window
    head_sojourn: float  # seconds
    queuing_delay: float  # mean sojourn of packets dequeued in the window, seconds


@dataclass(frozen=True)
class RedParams:
    min_th: float = 77.0
    max_th: float = 231.0
    w_q: float = 0.002
    max_p: float = 0.1

    def __post_init__(self):
        if not 0 < self.min_th < self.max_th:
            raise ValueError("RED needs 0 < min_th < max_th")
        if not 0 < self.w_q <= 1 or not 0 < self.max_p <= 1:
            raise ValueError("RED needs w_q and max_p in (0, 1]")


@dataclass(frozen=True)
class CodelParams:
    target: float = 0.005
    interval: float = 0.1

    def __post_init__(self):
        if not 0 < self.target < self.interval:
            raise ValueError("CoDel needs 0 < target < interval")


class PacketQueue:
    """Bounded FIFO of packets with drop accounting and epoch measurements."""

    def __init__(self, capacity, discipline, on_drop=None):
        if capacity < 1:
            raise ValueError("queue capacity must be >= 1")
        self.capacity = capacity
        self.discipline = discipline
        self.on_drop = on_drop
        self.buf = deque()
        self.bytes = 0
        self.drops = dict.fromkeys(DROP_CAUSES, 0)
        self.enqueued = 0
        self.dequeued = 0
        self.max_occupancy = 0
        self.empty_since = 0
        self._win_start = 0
        self._win_deq = 0
        self._win_sojourn = 0

    @property
    def occupancy(self):
        return len(self.buf)

    def offer(self, pkt, now) -> Verdict:
        """Run admission control and enqueue the packet if admitted."""
        verdict = self.discipline.admit(self, pkt, now)
        if verdict is ENQUEUED:
            pkt.enq_at = now
            self.buf.append(pkt)
            self.bytes += pkt.size
            self.enqueued += 1
            if len(self.buf) > self.max_occupancy:
                self.max_occupancy = len(self.buf)
        return verdict

    def pop(self, now):
        """Next packet to transmit, or None; the discipline may drop on the way."""
        return self.discipline.dequeue(self, now)

    # primitives used by disciplines
    def take(self, now):
        if not self.buf:
            return None
        pkt = self.buf.popleft()
        self.bytes -= pkt.size
        if not self.buf:
            self.empty_since = now
        return pkt

    def record_dequeue(self, pkt, now):
        self.dequeued += 1
        self._win_deq += 1
        self._win_sojourn += now - pkt.enq_at

    def drop(self, pkt, cause):
        self.drops[cause] += 1
        if self.on_drop is not None:
            self.on_drop(pkt, cause)

    def measure(self, now) -> QueueState:
        """Snapshot for the window since the previous call; resets the window."""
        window = now - self._win_start
        rate = self._win_deq * NS_PER_S / window if window > 0 else 0.0
        delay = self._win_sojourn / self._win_deq / NS_PER_S if self._win_deq else 0.0
        head = (now - self.buf[0].enq_at) / NS_PER_S if self.buf else 0.0
        self._win_start = now
        self._win_deq = 0
        self._win_sojourn = 0
        return QueueState(len(self.buf), self.capacity, rate, head, delay)


def measure(queue: PacketQueue, now: int) -> QueueState:
    return queue.measure(now)


class DropTail:
    name = "droptail"

    def admit(self, queue, pkt, now):
        if len(queue.buf) >= queue.capacity:
            queue.drop(pkt, "full")
            return DROPPED
        return ENQUEUED

    def dequeue(self, queue, now):
        pkt = queue.take(now)
        if pkt is not None:
            queue.record_dequeue(pkt, now)
        return pkt


def red_drop_probability(avg, params: RedParams):
    """Base RED drop probability as a function of the average queue size."""
    if avg < params.min_th:
        return 0.0
    if avg >= params.max_th:
        return 1.0
    return params.max_p * (avg - params.min_th) / (params.max_th - params.min_th)


class Red(DropTail):
    """Random early detection with Floyd's count-based spreading and idle decay."""

    name = "red"

    def __init__(self, params: RedParams, rng, typical_tx_time=1):
        self.params = params
        self.rng = rng
        # transmission time (ns) of a typical packet, for the idle-period decay
        self.typical_tx_time = max(1, int(typical_tx_time))
        self.avg = 0.0
        self.count = -1

    def update_average(self, queue, now):
        w = self.params.w_q
        q = len(queue.buf)
        if q == 0 and now > queue.empty_since:
            m = (now - queue.empty_since) / self.typical_tx_time
            self.avg *= (1.0 - w) ** m
        else:
            self.avg += w * (q - self.avg)
        return self.avg

    def admit(self, queue, pkt, now):
        avg = self.update_average(queue, now)
        if len(queue.buf) >= queue.capacity:
            queue.drop(pkt, "full")
            self.count = 0
            return DROPPED
        p = self.params
        if avg < p.min_th:
            self.count = -1
            return ENQUEUED
        if avg >= p.max_th:
            queue.drop(pkt, "red_early")
            self.count = 0
            return DROPPED
        self.count += 1
        pb = red_drop_probability(avg, p)
        pa = 1.0 if self.count * pb >= 1.0 else pb / (1.0 - self.count * pb)
        if self.rng.random() < pa:
            queue.drop(pkt, "red_early")
            self.count = 0
            return DROPPED
        return ENQUEUED


class CoDel(DropTail):
    """Controlled-delay AQM (Nichols & Jacobson), dropping at the head."""

    name = "codel"

    def __init__(self, params: CodelParams, mtu=1500):
        self.params = params
        self.target = seconds(params.target)
        self.interval = seconds(params.interval)
        self.mtu = mtu
        self.first_above_time = 0
        self.drop_next = 0
        self.count = 0
        self.lastcount = 0
        self.dropping = False
        self.drop_times = []  # ns timestamps of CoDel drops, for inspection

    def control_law(self, t):
        return t + round(self.interval / math.sqrt(self.count))

    def _do_dequeue(self, queue, now):
        pkt = queue.take(now)
        if pkt is None:
            self.first_above_time = 0
            return None, False
        sojourn = now - pkt.enq_at
        ok_to_drop = False
        if sojourn < self.target or queue.bytes <= self.mtu:
            self.first_above_time = 0
        elif self.first_above_time == 0:
            self.first_above_time = now + self.interval
        elif now >= self.first_above_time:
            ok_to_drop = True
        return pkt, ok_to_drop

    def _drop(self, queue, pkt, now):
        queue.drop(pkt, "codel")
        self.drop_times.append(now)

    def dequeue(self, queue, now):
        pkt, ok_to_drop = self._do_dequeue(queue, now)
        if pkt is None:
            self.dropping = False
            return None
        if self.dropping:
            if not ok_to_drop:
                self.dropping = False
            else:
                while now >= self.drop_next and self.dropping:
                    self._drop(queue, pkt, now)
                    self.count += 1
                    pkt, ok_to_drop = self._do_dequeue(queue, now)
                    if pkt is None or not ok_to_drop:
                        self.dropping = False
                    else:
                        self.drop_next = self.control_law(self.drop_next)
        elif ok_to_drop:
            self._drop(queue, pkt, now)
            pkt, ok_to_drop = self._do_dequeue(queue, now)
            self.dropping = True
            delta = self.count - self.lastcount
            if delta > 1 and now - self.drop_next < 16 * self.interval:
                self.count = delta
            else:
                self.count = 1
            self.drop_next = self.control_law(now)
            self.lastcount = self.count
        if pkt is not None:
            queue.record_dequeue(pkt, now)
        return pkt


class RlDiscipline(DropTail):
    """Learned discipline driven by one binary action per epoch."""

    name = "rl"

    def __init__(self, rng, action=0):
        self.rng = rng
        self.mode = None
        self.apply_action(action)

    def apply_action(self, a):
        if a not in (0, 1):
            raise ConfigError("action2", f"AQM action must be 0 or 1, got {a!r}")
        self.mode = AqmMode(*RL_MODES[a & 1])
        self._p = self.mode.drop_probability

    def admit(self, queue, pkt, now):
        if len(queue.buf) >= queue.capacity:
            queue.drop(pkt, "full")
            return DROPPED
        if pkt.kind == DATA and self.rng.random() < self._p:
            queue.drop(pkt, "rl_random")
            return DROPPED
        return ENQUEUED


def apply_aqm_action(queue: PacketQueue, a: int):
    """Set the RL discipline's mode from action ``a`` (``a & 1`` picks the mode)."""
    if not isinstance(queue.discipline, RlDiscipline):
        raise TypeError("apply_aqm_action requires the RL discipline")
    queue.discipline.apply_action(a)


def admit(queue: PacketQueue, packet, now=0) -> Verdict:
    return queue.offer(packet, now)


def dequeue_codel(queue: PacketQueue, now: int):
    if not isinstance(queue.discipline, CoDel):
        raise TypeError("dequeue_codel requires a CoDel queue")
    return queue.pop(now)


def make_discipline(cfg, rng, link_rate, mtu=1500):
    """Instantiate the discipline named by an :class:`~macc.config.AqmConfig`."""
    if cfg.kind == "droptail":
        return DropTail()
    if cfg.kind == "red":
        params = RedParams(cfg.red_min_th, cfg.red_max_th, cfg.red_w_q, cfg.red_max_p)
        return Red(params, rng, typical_tx_time=mtu * 8 * NS_PER_S // int(link_rate))
    if cfg.kind == "codel":
        return CoDel(CodelParams(cfg.codel_target, cfg.codel_interval), mtu=mtu)
    if cfg.kind == "rl":
        return RlDiscipline(rng)
    raise ValueError(f"unknown AQM kind {cfg.kind!r}")
