"""Sender-side transport: NewReno, a fixed-rate sender and the RL actuator.

The congestion-control logic is written as plain functions over a
:class:`TcpFlowState` (``on_ack``, ``on_timeout``, ``apply_tcp_action``,
``send_gate``) so it can be table-tested without a simulator. The
:class:`TcpSender` / :class:`FixedRateSender` classes wire that logic to links
and timers.

RL flows share NewReno's loss-recovery mechanics (fast retransmit, partial-ack
retransmissions, RTO with go-back-N) but never change ``cwnd`` or ``ssthresh``
themselves: those are written only by :func:`apply_tcp_action` at epoch
boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError
from .sim.engine import NS_PER_S, seconds
from .sim.packet import ACK, DATA

NEWRENO = "newreno"
FIXEDRATE = "fixedrate"
RL = "rl"

UNBOUNDED = 1 << 62


@dataclass(slots=True)
class TcpFlowState:
    segment_size: int = 1448
    cwnd: int = 10 * 1448
    ssthresh: int = UNBOUNDED
    kind: str = NEWRENO
    snd_una: int = 0
    snd_nxt: int = 0
    snd_max: int = 0
    dupacks: int = 0
    in_recovery: bool = False
    recover: int = 0
    partial_acks: int = 0  # partial acks seen in the current recovery
    srtt: float | None = None  # seconds
    rttvar: float = 0.0
    rto: int = NS_PER_S  # ns
    min_rto: int = seconds(0.2)
    max_rto: int = seconds(60.0)
    segments_acked_epoch: int = 0
    unknown_acks: int = 0
    fast_retransmits: int = 0
    timeouts: int = 0
    ca_carry: int = 0  # remainder of seg*seg / cwnd, so growth is not truncated away

    @property
    def bytes_in_flight(self):
        return self.snd_nxt - self.snd_una

    @property
    def rtt_estimate(self):
        return self.srtt if self.srtt is not None else 0.0


def update_rtt(flow: TcpFlowState, sample: float):
    """RFC 6298 estimator: gain 1/8 on SRTT, 1/4 on RTTVAR.

    The minimum RTO floors the variance term, as Linux does, not the total.
    Behind a standing queue RTTVAR collapses, and a clamp on the total leaves
    the timer too close to SRTT to survive one fast-recovery round.
    """
    if flow.srtt is None:
        flow.srtt = sample
        flow.rttvar = sample / 2.0
    else:
        flow.rttvar = 0.75 * flow.rttvar + 0.25 * abs(flow.srtt - sample)
        flow.srtt = 0.875 * flow.srtt + 0.125 * sample
    rto = seconds(flow.srtt) + max(seconds(4.0 * flow.rttvar), flow.min_rto)
    flow.rto = min(rto, flow.max_rto)


def on_ack(flow: TcpFlowState, ack_no: int, rtt_sample: float | None = None):
    """Process a cumulative ack; returns the seq to retransmit, or None."""
    if rtt_sample is not None:
        update_rtt(flow, rtt_sample)
    if ack_no > flow.snd_max or ack_no < flow.snd_una:
        flow.unknown_acks += 1
        return None
    seg = flow.segment_size
    window_owner = flow.kind != RL

    if ack_no > flow.snd_una:
        acked = ack_no - flow.snd_una
        flow.snd_una = ack_no
        if flow.snd_nxt < ack_no:
            flow.snd_nxt = ack_no
        flow.segments_acked_epoch += -(-acked // seg)
        if flow.in_recovery:
            if ack_no >= flow.recover:
                flow.in_recovery = False
                flow.dupacks = 0
                if window_owner:
                    flow.cwnd = min(flow.ssthresh, max(flow.snd_nxt - ack_no, seg) + seg)
                return None
            # partial ack: retransmit the next hole, deflate the window
            flow.partial_acks += 1
            if window_owner:
                flow.cwnd = max(seg, flow.cwnd - acked + (seg if acked >= seg else 0))
            return flow.snd_una
        flow.dupacks = 0
        if window_owner:
            if flow.cwnd < flow.ssthresh:
                flow.cwnd += min(acked, seg)
            else:
                inc, flow.ca_carry = divmod(seg * seg + flow.ca_carry, flow.cwnd)
                flow.cwnd += inc
        return None

    # duplicate ack
    if flow.snd_max == flow.snd_una:
        return None
    flow.dupacks += 1
    if flow.in_recovery:
        if window_owner:
            flow.cwnd += seg
        return None
    if flow.dupacks == 3 and ack_no >= flow.recover:
        flow.in_recovery = True
        flow.recover = flow.snd_max
        flow.partial_acks = 0
        flow.fast_retransmits += 1
        if window_owner:
            flow.ssthresh = max(flow.bytes_in_flight // 2, 2 * seg)
            flow.cwnd = flow.ssthresh + 3 * seg
        return flow.snd_una
    return None


def on_timeout(flow: TcpFlowState):
    """Retransmission timeout; returns the seq to retransmit, or None."""
    if flow.snd_max == flow.snd_una:
        return None
    seg = flow.segment_size
    flow.timeouts += 1
    if flow.kind != RL:
        flow.ssthresh = max(flow.bytes_in_flight // 2, 2 * seg)
        flow.cwnd = seg
    flow.recover = flow.snd_max
    flow.in_recovery = False
    flow.dupacks = 0
    flow.rto = min(flow.rto * 2, flow.max_rto)
    # go-back-N from the earliest unacked segment
    flow.snd_nxt = flow.snd_una + seg
    return flow.snd_una


def apply_tcp_action(flow: TcpFlowState, a: int, mode: str = "corrected"):
    """Epoch-boundary cwnd / ssthresh update chosen by the transport agent.

    Odd actions add one segment; even actions add ``seg**2 / cwnd`` (corrected
    mode) or ``seg**2`` (literal mode), with a floor of one byte. Actions 0-2
    pin ssthresh at two segments, action 3 sets it to the bytes in flight.
    """
    if a not in (0, 1, 2, 3):
        raise ConfigError("action1", f"transport action must be in 0..3, got {a!r}")
    seg = flow.segment_size
    if a & 1:
        flow.cwnd += seg
    elif mode == "literal":
        flow.cwnd += max(1, seg * seg)
    elif mode == "corrected":
        flow.cwnd += max(1, seg * seg // flow.cwnd)
    else:
        raise ConfigError("transport.action_mode", f"unknown mode {mode!r}")
    flow.ssthresh = 2 * seg if a < 3 else flow.bytes_in_flight


def send_gate(flow: TcpFlowState) -> int:
    """Number of new segments the window allows right now."""
    return max(0, (flow.cwnd - flow.bytes_in_flight) // flow.segment_size)


# ------------------------------------------------------------------ senders


@dataclass
class FlowCounters:
    """Per-flow counters read and reset by the environment each epoch."""

    rtt_samples: list = field(default_factory=list)
    rtt_min: float = float("inf")
    data_sent: int = 0
    retransmissions: int = 0
    window_violations: int = 0


class TcpSender:
    """Bulk-transfer sender (infinite backlog) driven by a :class:`TcpFlowState`."""

    def __init__(self, sim, flow_id, state: TcpFlowState, route, header_size=52):
        self.sim = sim
        self.flow_id = flow_id
        self.state = state
        self.route = route  # callable(packet): puts the packet on the access link
        self.header_size = header_size
        self.counters = FlowCounters()
        self.started = False
        self._deadline = None
        self._timer_at = None

    @property
    def kind(self):
        return self.state.kind

    def start(self, _=None):
        self.started = True
        self._fill_window()

    def _transmit(self, seq, retx):
        st = self.state
        pkt = self.sim.new_packet(self.flow_id, DATA, seq, st.segment_size + self.header_size,
                                  payload=st.segment_size, retx=retx)
        self.counters.data_sent += 1
        if retx:
            self.counters.retransmissions += 1
        self.route(pkt)
        if self._deadline is None:
            self._arm(self.sim.now + st.rto)

    def _fill_window(self):
        st = self.state
        seg = st.segment_size
        for _ in range(send_gate(st)):
            seq = st.snd_nxt
            st.snd_nxt += seg
            if st.snd_nxt > st.snd_max:
                st.snd_max = st.snd_nxt
                self._transmit(seq, False)
            else:
                self._transmit(seq, True)
            if st.bytes_in_flight > st.cwnd + seg:
                self.counters.window_violations += 1

    def on_ack(self, pkt):
        """Ack arrival handler (scheduled by the reverse access link)."""
        st = self.state
        now = self.sim.now
        rtt = (now - pkt.echo) / NS_PER_S
        c = self.counters
        c.rtt_samples.append(rtt)
        if rtt < c.rtt_min:
            c.rtt_min = rtt
        before = st.snd_una
        retx = on_ack(st, pkt.ack, rtt)
        if st.snd_una > before:
            if st.snd_una == st.snd_max:
                self._deadline = None
            elif not st.in_recovery or st.partial_acks <= 1:
                # RFC 6582 "impatient" variant: only the first partial ack resets the timer
                self._arm(now + st.rto)
        if retx is not None:
            self._transmit(retx, True)
        self._fill_window()

    # retransmission timer: one pending event at a time, deadline moved lazily
    def _arm(self, deadline):
        self._deadline = deadline
        if self._timer_at is None or self._timer_at > deadline:
            self._timer_at = deadline
            self.sim.schedule(deadline, self._on_timer, deadline)

    def _on_timer(self, fired_for):
        if fired_for != self._timer_at:
            return  # superseded by an earlier-scheduled timer
        self._timer_at = None
        if self._deadline is None:
            return
        now = self.sim.now
        if self._deadline > now:
            self._arm(self._deadline)
            return
        self._deadline = None
        seq = on_timeout(self.state)
        if seq is not None:
            self._transmit(seq, True)
            self._fill_window()


class FixedRateSender:
    """Open-loop sender emitting one full segment every ``size*8/rate`` seconds."""

    def __init__(self, sim, flow_id, rate, route, segment_size=1448, header_size=52):
        self.sim = sim
        self.flow_id = flow_id
        self.route = route
        self.header_size = header_size
        self.state = TcpFlowState(segment_size=segment_size, cwnd=segment_size, kind=FIXEDRATE)
        self.interval = max(1, (segment_size + header_size) * 8 * NS_PER_S // int(rate))
        self.counters = FlowCounters()
        self.started = False

    @property
    def kind(self):
        return FIXEDRATE

    def start(self, _=None):
        self.started = True
        self._tick(None)

    def _tick(self, _):
        st = self.state
        pkt = self.sim.new_packet(self.flow_id, DATA, st.snd_nxt, st.segment_size + self.header_size,
                                  payload=st.segment_size)
        st.snd_nxt += st.segment_size
        st.snd_max = st.snd_nxt
        self.counters.data_sent += 1
        self.route(pkt)
        self.sim.schedule(self.sim.now + self.interval, self._tick)

    def on_ack(self, pkt):
        st = self.state
        rtt = (self.sim.now - pkt.echo) / NS_PER_S
        c = self.counters
        c.rtt_samples.append(rtt)
        if rtt < c.rtt_min:
            c.rtt_min = rtt
        update_rtt(st, rtt)
        if pkt.ack > st.snd_una:
            st.segments_acked_epoch += -(-(pkt.ack - st.snd_una) // st.segment_size)
            st.snd_una = pkt.ack


class TcpReceiver:
    """Cumulative-ack receiver with an out-of-order buffer."""

    def __init__(self, sim, flow_id, route, ack_size=52):
        self.sim = sim
        self.flow_id = flow_id
        self.route = route
        self.ack_size = ack_size
        self.rcv_nxt = 0
        self.ooo = {}
        self.unique_bytes = 0  # first-receipt payload, reset each epoch by the env
        self.total_unique_bytes = 0
        self.duplicates = 0

    def _accept(self, pkt):
        seq = pkt.seq
        if seq == self.rcv_nxt:
            self.rcv_nxt += pkt.payload
            ooo = self.ooo
            while self.rcv_nxt in ooo:
                self.rcv_nxt += ooo.pop(self.rcv_nxt)
            return True
        if seq > self.rcv_nxt and seq not in self.ooo:
            self.ooo[seq] = pkt.payload
            return True
        return False

    def on_data(self, pkt):
        sim = self.sim
        sim.delivered += 1
        if self._accept(pkt):
            self.unique_bytes += pkt.payload
            self.total_unique_bytes += pkt.payload
        else:
            self.duplicates += 1
        ack = sim.new_packet(self.flow_id, ACK, 0, self.ack_size, ack=self.rcv_nxt,
                             acked_bytes=pkt.payload, echo=pkt.sent_at)
        self.route(ack)


class DatagramReceiver(TcpReceiver):
    """Receiver for the fixed-rate sender: per-packet acks, no retransmissions."""

    def _accept(self, pkt):
        end = pkt.seq + pkt.payload
        if end > self.rcv_nxt:
            self.rcv_nxt = end
            return True
        return False
