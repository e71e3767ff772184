"""Links, router ports and the dumbbell topology.

Access (edge) links are modelled in closed form: a FIFO serialiser with a
``busy_until`` horizon, so a packet costs no events until it arrives at the
far end. The bottleneck in each direction is a :class:`Port`: a
:class:`~macc.aqm.PacketQueue` in front of a link, with one event per
transmission completion.

Forward path:  sender_i -> router1 -[queue]-> bottleneck -> router2 -> receiver_i
Reverse path:  receiver_i -> router2 -[queue]-> bottleneck -> router1 -> sender_i
"""

from __future__ import annotations

from dataclasses import dataclass

from .. import aqm
from ..config import ScenarioConfig
from .engine import NS_PER_S, Simulation, component_rng, seconds
from .packet import DATA
from .. import transport as tp


class Link:
    """Point-to-point link with serialisation, propagation and optional PER."""

    def __init__(self, cfg, rng=None, name="link"):
        self.cfg = cfg
        self.name = name
        self.rate = int(cfg.rate)
        self.prop = seconds(cfg.prop_delay)
        self.per = cfg.per
        self.rng = rng
        self.busy_until = 0
        self._ser = {}
        self.corrupted = 0
        self.data_carried = 0

    def serialization(self, size):
        t = self._ser.get(size)
        if t is None:
            t = self._ser[size] = size * 8 * NS_PER_S // self.rate
        return t

    def corrupts(self, pkt):
        """Bernoulli(per) loss draw; data packets only."""
        if pkt.kind != DATA:
            return False
        self.data_carried += 1
        if self.per > 0.0 and self.rng.random() < self.per:
            self.corrupted += 1
            return True
        return False

    def delivery_time(self, start, size):
        """Reserve the link from ``start`` (queueing behind earlier packets)."""
        begin = start if start > self.busy_until else self.busy_until
        end = begin + self.serialization(size)
        self.busy_until = end
        return end + self.prop


def transmit(sim, link: Link, pkt, deliver):
    """Serialise ``pkt`` on ``link`` now and schedule ``deliver(pkt)`` on arrival."""
    at = link.delivery_time(sim.now, pkt.size)
    if link.per > 0.0 and link.corrupts(pkt):
        sim.corrupted += 1
        return None
    sim.schedule(at, deliver, pkt)
    return at


class Port:
    """Router output port: AQM queue feeding a link."""

    def __init__(self, sim, link: Link, queue: aqm.PacketQueue, forward):
        self.sim = sim
        self.link = link
        self.queue = queue
        self.forward = forward  # callable(pkt, arrival_time_at_next_node)
        self.busy = False

    def receive(self, pkt):
        q = self.queue
        if q.offer(pkt, self.sim.now) is aqm.ENQUEUED and not self.busy:
            self._start_next()

    def _start_next(self, _=None):
        sim = self.sim
        now = sim.now
        pkt = self.queue.pop(now)
        if pkt is None:
            self.busy = False
            return
        self.busy = True
        link = self.link
        ser = link.serialization(pkt.size)
        link.busy_until = now + ser
        sim.schedule(now + ser, self._start_next)
        if link.per > 0.0 and link.corrupts(pkt):
            sim.corrupted += 1
            return
        self.forward(pkt, now + ser + link.prop)


@dataclass
class Flow:
    index: int
    kind: str
    sender: object
    receiver: object
    start: int  # ns


class Dumbbell:
    """N senders and N receivers joined by two routers and one bottleneck."""

    def __init__(self, scenario: ScenarioConfig, seed=0, trace=False):
        self.scenario = scenario
        topo = scenario.topology
        tcfg = scenario.transport
        n = topo.n_flows
        self.sim = sim = Simulation(seed, trace=trace)

        self.node_names = ([f"sender{i}" for i in range(n)] + ["router1", "router2"]
                           + [f"receiver{i}" for i in range(n)])
        mtu = tcfg.segment_size + tcfg.header_size

        def on_drop(pkt, cause):
            sim.dropped += 1

        fwd_link = Link(topo.bottleneck, component_rng(seed, "bottleneck-per"), "bottleneck-fwd")
        rev_link = Link(topo.bottleneck, component_rng(seed, "bottleneck-rev-per"), "bottleneck-rev")
        rev_link.per = 0.0  # acks are lossless
        fwd_disc = aqm.make_discipline(scenario.aqm, component_rng(seed, "aqm-fwd"), topo.bottleneck.rate, mtu)
        rev_disc = aqm.make_discipline(scenario.aqm, component_rng(seed, "aqm-rev"), topo.bottleneck.rate, mtu)
        self.queue = aqm.PacketQueue(topo.queue_capacity, fwd_disc, on_drop)
        self.reverse_queue = aqm.PacketQueue(topo.queue_capacity, rev_disc, on_drop)

        self.up = [Link(topo.edge, name=f"sender{i}->router1") for i in range(n)]
        self.down = [Link(topo.edge, name=f"router2->receiver{i}") for i in range(n)]
        self.ack_up = [Link(topo.edge, name=f"receiver{i}->router2") for i in range(n)]
        self.ack_down = [Link(topo.edge, name=f"router1->sender{i}") for i in range(n)]
        self.bottleneck = fwd_link
        self.reverse_bottleneck = rev_link

        self.flows = []

        def to_receiver(pkt, at):
            t = self.down[pkt.flow].delivery_time(at, pkt.size)
            sim.schedule(t, self.flows[pkt.flow].receiver.on_data, pkt)

        def to_sender(pkt, at):
            t = self.ack_down[pkt.flow].delivery_time(at, pkt.size)
            sim.schedule(t, self._ack_arrival, pkt)

        self.port = Port(sim, fwd_link, self.queue, to_receiver)
        self.reverse_port = Port(sim, rev_link, self.reverse_queue, to_sender)

        kinds = tcfg.kinds(n)
        starts = tcfg.starts(n)
        seg = tcfg.segment_size
        for i in range(n):
            up, ack_up = self.up[i], self.ack_up[i]

            def route_data(pkt, up=up):
                transmit(sim, up, pkt, self.port.receive)

            def route_ack(pkt, ack_up=ack_up):
                transmit(sim, ack_up, pkt, self.reverse_port.receive)

            if kinds[i] == tp.FIXEDRATE:
                sender = tp.FixedRateSender(sim, i, tcfg.fixed_rate, route_data, seg, tcfg.header_size)
                receiver = tp.DatagramReceiver(sim, i, route_ack, tcfg.ack_size)
            else:
                state = tp.TcpFlowState(
                    segment_size=seg, cwnd=tcfg.initial_cwnd * seg, kind=kinds[i],
                    rto=seconds(tcfg.initial_rto), min_rto=seconds(tcfg.min_rto),
                    max_rto=seconds(tcfg.max_rto))
                sender = tp.TcpSender(sim, i, state, route_data, tcfg.header_size)
                receiver = tp.TcpReceiver(sim, i, route_ack, tcfg.ack_size)
            flow = Flow(i, kinds[i], sender, receiver, seconds(starts[i]))
            self.flows.append(flow)
            sim.schedule(flow.start, sender.start)

    def _ack_arrival(self, pkt):
        self.sim.delivered += 1
        self.flows[pkt.flow].sender.on_ack(pkt)

    # -- structure ----------------------------------------------------------
    @property
    def forward_links(self):
        return self.up + [self.bottleneck] + self.down

    @property
    def rl_flows(self):
        return [f for f in self.flows if f.kind == tp.RL]

    def in_flight_scan(self):
        """Packets physically in the network, counted independently of counters."""
        return self.sim.packets_in_events() + self.queue.occupancy + self.reverse_queue.occupancy

    def run_until(self, t_ns):
        self.sim.run_until(t_ns)


def build_dumbbell(cfg: ScenarioConfig, seed=0, trace=False) -> Dumbbell:
    """Validate ``cfg`` and build a ready-to-run dumbbell simulation."""
    cfg.validate()
    return Dumbbell(cfg, seed=seed, trace=trace)
