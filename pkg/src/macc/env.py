"""Two-agent environment over the dumbbell simulator.

Agent 1 (transport) observes ``(sa, bif, r_tt)`` summed / averaged over the RL
flows and picks one of 4 cwnd/ssthresh actions; agent 2 (network) observes
``(L, R_deq, d)`` at the bottleneck queue and picks one of 2 drop modes. Both
act once per epoch. Example::

    env = MACCEnv(scenario)
    s1, s2 = env.reset(seed=7)
    while True:
        res = env.step(a1, a2)
        if res.done:
            break
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import transport as tp
from .aqm import DROP_CAUSES, RlDiscipline
from .config import ScenarioConfig
from .errors import EnvironmentDone
from .sim.engine import NS_PER_S, seconds
from .sim.topology import build_dumbbell

N_ACTIONS_TRANSPORT = 4
N_ACTIONS_AQM = 2


@dataclass(frozen=True)
class Observation1:
    sa: float  # segments acked during the epoch
    bif: float  # bytes in flight at the boundary
    r_tt: float  # smoothed RTT, seconds

    def as_vector(self):
        return np.array([self.sa, self.bif, self.r_tt], dtype=np.float64)


@dataclass(frozen=True)
class Observation2:
    L: float  # queue length, packets
    R_deq: float  # dequeue rate, packets / second
    d: float  # mean queuing delay, seconds

    def as_vector(self):
        return np.array([self.L, self.R_deq, self.d], dtype=np.float64)


class StateWindow:
    """Last ``k`` observation vectors, lagged by ``lag`` epochs, zero-padded.

    After pushing measurements ``m_1 .. m_t`` the state is
    ``(m_{t-lag-k+1}, ..., m_{t-lag})`` flattened oldest first.
    """

    def __init__(self, k, lag, dim=3):
        self.k = k
        self.lag = lag
        self.dim = dim
        self._hist = deque([np.zeros(dim)] * (k + lag), maxlen=k + lag)
        self.pushed = 0

    def push(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ValueError(f"observation must have shape ({self.dim},)")
        self._hist.append(v)
        self.pushed += 1

    @property
    def ready(self):
        return self.pushed >= self.k + self.lag

    def state(self):
        return np.concatenate(list(self._hist)[: self.k])


@dataclass(frozen=True)
class RewardScales:
    sa: float = 1.0
    bif: float = 1.0
    cwnd: float = 1.0
    deq: float = 1.0
    delay: float = 1.0
    qlen: float = 1.0

    @classmethod
    def from_scenario(cls, scenario: ScenarioConfig):
        e = scenario.env
        if e.reward_mode == "raw":
            return cls()
        seg = scenario.transport.segment_size
        return cls(
            sa=e.scale_sa,
            bif=e.scale_bif if e.scale_bif is not None else seg,
            cwnd=e.scale_cwnd if e.scale_cwnd is not None else seg,
            deq=e.scale_deq,
            delay=e.scale_delay,
            qlen=e.scale_qlen if e.scale_qlen is not None else scenario.topology.queue_capacity,
        )


RAW = RewardScales()


def reward1(sa_sum, bif_sum, cwnd, scales: RewardScales = RAW):
    """Transport reward: acked segments minus bytes in flight minus window."""
    return sa_sum / scales.sa - bif_sum / scales.bif - cwnd / scales.cwnd


def reward2(deq_rate, queue_delay, queue_len, scales: RewardScales = RAW):
    """Queue reward: dequeue rate minus queuing delay minus queue length."""
    return deq_rate / scales.deq - queue_delay / scales.delay - queue_len / scales.qlen


@dataclass(frozen=True)
class Discrete:
    n: int


@dataclass(frozen=True)
class Box:
    low: float
    high: float
    shape: tuple


@dataclass
class StepResult:
    states: tuple
    rewards: tuple
    done: bool
    info: dict = field(default_factory=dict)


def _mean(xs):
    return math.fsum(xs) / len(xs) if xs else float("nan")


class MACCEnv:
    """Gym-style facade: ``reset(seed)`` and ``step(a1, a2)`` over one epoch."""

    def __init__(self, scenario: ScenarioConfig, seed=0):
        self.scenario = scenario.validate()
        self.seed = seed
        topo = scenario.topology
        self.k = scenario.env.history
        self.lag = scenario.env.lag
        self.epoch_ns = seconds(topo.epoch)
        self.duration_ns = seconds(topo.sim_duration)
        self.n_steps = topo.n_steps
        self.scales = RewardScales.from_scenario(scenario)
        self.action_mode = scenario.transport.action_mode
        self.observation_spaces = (Box(0.0, math.inf, (3 * self.k,)), Box(0.0, math.inf, (3 * self.k,)))
        self.action_spaces = (Discrete(N_ACTIONS_TRANSPORT), Discrete(N_ACTIONS_AQM))
        self.state_scales = self._state_scales() if scenario.env.normalize_states else (np.ones(3), np.ones(3))
        self.net = None
        self.done = True
        self.sink = None  # optional object with write(info) / flush()

    def _state_scales(self):
        sc = self.scenario
        topo = sc.topology
        mtu = sc.transport.segment_size + sc.transport.header_size
        rate = topo.bottleneck.rate
        pkt_time = mtu * 8 / rate
        base_rtt = 2 * (2 * topo.edge.prop_delay + topo.bottleneck.prop_delay)
        per_epoch = topo.epoch / pkt_time
        cap = topo.queue_capacity
        s1 = np.array([per_epoch, cap * sc.transport.segment_size, max(base_rtt, 1e-3)])
        s2 = np.array([cap, 1.0 / pkt_time, cap * pkt_time])
        return s1, s2

    # ------------------------------------------------------------------ API
    @property
    def has_rl_transport(self):
        return any(k == tp.RL for k in self.scenario.transport.kinds(self.scenario.topology.n_flows))

    @property
    def has_rl_aqm(self):
        return self.scenario.aqm.kind == "rl"

    def reset(self, seed=None):
        if seed is not None:
            self.seed = seed
        if self.sink is not None and hasattr(self.sink, "flush"):
            self.sink.flush()
        self.net = build_dumbbell(self.scenario, seed=self.seed)
        self.windows = (StateWindow(self.k, self.lag), StateWindow(self.k, self.lag))
        self.t = 0
        self.done = False
        self._last_drops = dict.fromkeys(DROP_CAUSES, 0)
        self._last_corrupted = 0
        return self.states()

    def states(self):
        return (self.windows[0].state() / np.tile(self.state_scales[0], self.k),
                self.windows[1].state() / np.tile(self.state_scales[1], self.k))

    def _agent1_flows(self):
        rl = [f for f in self.net.flows if f.kind == tp.RL]
        return rl or self.net.flows

    def step(self, a1=0, a2=0):
        if self.done or self.net is None:
            raise EnvironmentDone("step() called on a finished episode; call reset()")
        net = self.net
        if self.has_rl_transport:
            for f in net.flows:
                if f.kind == tp.RL:
                    tp.apply_tcp_action(f.sender.state, int(a1), self.action_mode)
                    if f.sender.started:
                        f.sender._fill_window()
        if isinstance(net.queue.discipline, RlDiscipline):
            net.queue.discipline.apply_action(int(a2))

        t_start = net.sim.now
        t_end = min((self.t + 1) * self.epoch_ns, self.duration_ns)
        net.run_until(t_end)
        self.t += 1
        window = (t_end - t_start) / NS_PER_S

        flows1 = self._agent1_flows()
        sa = sum(f.sender.state.segments_acked_epoch for f in flows1)
        bif = sum(f.sender.state.bytes_in_flight for f in flows1)
        srtts = [f.sender.state.srtt for f in flows1 if f.sender.state.srtt is not None]
        r_tt = _mean(srtts) if srtts else 0.0
        cwnd_sum = sum(f.sender.state.cwnd for f in flows1)
        q = net.queue.measure(t_end)
        obs1 = Observation1(sa, bif, r_tt)
        obs2 = Observation2(q.occupancy, q.dequeue_rate, q.queuing_delay)
        self.windows[0].push(obs1.as_vector())
        self.windows[1].push(obs2.as_vector())
        r1 = reward1(sa, bif, cwnd_sum, self.scales)
        r2 = reward2(q.dequeue_rate, q.queuing_delay, q.occupancy, self.scales)

        info = self._collect(t_end, window, obs1, obs2, cwnd_sum, a1, a2, r1, r2)
        self.done = self.t >= self.n_steps
        if self.sink is not None:
            self.sink.write(info)
        return StepResult(self.states(), (r1, r2), self.done, info)

    def _collect(self, t_end, window, obs1, obs2, cwnd_sum, a1, a2, r1, r2):
        net = self.net
        goodput = 0
        samples = []
        window_flows = []
        for f in net.flows:
            goodput += f.receiver.unique_bytes
            f.receiver.unique_bytes = 0
            samples.extend(f.sender.counters.rtt_samples)
            f.sender.counters.rtt_samples = []
            f.sender.state.segments_acked_epoch = 0
            if f.kind != tp.FIXEDRATE:
                window_flows.append(f.sender.state)
        drops = dict(net.queue.drops)
        for k, v in net.reverse_queue.drops.items():
            drops[k] += v
        d_drops = {k: drops[k] - self._last_drops[k] for k in DROP_CAUSES}
        self._last_drops = drops
        corrupted = net.sim.corrupted - self._last_corrupted
        self._last_corrupted = net.sim.corrupted
        return {
            "step": self.t,
            "time_s": t_end / NS_PER_S,
            "window_s": window,
            "goodput_bytes": goodput,
            "throughput_mbps": goodput * 8 / window / 1e6,
            "rtt_mean_s": _mean(samples),
            "rtt_min_s": min(samples) if samples else float("nan"),
            "rtt_count": len(samples),
            "cwnd_bytes": _mean([s.cwnd for s in window_flows]),
            "ssthresh_bytes": _mean([min(s.ssthresh, tp.UNBOUNDED) for s in window_flows]),
            "bytes_in_flight": sum(s.bytes_in_flight for s in window_flows),
            "cwnd_per_flow": [s.cwnd for s in window_flows],
            "queue_len": obs2.L,
            "max_queue_len": net.queue.max_occupancy,
            "dequeue_rate": obs2.R_deq,
            "queue_delay_s": obs2.d,
            **{f"drops_{k}": v for k, v in d_drops.items()},
            "corrupted": corrupted,
            "sa": obs1.sa,
            "bif": obs1.bif,
            "r_tt": obs1.r_tt,
            "cwnd_sum": cwnd_sum,
            "action1": int(a1) if self.has_rl_transport else None,
            "action2": int(a2) if self.has_rl_aqm else None,
            "reward1": r1,
            "reward2": r2,
        }
