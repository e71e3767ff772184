import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import scenario
from macc import transport as tp
from macc.errors import ConfigError
from macc.sim.engine import seconds
from macc.sim.topology import build_dumbbell

SEG = 1000


class RefNewReno:
    """Reference sender written from the RFC 5681 / RFC 6582 step lists.

    ``recover`` holds the highest sequence number transmitted (inclusive), so
    the "covers more than recover" tests are strict comparisons.
    """

    def __init__(self, cwnd):
        self.cwnd, self.ssthresh = cwnd, 1 << 62
        self.una = self.nxt = self.max = 0
        self.dup = 0
        self.carry = 0
        self.recovering = False
        self.recover = -1  # initial send sequence minus one

    def send(self, n):
        for _ in range(n):
            if self.cwnd - (self.nxt - self.una) < SEG:
                break
            self.nxt += SEG
            self.max = max(self.max, self.nxt)

    def ack(self, a):
        if a > self.max or a < self.una:
            return None
        if a == self.una:
            if self.max == self.una:
                return None
            self.dup += 1
            if self.recovering:
                self.cwnd += SEG  # step 4: inflate
                return None
            if self.dup == 3 and a > self.recover:  # step 2
                self.ssthresh = max((self.nxt - self.una) // 2, 2 * SEG)  # step 3
                self.recover = self.max - 1
                self.cwnd = self.ssthresh + 3 * SEG
                self.recovering = True
                return self.una
            return None
        acked = a - self.una
        self.una = a
        self.nxt = max(self.nxt, a)
        if self.recovering:
            if a > self.recover:  # step 5, full ack
                self.recovering = False
                self.dup = 0
                self.cwnd = min(self.ssthresh, max(self.max - a, SEG) + SEG)
                return None
            self.cwnd -= acked  # partial ack: deflate, add back one SMSS
            if acked >= SEG:
                self.cwnd += SEG
            self.cwnd = max(self.cwnd, SEG)
            return self.una
        self.dup = 0
        if self.cwnd < self.ssthresh:
            self.cwnd += min(acked, SEG)
        else:
            # exact SMSS^2/cwnd per ack, fractional bytes carried to the next ack
            inc, self.carry = divmod(SEG * SEG + self.carry, self.cwnd)
            self.cwnd += inc
        return None

    def timeout(self):
        if self.max == self.una:
            return None
        self.ssthresh = max((self.nxt - self.una) // 2, 2 * SEG)
        self.cwnd = SEG
        self.recover = self.max - 1  # step 6
        self.recovering = False
        self.dup = 0
        self.nxt = self.una + SEG
        return self.una


def _send(flow, n):
    for _ in range(min(n, tp.send_gate(flow))):
        flow.snd_nxt += SEG
        flow.snd_max = max(flow.snd_max, flow.snd_nxt)


def _snapshot(f):
    return (f.cwnd, f.ssthresh, f.in_recovery, f.dupacks, f.snd_una, f.snd_nxt, f.snd_max)


def _ref_snapshot(r):
    return (r.cwnd, r.ssthresh, r.recovering, r.dup, r.una, r.nxt, r.max)


events = st.lists(st.tuples(st.sampled_from(["send", "ack", "dup", "timeout", "stale"]),
                            st.integers(1, 12)), min_size=1, max_size=120)


@settings(max_examples=300, deadline=None)
@given(events, st.integers(2, 20))
def test_newreno_matches_rfc6582_reference(evs, init):
    flow = tp.TcpFlowState(segment_size=SEG, cwnd=init * SEG)
    ref = RefNewReno(init * SEG)
    for kind, k in evs:
        if kind == "send":
            _send(flow, k)
            ref.send(k)
            got = want = None
        elif kind == "ack":
            out = (ref.max - ref.una) // SEG
            if out == 0:
                continue
            a = ref.una + min(k, out) * SEG
            got, want = tp.on_ack(flow, a), ref.ack(a)
        elif kind == "dup":
            got, want = tp.on_ack(flow, ref.una), ref.ack(ref.una)
        elif kind == "stale":
            got, want = tp.on_ack(flow, ref.una - SEG), ref.ack(ref.una - SEG)
        else:
            got, want = tp.on_timeout(flow), ref.timeout()
        assert got == want
        assert _snapshot(flow) == _ref_snapshot(ref)
        assert flow.cwnd >= SEG


def test_fast_recovery_table():
    f = tp.TcpFlowState(segment_size=SEG, cwnd=10 * SEG)
    _send(f, 10)
    # (ack, expected retransmission, cwnd, ssthresh, in_recovery)
    table = [
        (0, None, 10_000, tp.UNBOUNDED, False),
        (0, None, 10_000, tp.UNBOUNDED, False),
        (0, 0, 8_000, 5_000, True),  # 3rd dupack: ssthresh = 10000/2, cwnd = ssthresh + 3 MSS
        (0, None, 9_000, 5_000, True),  # inflation
        (3_000, 3_000, 7_000, 5_000, True),  # partial: 9000 - 3000 + 1000, retransmit next hole
        (10_000, None, 2_000, 5_000, False),  # full ack: min(5000, max(0, MSS) + MSS)
    ]
    for ack, retx, cwnd, ssthresh, rec in table:
        assert tp.on_ack(f, ack) == retx
        assert (f.cwnd, f.ssthresh, f.in_recovery) == (cwnd, ssthresh, rec)
    assert f.fast_retransmits == 1


def test_fast_retransmit_fires_once_per_window():
    f = tp.TcpFlowState(segment_size=SEG, cwnd=20 * SEG)
    _send(f, 20)
    fired = [tp.on_ack(f, 0) for _ in range(10)]
    assert fired.count(0) == 1
    assert f.ssthresh == max(20 * SEG // 2, 2 * SEG)


def test_no_fast_retransmit_for_dupacks_below_recover_after_timeout():
    f = tp.TcpFlowState(segment_size=SEG, cwnd=10 * SEG)
    _send(f, 10)
    assert tp.on_timeout(f) == 0
    tp.on_ack(f, SEG)  # go-back-N: snd_una now 1000, recover = 10000
    _send(f, 2)
    assert [tp.on_ack(f, SEG) for _ in range(3)] == [None, None, None]
    assert not f.in_recovery


def test_slow_start_doubles_per_round():
    f = tp.TcpFlowState(segment_size=SEG, cwnd=2 * SEG)
    for _ in range(4):
        start = f.cwnd
        _send(f, 100)
        end = f.snd_max
        while f.snd_una < end:
            tp.on_ack(f, f.snd_una + SEG)
        assert f.cwnd == 2 * start


def test_congestion_avoidance_adds_about_one_segment_per_round():
    f = tp.TcpFlowState(segment_size=SEG, cwnd=10 * SEG, ssthresh=5 * SEG)
    _send(f, 100)
    end = f.snd_max
    while f.snd_una < end:
        tp.on_ack(f, f.snd_una + SEG)
    assert abs(f.cwnd - 11 * SEG) <= SEG


def test_timeout_example():
    f = tp.TcpFlowState(segment_size=SEG, cwnd=100 * SEG)
    _send(f, 100)
    assert tp.on_timeout(f) == 0
    assert f.cwnd == SEG
    assert f.ssthresh == 50 * SEG
    assert f.snd_nxt == SEG  # earliest segment resent, slow start again


def test_timeout_without_data_is_noop():
    f = tp.TcpFlowState(segment_size=SEG)
    before = _snapshot(f)
    assert tp.on_timeout(f) is None
    assert _snapshot(f) == before and f.timeouts == 0


def test_rto_backoff_doubles_and_caps():
    f = tp.TcpFlowState(segment_size=SEG, rto=seconds(1.0))
    _send(f, 1)
    rtos = []
    for _ in range(9):
        tp.on_timeout(f)
        rtos.append(f.rto / 1e9)
    assert rtos == [2, 4, 8, 16, 32, 60, 60, 60, 60]


def test_rtt_estimator_gains():
    f = tp.TcpFlowState()
    tp.update_rtt(f, 0.2)
    assert f.srtt == 0.2 and f.rttvar == 0.1
    tp.update_rtt(f, 0.3)
    assert f.srtt == pytest.approx(0.875 * 0.2 + 0.125 * 0.3)
    assert f.rttvar == pytest.approx(0.75 * 0.1 + 0.25 * 0.1)
    assert f.rto == seconds(f.srtt) + seconds(4 * f.rttvar)
    for _ in range(60):
        tp.update_rtt(f, 0.205)
    # steady samples: the variance term decays under the floor, which takes over
    assert f.rto == seconds(f.srtt) + f.min_rto


def test_rto_margin_survives_a_standing_queue():
    f = tp.TcpFlowState()
    for _ in range(200):
        tp.update_rtt(f, 0.44)
    assert f.rto / 1e9 >= 0.44 + 0.2 - 1e-9


def test_unknown_acks_counted_and_ignored():
    f = tp.TcpFlowState(segment_size=SEG)
    _send(f, 3)
    before = _snapshot(f)
    assert tp.on_ack(f, 10 * SEG) is None
    assert _snapshot(f) == before
    assert f.unknown_acks == 1


def test_segments_acked_counts_segments():
    f = tp.TcpFlowState(segment_size=SEG)
    _send(f, 5)
    tp.on_ack(f, 3 * SEG)
    tp.on_ack(f, 4 * SEG)
    assert f.segments_acked_epoch == 4


# ---------------------------------------------------------------- RL actuator


def test_action_examples():
    f = tp.TcpFlowState(segment_size=1448, cwnd=14480)
    tp.apply_tcp_action(f, 1)
    assert (f.cwnd, f.ssthresh) == (15928, 2896)

    # 3 is odd, so it takes the one-segment branch; only the threshold differs from a=1
    f = tp.TcpFlowState(segment_size=1448, cwnd=14480, snd_nxt=7000)
    tp.apply_tcp_action(f, 3, "corrected")
    assert (f.cwnd, f.ssthresh) == (15928, 7000)

    f = tp.TcpFlowState(segment_size=1448, cwnd=14480, snd_nxt=7000)
    tp.apply_tcp_action(f, 2, "corrected")
    assert f.cwnd == 14480 + 144  # floor(1448**2 / 14480) = floor(144.8)
    assert f.ssthresh == 2896

    f = tp.TcpFlowState(segment_size=1448, cwnd=14480)
    tp.apply_tcp_action(f, 2, "literal")
    assert f.cwnd == 14480 + 2096704


@pytest.mark.parametrize("a", [-1, 4, 7])
def test_action_out_of_range_is_config_error(a):
    with pytest.raises(ConfigError):
        tp.apply_tcp_action(tp.TcpFlowState(), a)


@given(st.integers(1, 9000), st.integers(1, 10**7), st.integers(0, 10**7),
       st.sampled_from([0, 1, 2, 3]), st.sampled_from(["corrected", "literal"]))
def test_action_pure_monotone_and_threshold(seg, cwnd, bif, a, mode):
    cwnd = max(cwnd, seg)

    def run():
        f = tp.TcpFlowState(segment_size=seg, cwnd=cwnd, snd_nxt=bif)
        tp.apply_tcp_action(f, a, mode)
        return f.cwnd, f.ssthresh
    first = run()
    assert first == run()
    assert first[0] > cwnd
    if a < 3:
        assert first[1] == 2 * seg


@given(events)
@settings(max_examples=100, deadline=None)
def test_rl_flows_never_move_their_own_window(evs):
    f = tp.TcpFlowState(segment_size=SEG, cwnd=8 * SEG, kind=tp.RL, ssthresh=3 * SEG)
    for kind, k in evs:
        if kind == "send":
            _send(f, k)
        elif kind == "ack" and f.snd_max > f.snd_una:
            tp.on_ack(f, min(f.snd_una + k * SEG, f.snd_max))
        elif kind == "dup":
            tp.on_ack(f, f.snd_una)
        elif kind == "timeout":
            tp.on_timeout(f)
        assert (f.cwnd, f.ssthresh) == (8 * SEG, 3 * SEG)


@pytest.mark.parametrize("cwnd, bif, gate", [(10, 10, 0), (10, 0, 10), (10, 3.5, 6)])
def test_send_gate(cwnd, bif, gate):
    f = tp.TcpFlowState(segment_size=SEG, cwnd=cwnd * SEG, snd_nxt=int(bif * SEG))
    assert tp.send_gate(f) == gate


# ---------------------------------------------------------------- in the simulator


@pytest.mark.parametrize("kind", ["newreno", "rl"])
def test_window_discipline_in_lossy_run(kind):
    net = build_dumbbell(scenario(n_flows=2, duration=20.0, per=0.03, transport=kind))
    worst = []
    for f in net.flows:
        orig = f.sender.route

        def route(pkt, f=f, orig=orig):
            # loss repair is exempt: recovery cuts cwnd below what is already outstanding
            if not pkt.retx:
                s = f.sender.state
                worst.append(s.bytes_in_flight - s.cwnd)
            orig(pkt)
        f.sender.route = route
    net.run_until(seconds(20.0))
    assert worst and max(worst) <= net.flows[0].sender.state.segment_size
    assert all(f.sender.counters.window_violations == 0 for f in net.flows)


def test_fixed_rate_sender_rate():
    sc = scenario(n_flows=1, transport="fixedrate")
    sc.transport.fixed_rate = 6e6
    net = build_dumbbell(sc)
    net.run_until(seconds(1.0))
    sent = net.flows[0].sender.counters.data_sent
    assert abs(sent - 6e6 / (1500 * 8)) <= 1
