import numpy as np
import pytest

from conftest import scenario
from macc.config import TrainingConfig
from macc.env import MACCEnv
from macc.errors import ModelFormatError
from macc.metrics import fmt
from macc.rl.network import QNetwork
from macc.rl.persistence import load_model, save_model
from macc.sim.engine import derive_seed
from macc.training import AGENT_FILES, evaluate, load_models, simulate, train


def _tcfg(**kw):
    t = TrainingConfig(episodes=2, minibatch=8, hidden=[8], target_sync=5, memory_capacity=50)
    for k, v in kw.items():
        setattr(t, k, v)
    t.validate()
    return t


def _macc(duration=3.0, n_flows=2):
    return scenario(n_flows=n_flows, duration=duration, transport="rl", aqm="rl")


def test_zero_episodes_saves_initial_weights(tmp_path):
    res = train(_macc(), _tcfg(episodes=0), model_dir=tmp_path)
    for i in (0, 1):
        saved = load_model(tmp_path / AGENT_FILES[i])
        assert all(np.array_equal(a, b) for a, b in zip(saved.params, res.initial[i].params))
    assert res.episodes == []


def test_training_is_deterministic(tmp_path):
    a = train(_macc(), _tcfg(), model_dir=tmp_path / "a")
    b = train(_macc(), _tcfg(), model_dir=tmp_path / "b")
    assert a.losses == b.losses
    assert a.episode_rewards() == b.episode_rewards()
    assert (tmp_path / "a" / "agent1.qnet").read_bytes() == (tmp_path / "b" / "agent1.qnet").read_bytes()


def test_second_run_resumes_from_saved_weights(tmp_path):
    first = train(_macc(), _tcfg(), model_dir=tmp_path)
    assert not all(first.reloaded.values())
    assert any(not np.array_equal(a, b) for a, b in zip(first.nets[0].params, first.initial[0].params))
    second = train(_macc(), _tcfg(episodes=1), model_dir=tmp_path)
    assert all(second.reloaded.values())
    assert all(np.array_equal(a, b) for a, b in zip(second.initial[0].params, first.nets[0].params))


def _hand_dqn(sc, tcfg):
    """Plain single-agent DQN on agent 1 with agent 2 pinned to action 0."""
    env = MACCEnv(sc)
    init_ss, explore_ss, sample_ss = np.random.SeedSequence([tcfg.seed, 1000]).spawn(3)
    net = QNetwork.initialize([15] + tcfg.hidden + [4], np.random.default_rng(init_ss), 1)
    target = net.copy()
    explore = np.random.default_rng(explore_ss)
    sampler = np.random.default_rng(sample_ss)
    memory, pushed, updates, losses = [], 0, 0, []
    for ep in range(tcfg.episodes):
        s = env.reset(derive_seed(tcfg.seed, "episode", ep))[0]
        while True:
            if explore.random() < 0.99 ** min(pushed, 2000):
                a = int(explore.integers(4))
            else:
                a = int(np.argmax(net.forward(s)))
            res = env.step(a, 0)
            exp = (s, a, res.rewards[0], res.states[0], res.done)
            if len(memory) < tcfg.memory_capacity:
                memory.append(exp)
            else:
                memory[pushed % tcfg.memory_capacity] = exp
            pushed += 1
            if len(memory) >= tcfg.minibatch:
                idx = sampler.choice(len(memory), size=tcfg.minibatch, replace=False)
                S = np.array([memory[i][0] for i in idx])
                A = np.array([memory[i][1] for i in idx])
                R = np.array([memory[i][2] for i in idx]) * tcfg.reward_scale
                S2 = np.array([memory[i][3] for i in idx])
                D = np.array([memory[i][4] for i in idx], dtype=float)
                q, acts = net.forward_cached(S)
                y = R + tcfg.gamma * (1.0 - D) * target.forward(S2).max(axis=1)
                rows = np.arange(len(idx))
                err = q[rows, A] - y
                losses.append(float(np.mean(err * err)))
                g = np.zeros_like(q)
                g[rows, A] = 2.0 * err / len(idx)
                net.sgd_step(net.backward(acts, g), tcfg.lr)
                updates += 1
                if updates % tcfg.target_sync == 0:
                    target.load_state(net)
            s = res.states[0]
            if res.done:
                break
    return net, losses


def test_pinned_aqm_reduces_to_single_agent_dqn():
    sc = _macc(duration=4.0)
    tcfg = _tcfg(mode="independent", episodes=2, memory_capacity=12)
    res = train(sc, tcfg, fixed_actions={1: 0})
    assert list(res.nets) == [0]
    ref, ref_losses = _hand_dqn(sc, tcfg)
    np.testing.assert_allclose(res.losses, ref_losses, rtol=1e-12)
    for a, b in zip(res.nets[0].params, ref.params):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_evaluate_leaves_models_untouched(tmp_path):
    sc, tcfg = _macc(), _tcfg()
    train(sc, tcfg, model_dir=tmp_path)
    before = {f: (tmp_path / f).read_bytes() for f in AGENT_FILES}
    nets = load_models(tmp_path, sc, tcfg, [0, 1])
    m1 = evaluate(nets, sc, seed=5)
    m2 = evaluate(nets, sc, seed=5)
    assert {f: (tmp_path / f).read_bytes() for f in AGENT_FILES} == before
    assert [list(map(fmt, r.values())) for r in m1.rows()] == [list(map(fmt, r.values())) for r in m2.rows()]


def test_architecture_mismatch_rejected(tmp_path):
    sc, tcfg = _macc(), _tcfg()
    save_model(QNetwork.initialize([15, 8, 3], np.random.default_rng(0)), tmp_path / AGENT_FILES[0])
    with pytest.raises(ModelFormatError):
        load_models(tmp_path, sc, tcfg, [0])
    with pytest.raises(ModelFormatError):
        evaluate({0: QNetwork.initialize([12, 8, 4], np.random.default_rng(0))}, sc)


def test_rule_based_simulation_has_no_actions():
    m = simulate(scenario(duration=2.0), seed=0)
    assert m.steps == 10
    assert set(m.series["action1"]) == {None}
    assert m.aggregates()["mean_throughput_mbps"] > 0


def test_episode_length_cap():
    res = train(_macc(duration=4.0), _tcfg(episodes=1, timestep=7))
    assert res.episodes[0].steps == 7
