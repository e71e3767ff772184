"""Training loop (VDN or independent DQN) and greedy evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, TrainingConfig
from .env import N_ACTIONS_AQM, N_ACTIONS_TRANSPORT, MACCEnv
from .errors import DivergenceError, ModelFormatError
from .metrics import EPOCH_COLUMNS, SUMMARY_COLUMNS, CsvTable, EpisodeMetrics, JsonlSink
from .rl.learner import ExplorationSchedule, select_action, vdn_update
from .rl.persistence import load_model, load_or_initialize, save_model
from .rl.replay import Experience, ReplayMemory
from .sim.engine import derive_seed

log = logging.getLogger(__name__)

AGENT_FILES = ("agent1.qnet", "agent2.qnet")
N_ACTIONS = (N_ACTIONS_TRANSPORT, N_ACTIONS_AQM)


def layer_dims(scenario: ScenarioConfig, tcfg: TrainingConfig, agent):
    return [3 * scenario.env.history] + [int(h) for h in tcfg.hidden] + [N_ACTIONS[agent]]


def episode_seed(seed, episode):
    return derive_seed(seed, "episode", episode)


@dataclass
class AgentSlot:
    index: int
    net: object
    target: object
    memory: ReplayMemory
    explore_rng: np.random.Generator
    sample_rng: np.random.Generator
    reloaded: bool = False
    updates: int = 0

    def sync_target(self):
        if self.target is not None:
            self.target.load_state(self.net)


@dataclass
class TrainResult:
    nets: dict  # agent index -> QNetwork
    initial: dict  # agent index -> QNetwork copy before any update
    reloaded: dict
    episodes: list = field(default_factory=list)  # EpisodeMetrics
    losses: list = field(default_factory=list)

    def episode_rewards(self):
        """Mean reward per step for each episode (team reward for two learners)."""
        out = []
        for m in self.episodes:
            a = m.aggregates()
            out.append(sum(a[f"mean_reward{i + 1}"] for i in self.nets))
        return out


def learning_agents(env: MACCEnv):
    agents = []
    if env.has_rl_transport:
        agents.append(0)
    if env.has_rl_aqm:
        agents.append(1)
    return agents


def _make_slot(i, dims, tcfg, model_dir, seed):
    ss = np.random.SeedSequence([seed, 1000 + i])
    init_ss, explore_ss, sample_ss = ss.spawn(3)
    path = Path(model_dir) / AGENT_FILES[i] if model_dir is not None else None
    net, reloaded = load_or_initialize(path, dims, np.random.default_rng(init_ss), agent_id=i + 1)
    target = net.copy() if tcfg.target_sync > 0 else None
    memory = ReplayMemory(tcfg.memory_capacity, dims[0])
    return AgentSlot(i, net, target, memory, np.random.default_rng(explore_ss),
                     np.random.default_rng(sample_ss), reloaded)


def train(scenario: ScenarioConfig, tcfg: TrainingConfig, out_dir=None, model_dir=None,
          fixed_actions=None, learners=None, callback=None, mad_window=None) -> TrainResult:
    """Train the RL agents present in ``scenario``.

    ``mode="vdn"`` regresses the sum of the agents' chosen Q-values on the
    team reward ``r1 + r2``; ``mode="independent"`` trains each agent on its
    own reward. Agents listed in ``fixed_actions`` (index -> action) do not
    learn and always play that action. Models are reloaded from ``model_dir``
    when present and saved there after every episode.
    """
    tcfg.validate()
    env = MACCEnv(scenario)
    if model_dir is None:
        model_dir = tcfg.model_dir
    if model_dir is None and out_dir is not None:
        model_dir = Path(out_dir) / "models"
    fixed = dict(fixed_actions or {})
    active = [i for i in (learners if learners is not None else learning_agents(env)) if i not in fixed]
    slots = {i: _make_slot(i, layer_dims(scenario, tcfg, i), tcfg, model_dir, tcfg.seed) for i in active}
    result = TrainResult({i: s.net for i, s in slots.items()},
                         {i: s.net.copy() for i, s in slots.items()},
                         {i: s.reloaded for i, s in slots.items()})
    schedule = ExplorationSchedule.from_config(tcfg)
    joint_rng = np.random.default_rng(np.random.SeedSequence([tcfg.seed, 7]))
    steps = env.n_steps if tcfg.timestep is None else min(tcfg.timestep, env.n_steps)

    tables = None
    if out_dir is not None:
        out = Path(out_dir)
        tables = (CsvTable(out / "train_epochs.csv", EPOCH_COLUMNS),
                  CsvTable(out / "train_episodes.csv", SUMMARY_COLUMNS),
                  JsonlSink(out / "train_info.jsonl"))
        env.sink = tables[2]

    def save_all():
        if model_dir is not None:
            for i, s in slots.items():
                save_model(s.net, Path(model_dir) / AGENT_FILES[i])

    try:
        for ep in range(tcfg.episodes):
            if tables is not None:
                tables[2].extra = {"episode": ep}
            states = env.reset(episode_seed(tcfg.seed, ep))
            records = []
            for _ in range(steps):
                actions = [fixed.get(0, 0), fixed.get(1, 0)]
                for i, s in slots.items():
                    actions[i] = select_action(s.net, states[i], schedule, s.explore_rng,
                                               s.memory.memory_counter, tcfg.policy, tcfg.temperature)
                res = env.step(*actions)
                records.append(res.info)
                for i, s in slots.items():
                    s.memory.push(Experience(states[i], actions[i], res.rewards[i], res.states[i], res.done))
                loss = _learn(slots, tcfg, joint_rng)
                if loss is not None:
                    result.losses.append(loss)
                states = res.states
                if res.done:
                    break
            metrics = EpisodeMetrics.from_records(records, ep, mad_window)
            result.episodes.append(metrics)
            if tables is not None:
                for row in metrics.rows():
                    tables[0].write(row)
                tables[1].write(metrics.aggregates())
            save_all()
            if callback is not None:
                callback(ep, metrics)
            log.info("episode %d: %s", ep, metrics.aggregates())
        if tcfg.episodes == 0:
            save_all()
    except DivergenceError:
        log.error("training diverged; partial metrics kept")
        raise
    finally:
        if tables is not None:
            for t in tables:
                t.close()
    return result


def _learn(slots, tcfg, joint_rng):
    if not slots:
        return None
    if tcfg.mode == "vdn":
        first = next(iter(slots.values()))
        if not first.memory.ready(tcfg.minibatch):
            return None
        idx = first.memory.sample_indices(tcfg.minibatch, joint_rng)
        batches = [s.memory.gather(idx) for s in slots.values()]
        team_reward = tcfg.reward_scale * sum(b.r for b in batches)
        nets = [s.net for s in slots.values()]
        targets = [s.target for s in slots.values()]
        loss = vdn_update(nets, targets, batches, team_reward, batches[0].terminal, tcfg.gamma, tcfg.lr)
        _after_update(slots.values(), tcfg)
        return loss
    loss = None
    for s in slots.values():
        if not s.memory.ready(tcfg.minibatch):
            continue
        b = s.memory.sample(tcfg.minibatch, s.sample_rng)
        loss = vdn_update([s.net], [s.target], [b], tcfg.reward_scale * b.r, b.terminal, tcfg.gamma, tcfg.lr)
        _after_update([s], tcfg)
    return loss


def _after_update(slots, tcfg):
    for s in slots:
        s.updates += 1
        if tcfg.target_sync and s.updates % tcfg.target_sync == 0:
            s.sync_target()


def load_models(model_dir, scenario, tcfg, agents):
    """Load the saved networks for ``agents``, checking their architecture."""
    nets = {}
    for i in agents:
        path = Path(model_dir) / AGENT_FILES[i]
        net = load_model(path)
        want = layer_dims(scenario, tcfg, i)
        if net.layer_dims != want:
            raise ModelFormatError(f"{path}: dims {net.layer_dims} do not match scenario {want}")
        nets[i] = net
    return nets


def evaluate(nets, scenario: ScenarioConfig, seed=0, sink=None, policy="greedy", temperature=1.0,
             mad_window=None):
    """Run one episode with frozen networks and no exploration."""
    env = MACCEnv(scenario)
    env.sink = sink
    for i, net in nets.items():
        if net.n_inputs != 3 * scenario.env.history or net.n_actions != N_ACTIONS[i]:
            raise ModelFormatError(f"agent {i + 1}: network {net.layer_dims} does not fit the scenario")
    schedule = ExplorationSchedule(forced=0.0)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 99]))
    states = env.reset(seed)
    records = []
    while True:
        actions = [0, 0]
        for i, net in nets.items():
            actions[i] = select_action(net, states[i], schedule, rng, 0, policy, temperature)
        res = env.step(*actions)
        records.append(res.info)
        states = res.states
        if res.done:
            break
    return EpisodeMetrics.from_records(records, 0, mad_window)


def simulate(scenario: ScenarioConfig, seed=0, sink=None, mad_window=None):
    """Run one rule-based episode (no agents)."""
    return evaluate({}, scenario, seed, sink, mad_window=mad_window)
