"""Exploration, action selection and temporal-difference updates (DQN / VDN)."""

from __future__ import annotations

import math

import numpy as np

from ..errors import DivergenceError
from .replay import Batch


class ExplorationSchedule:
    """Probability of taking a uniformly random action.

    ``kind="schedule"`` decays as ``base ** min(memory_counter, cap)``;
    ``kind="constant"`` always returns ``epsilon``. ``forced`` overrides both
    (``forced=0.0`` gives a purely greedy policy for evaluation).
    """

    def __init__(self, kind="schedule", base=0.99, cap=2000, epsilon=0.1, forced=None):
        if kind not in ("schedule", "constant"):
            raise ValueError(f"unknown exploration kind {kind!r}")
        self.kind = kind
        self.base = base
        self.cap = cap
        self.epsilon = epsilon
        self.forced = forced

    def p_exploring(self, memory_counter):
        if self.forced is not None:
            return self.forced
        if self.kind == "constant":
            return self.epsilon
        return self.base ** min(max(int(memory_counter), 0), self.cap)

    def greedy(self):
        return ExplorationSchedule(self.kind, self.base, self.cap, self.epsilon, forced=0.0)

    @classmethod
    def from_config(cls, tcfg):
        return cls(tcfg.exploration, tcfg.exploration_base, tcfg.exploration_cap, tcfg.epsilon)


def select_action(net, s, schedule: ExplorationSchedule, rng, memory_counter=0,
                  policy="greedy", temperature=1.0):
    """Epsilon-greedy choice; ties in the arg-max go to the lowest index.

    With ``policy="boltzmann"`` the exploit branch samples from a softmax over
    Q-values instead of taking the arg-max.
    """
    n = net.n_actions
    if rng.random() < schedule.p_exploring(memory_counter):
        return int(rng.integers(n))
    q = net.forward(s)
    if policy == "boltzmann":
        z = (q - q.max()) / temperature
        p = np.exp(z)
        p /= p.sum()
        return int(rng.choice(n, p=p))
    return int(np.argmax(q))


def vdn_joint_q(q_values):
    """Joint action-value of a cooperative team: the sum of per-agent values."""
    q_values = list(q_values)
    if not q_values:
        raise ValueError("vdn_joint_q needs at least one agent")
    return math.fsum(q_values)


def joint_td_loss(nets, target_nets, batches, reward, terminal, gamma):
    """MSE between the summed chosen Q-values and the summed bootstrap target.

    Returns ``(loss, grads)`` with one gradient list per network. With a single
    network this is the ordinary DQN loss. A non-finite loss comes back with
    ``grads=None``.
    """
    reward = np.asarray(reward, dtype=np.float64)
    n = reward.shape[0]
    rows = np.arange(n)
    cont = 1.0 - np.asarray(terminal, dtype=np.float64)
    total = np.zeros(n)
    bootstrap = np.zeros(n)
    cached = []
    for net, tnet, b in zip(nets, target_nets, batches):
        q, acts = net.forward_cached(b.s)
        total += q[rows, b.a]
        bootstrap += (tnet if tnet is not None else net).forward(b.s_next).max(axis=1)
        cached.append((q, acts))
    y = reward + gamma * cont * bootstrap
    err = total - y
    loss = float(np.mean(err * err))
    if not math.isfinite(loss):
        return loss, None  # nothing sensible to backpropagate
    g = 2.0 * err / n
    grads = []
    for net, b, (q, acts) in zip(nets, batches, cached):
        g_out = np.zeros_like(q)
        g_out[rows, b.a] = g
        grads.append(net.backward(acts, g_out))
    return loss, grads


def vdn_update(nets, target_nets, batches, reward, terminal, gamma, lr):
    """One SGD step on the joint TD loss; returns the pre-step loss."""
    loss, grads = joint_td_loss(nets, target_nets, batches, reward, terminal, gamma)
    if not math.isfinite(loss):
        raise DivergenceError(f"non-finite TD loss ({loss})")
    for net, g in zip(nets, grads):
        net.sgd_step(g, lr)
        if not net.all_finite():
            raise DivergenceError(f"non-finite parameters in agent {net.agent_id} after update")
    return loss


def td_update(net, target_net, batch, gamma, lr):
    """Single-agent DQN update on a :class:`Batch` (or a list of experiences)."""
    if not isinstance(batch, Batch):
        batch = Batch.from_experiences(batch)
    if len(batch) == 0:
        raise ValueError("td_update needs a nonempty batch")
    return vdn_update([net], [target_net], [batch], batch.r, batch.terminal, gamma, lr)
