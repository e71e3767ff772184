from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Experience:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    terminal: bool = False


@dataclass
class Batch:
    s: np.ndarray  # (n, d)
    a: np.ndarray  # (n,) int
    r: np.ndarray  # (n,)
    s_next: np.ndarray  # (n, d)
    terminal: np.ndarray  # (n,) bool

    def __len__(self):
        return len(self.a)

    @classmethod
    def from_experiences(cls, items):
        items = list(items)
        return cls(
            np.array([e.s for e in items], dtype=np.float64),
            np.array([e.a for e in items], dtype=np.int64),
            np.array([e.r for e in items], dtype=np.float64),
            np.array([e.s_next for e in items], dtype=np.float64),
            np.array([e.terminal for e in items], dtype=bool),
        )


class NotReady(Exception):
    """Raised by :meth:`ReplayMemory.sample` when fewer than ``n`` items are stored."""


class ReplayMemory:
    """Fixed-capacity ring buffer of experiences with uniform sampling.

    ``memory_counter`` counts every push ever made (it is not capped by the
    capacity) and drives the exploration schedule.
    """

    def __init__(self, capacity, state_dim):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.state_dim = int(state_dim)
        self._s = np.zeros((capacity, state_dim))
        self._s_next = np.zeros((capacity, state_dim))
        self._a = np.zeros(capacity, dtype=np.int64)
        self._r = np.zeros(capacity)
        self._t = np.zeros(capacity, dtype=bool)
        self.memory_counter = 0

    def __len__(self):
        return min(self.memory_counter, self.capacity)

    def push(self, e: Experience):
        s = np.asarray(e.s, dtype=np.float64)
        s_next = np.asarray(e.s_next, dtype=np.float64)
        if s.shape != (self.state_dim,) or s_next.shape != (self.state_dim,):
            raise ValueError(f"experience states must have shape ({self.state_dim},)")
        if not np.isfinite(e.r):
            raise ValueError("experience reward must be finite")
        i = self.memory_counter % self.capacity
        self._s[i] = s
        self._s_next[i] = s_next
        self._a[i] = e.a
        self._r[i] = e.r
        self._t[i] = e.terminal
        self.memory_counter += 1

    def ready(self, n):
        return len(self) >= n

    def sample_indices(self, n, rng):
        if len(self) < n:
            raise NotReady(f"replay memory holds {len(self)} experiences, need {n}")
        return rng.choice(len(self), size=n, replace=False)

    def gather(self, idx) -> Batch:
        return Batch(self._s[idx], self._a[idx], self._r[idx], self._s_next[idx], self._t[idx])

    def sample(self, n, rng) -> Batch:
        return self.gather(self.sample_indices(n, rng))

    def __getitem__(self, i) -> Experience:
        if not 0 <= i < len(self):
            raise IndexError(i)
        return Experience(self._s[i].copy(), int(self._a[i]), float(self._r[i]),
                          self._s_next[i].copy(), bool(self._t[i]))


def push(memory: ReplayMemory, e: Experience):
    memory.push(e)


def sample(memory: ReplayMemory, n, rng) -> Batch:
    return memory.sample(n, rng)
