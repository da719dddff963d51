"""Ring-buffer transition store with uniform sampling (with replacement)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn_core import UsageError


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


@dataclass
class Batch:
    """Column-stacked transitions."""

    state: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_state: np.ndarray
    done: np.ndarray

    def __len__(self) -> int:
        return len(self.reward)

    def __getitem__(self, i: int) -> Transition:
        return Transition(self.state[i], self.action[i], float(self.reward[i]),
                          self.next_state[i], bool(self.done[i]))

    @classmethod
    def from_transitions(cls, items: list[Transition]) -> "Batch":
        return cls(
            np.array([t.state for t in items], dtype=np.float64),
            np.array([t.action for t in items], dtype=np.float64),
            np.array([t.reward for t in items], dtype=np.float64),
            np.array([t.next_state for t in items], dtype=np.float64),
            np.array([t.done for t in items], dtype=np.float64),
        )


class ReplayBuffer:
    """Fixed capacity; the oldest entry is overwritten first once full.

    Storage grows geometrically up to ``capacity`` so small runs stay small.
    """

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.state_dim = state_dim
        self.action_dim = action_dim
        self._alloc = 0
        self._s = self._a = self._r = self._s2 = self._d = None
        self._grow(min(self.capacity, 1024))
        self.write_cursor = 0
        self.size = 0

    def _grow(self, n: int) -> None:
        def resized(old, shape):
            new = np.zeros(shape, dtype=np.float64)
            if old is not None:
                new[:len(old)] = old
            return new

        self._s = resized(self._s, (n, self.state_dim))
        self._a = resized(self._a, (n, self.action_dim))
        self._r = resized(self._r, (n,))
        self._s2 = resized(self._s2, (n, self.state_dim))
        self._d = resized(self._d, (n,))
        self._alloc = n

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> None:
        i = self.write_cursor
        if i >= self._alloc:
            self._grow(min(self.capacity, 2 * self._alloc))
        self._s[i] = t.state
        self._a[i] = t.action
        self._r[i] = t.reward
        self._s2[i] = t.next_state
        self._d[i] = float(t.done)
        self.write_cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _oldest_first(self) -> np.ndarray:
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.size) + self.write_cursor) % self.capacity

    def __getitem__(self, k: int) -> Transition:
        """``k``-th stored transition, oldest first."""
        i = int(self._oldest_first()[k])
        return Transition(self._s[i].copy(), self._a[i].copy(), float(self._r[i]),
                          self._s2[i].copy(), bool(self._d[i]))

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise UsageError("cannot sample from an empty replay buffer")
        return rng.integers(0, self.size, size=n)

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        idx = self.sample_indices(n, rng)
        return Batch(self._s[idx], self._a[idx], self._r[idx], self._s2[idx], self._d[idx])
