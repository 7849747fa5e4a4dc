"""Bounded FIFO experience replay with uniform sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: object  # int for discrete agents, float vector for continuous ones
    reward: float
    next_state: np.ndarray
    terminated: bool


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminated: np.ndarray

    def __len__(self):
        return len(self.rewards)

    def transitions(self):
        return [
            Transition(self.states[i], _unwrap(self.actions[i]), float(self.rewards[i]),
                       self.next_states[i], bool(self.terminated[i]))
            for i in range(len(self))
        ]


def _unwrap(a):
    return int(a) if np.ndim(a) == 0 else a


class ReplayBuffer:
    """Ring buffer over preallocated arrays.

    Storage is allocated on the first push, once the state width and action
    kind are known. Logical index 0 is always the oldest stored transition.
    """

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self._size = 0
        self._head = 0  # next physical slot to write
        self._states = None

    def __len__(self):
        return self._size

    def _allocate(self, state, action):
        dim = len(state)
        self._states = np.zeros((self.capacity, dim))
        self._next_states = np.zeros((self.capacity, dim))
        if np.ndim(action) == 0:
            self._actions = np.zeros(self.capacity, dtype=np.int64)
        else:
            self._actions = np.zeros((self.capacity, len(action)))
        self._rewards = np.zeros(self.capacity)
        self._terminated = np.zeros(self.capacity, dtype=bool)

    def push(self, transition=None, *, state=None, action=None, reward=None,
             next_state=None, terminated=None):
        if transition is not None:
            state, action, reward, next_state, terminated = (
                transition.state, transition.action, transition.reward,
                transition.next_state, transition.terminated)
        if self._states is None:
            self._allocate(state, action)
        i = self._head
        self._states[i] = state
        self._next_states[i] = next_state
        self._actions[i] = action
        self._rewards[i] = reward
        self._terminated[i] = terminated
        self._head = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        return self

    def _physical(self, logical):
        start = (self._head - self._size) % self.capacity
        return (start + np.asarray(logical)) % self.capacity

    def __getitem__(self, i):
        if not -self._size <= i < self._size:
            raise IndexError(i)
        p = int(self._physical(i % self._size))
        return Transition(self._states[p].copy(), _unwrap(self._actions[p].copy()),
                          float(self._rewards[p]), self._next_states[p].copy(),
                          bool(self._terminated[p]))

    def __iter__(self):
        return (self[i] for i in range(self._size))

    def can_sample(self, n):
        return self._size >= n

    def sample_indices(self, n, rng):
        """Logical indices drawn uniformly with replacement."""
        if n < 1:
            raise ValueError("sample size must be positive")
        if self._size < n:
            raise ValueError(f"buffer holds {self._size} transitions, cannot sample {n}")
        return rng.integers(0, self._size, size=n)

    def sample(self, n, rng):
        p = self._physical(self.sample_indices(n, rng))
        return Batch(self._states[p], self._actions[p], self._rewards[p],
                     self._next_states[p], self._terminated[p])
