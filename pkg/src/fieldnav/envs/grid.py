"""Discrete grid field with sparse reward and optional slippery moves.

Cell codes follow the FrozenLake convention: S start, F free, H obstacle,
G goal. Actions use FrozenLake's numbering so that ``(a +- 1) % 4`` are the
two perpendicular directions.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

LEFT, DOWN, RIGHT, UP = 0, 1, 2, 3
ACTION_NAMES = ("LEFT", "DOWN", "RIGHT", "UP")
N_ACTIONS = 4
_MOVES = {LEFT: (0, -1), DOWN: (1, 0), RIGHT: (0, 1), UP: (-1, 0)}
CELL_CODES = "SFHG"

MAX_STEPS_DETERMINISTIC = 200
MAX_STEPS_SLIPPERY = 1000


class MapError(ValueError):
    pass


class EpisodeOver(RuntimeError):
    pass


@dataclass(frozen=True)
class StepResult:
    next_state: int
    reward: float
    terminated: bool
    truncated: bool = False


def parse_map(text):
    rows = [line.strip() for line in text.splitlines() if line.strip()]
    if not rows:
        raise MapError("empty map")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise MapError("map rows have unequal lengths")
    bad = {c for r in rows for c in r} - set(CELL_CODES)
    if bad:
        raise MapError(f"unknown cell codes {sorted(bad)}")
    flat = "".join(rows)
    if flat.count("S") != 1:
        raise MapError(f"map needs exactly one start cell, found {flat.count('S')}")
    if flat.count("G") != 1:
        raise MapError(f"map needs exactly one goal cell, found {flat.count('G')}")
    return rows


def load_map(path):
    return parse_map(Path(path).read_text())


def builtin_map(name):
    """``"8x8"`` (FrozenLake-v1 layout) or ``"10x10"`` (dense field)."""
    fname = {"8x8": "grid_8x8.txt", "10x10": "grid_10x10.txt"}.get(name)
    if fname is None:
        raise MapError(f"no built-in map named {name!r}")
    return parse_map(resources.files("fieldnav.envs.data").joinpath(fname).read_text())


class GridWorld:
    def __init__(self, rows, slippery=False, max_steps=None, rng=None):
        if isinstance(rows, str):
            rows = builtin_map(rows) if rows in ("8x8", "10x10") else parse_map(rows)
        else:
            rows = parse_map("\n".join(rows))
        self.rows = rows
        self.height = len(rows)
        self.width = len(rows[0])
        self.cells = "".join(rows)
        self.slippery = slippery
        if max_steps is None:
            max_steps = MAX_STEPS_SLIPPERY if slippery else MAX_STEPS_DETERMINISTIC
        self.max_steps = max_steps
        self.start = self.cells.index("S")
        self.goal = self.cells.index("G")
        self.rng = rng if rng is not None else np.random.default_rng()
        self.n_states = self.width * self.height
        self.n_actions = N_ACTIONS
        self._eye = np.eye(self.n_states)
        self.agent = self.start
        self.steps = 0
        self.done = False

    @classmethod
    def from_file(cls, path, **kwargs):
        return cls(load_map(path), **kwargs)

    def reset(self):
        self.agent = self.start
        self.steps = 0
        self.done = False
        return self.agent

    def move(self, state, action):
        """Deterministic successor of ``state`` under ``action``, clamped at edges."""
        r, c = divmod(state, self.width)
        dr, dc = _MOVES[action]
        r = min(max(r + dr, 0), self.height - 1)
        c = min(max(c + dc, 0), self.width - 1)
        return r * self.width + c

    def step(self, action, rng=None):
        if self.done:
            raise EpisodeOver("step() called on a finished episode; call reset()")
        if action not in _MOVES:
            raise ValueError(f"invalid action {action!r}")
        if self.slippery:
            rng = self.rng if rng is None else rng
            action = (action + int(rng.integers(-1, 2))) % N_ACTIONS
        self.agent = self.move(self.agent, action)
        self.steps += 1
        cell = self.cells[self.agent]
        terminated = cell in "GH"
        reward = 1.0 if cell == "G" else 0.0
        truncated = not terminated and self.steps >= self.max_steps
        self.done = terminated or truncated
        return StepResult(self.agent, reward, terminated, truncated)

    def encode_state(self, state):
        if not 0 <= state < self.n_states:
            raise IndexError(f"state {state} outside [0, {self.n_states})")
        return self._eye[state]

    def is_obstacle(self, state):
        return self.cells[state] == "H"


def bfs_distances(env):
    """Shortest move counts from the start over non-obstacle cells (-1 = unreachable)."""
    dist = np.full(env.n_states, -1, dtype=int)
    dist[env.start] = 0
    queue = deque([env.start])
    while queue:
        s = queue.popleft()
        if env.cells[s] in "GH":
            continue
        for a in range(N_ACTIONS):
            t = env.move(s, a)
            if dist[t] < 0 and env.cells[t] != "H":
                dist[t] = dist[s] + 1
                queue.append(t)
    return dist


def shortest_path_length(env):
    d = bfs_distances(env)[env.goal]
    return None if d < 0 else int(d)
