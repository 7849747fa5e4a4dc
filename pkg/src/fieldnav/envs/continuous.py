"""Continuous 2D field: a point agent, rectangle/circle obstacles, shaped reward."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

SCENARIOS = (1, 2, 3)


class ScenarioError(ValueError):
    pass


class EpisodeOver(RuntimeError):
    pass


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    w: float
    h: float

    def distance(self, p):
        dx = max(self.x - p[0], 0.0, p[0] - (self.x + self.w))
        dy = max(self.y - p[1], 0.0, p[1] - (self.y + self.h))
        return math.hypot(dx, dy)

    def segment_distance(self, p, q):
        if _segment_crosses_box(p, q, self.x, self.y, self.x + self.w, self.y + self.h):
            return 0.0
        corners = ((self.x, self.y), (self.x + self.w, self.y),
                   (self.x, self.y + self.h), (self.x + self.w, self.y + self.h))
        return min(self.distance(p), self.distance(q),
                   *(_point_segment_distance(c, p, q) for c in corners))


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float

    def distance(self, p):
        return max(math.hypot(p[0] - self.cx, p[1] - self.cy) - self.r, 0.0)

    def segment_distance(self, p, q):
        return max(_point_segment_distance((self.cx, self.cy), p, q) - self.r, 0.0)


def _point_segment_distance(c, p, q):
    px, py = p
    dx, dy = q[0] - px, q[1] - py
    norm = dx * dx + dy * dy
    t = 0.0 if norm == 0.0 else min(max(((c[0] - px) * dx + (c[1] - py) * dy) / norm, 0.0), 1.0)
    return math.hypot(px + t * dx - c[0], py + t * dy - c[1])


def _segment_crosses_box(p, q, x0, y0, x1, y1):
    """Liang-Barsky clip of segment p->q against a closed box."""
    t0, t1 = 0.0, 1.0
    d = (q[0] - p[0], q[1] - p[1])
    for axis, lo, hi in ((0, x0, x1), (1, y0, y1)):
        if d[axis] == 0.0:
            if not lo <= p[axis] <= hi:
                return False
            continue
        a = (lo - p[axis]) / d[axis]
        b = (hi - p[axis]) / d[axis]
        if a > b:
            a, b = b, a
        t0, t1 = max(t0, a), min(t1, b)
        if t0 > t1:
            return False
    return True


@dataclass(frozen=True)
class Scenario:
    start: tuple
    goal: tuple
    obstacles: tuple
    goal_radius: float = 1.0
    bounds: tuple = (0.0, 0.0, 20.0, 20.0)
    name: str = ""


@dataclass(frozen=True)
class RewardParams:
    step_scale: float = 0.5
    boundary_margin: float = 0.5
    boundary_penalty: float = -0.5
    obstacle_margin: float = 0.3
    collision_penalty: float = -2.0
    revisit_penalty: float = -1.0
    step_penalty: float = -0.05
    goal_bonus: float = 20.0
    visit_cell: float = 1.0
    max_steps: int = 200


@dataclass(frozen=True)
class RewardBreakdown:
    potential: float
    step: float
    boundary: float
    revisit: float
    collision: float
    goal: float

    @property
    def total(self):
        return self.potential + self.step + self.boundary + self.revisit + self.collision + self.goal


@dataclass(frozen=True)
class ContStepResult:
    observation: np.ndarray
    reward: float
    terminated: bool
    collided: bool
    reached_goal: bool = False
    timed_out: bool = False
    breakdown: RewardBreakdown | None = field(default=None, compare=False)

    @property
    def outcome(self):
        if self.reached_goal:
            return "goal"
        if self.collided:
            return "collision"
        return "timeout" if self.timed_out else "running"


def parse_scenario(text, name=""):
    values = {}
    obstacles = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        try:
            nums = [float(v) for v in rest]
        except ValueError as exc:
            raise ScenarioError(f"line {lineno}: non-numeric value in {raw!r}") from exc
        expected = {"bounds": 4, "start": 2, "goal": 2, "goal_radius": 1, "rect": 4, "circle": 3}
        if key not in expected:
            raise ScenarioError(f"line {lineno}: unknown key {key!r}")
        if len(nums) != expected[key]:
            raise ScenarioError(f"line {lineno}: {key} takes {expected[key]} numbers")
        if key == "rect":
            if nums[2] <= 0 or nums[3] <= 0:
                raise ScenarioError(f"line {lineno}: rectangle needs positive size")
            obstacles.append(Rect(*nums))
        elif key == "circle":
            if nums[2] <= 0:
                raise ScenarioError(f"line {lineno}: circle needs positive radius")
            obstacles.append(Circle(*nums))
        elif key in values:
            raise ScenarioError(f"line {lineno}: duplicate key {key!r}")
        else:
            values[key] = nums
    for key in ("start", "goal"):
        if key not in values:
            raise ScenarioError(f"scenario lacks {key!r}")
    scenario = Scenario(
        start=tuple(values["start"]),
        goal=tuple(values["goal"]),
        obstacles=tuple(obstacles),
        goal_radius=values.get("goal_radius", [1.0])[0],
        bounds=tuple(values.get("bounds", [0.0, 0.0, 20.0, 20.0])),
        name=name,
    )
    validate_scenario(scenario)
    return scenario


def validate_scenario(s, obstacle_margin=0.0):
    x0, y0, x1, y1 = s.bounds
    if not (x1 > x0 and y1 > y0):
        raise ScenarioError("bounds must have positive extent")
    if s.goal_radius <= 0:
        raise ScenarioError("goal_radius must be positive")
    for label, p in (("start", s.start), ("goal", s.goal)):
        if not (x0 <= p[0] <= x1 and y0 <= p[1] <= y1):
            raise ScenarioError(f"{label} {p} lies outside the bounds")
        for ob in s.obstacles:
            if ob.distance(p) <= obstacle_margin:
                raise ScenarioError(f"{label} {p} lies inside obstacle {ob}")
    if math.dist(s.start, s.goal) <= s.goal_radius:
        raise ScenarioError("start already lies inside the goal area")


def load_scenario(path):
    path = Path(path)
    return parse_scenario(path.read_text(), name=path.stem)


def builtin_scenario(number):
    if number not in SCENARIOS:
        raise ScenarioError(f"unknown scenario {number!r}; choose from {SCENARIOS}")
    text = resources.files("fieldnav.envs.data").joinpath(f"scenario_{number}.txt").read_text()
    return parse_scenario(text, name=f"scenario_{number}")


class ContinuousFarm:
    """Point agent on a bounded field.

    Observations are raw (x, y) coordinates; actions are 2-vectors in
    [-1, 1]^2 scaled by ``step_scale``.
    """

    obs_dim = 2
    action_dim = 2

    def __init__(self, scenario=1, params=None):
        self.params = params or RewardParams()
        self.scenario = None
        self._load(scenario)
        self.reset()

    def _load(self, scenario):
        if isinstance(scenario, Scenario):
            s = scenario
        elif isinstance(scenario, (str, Path)) and not str(scenario).isdigit():
            s = load_scenario(scenario)
        else:
            s = builtin_scenario(int(scenario))
        validate_scenario(s, self.params.obstacle_margin)
        self.scenario = s
        self.start = np.array(s.start, dtype=np.float64)
        self.goal = np.array(s.goal, dtype=np.float64)
        self.start_goal_distance = float(np.linalg.norm(self.goal - self.start))
        x0, y0, x1, y1 = s.bounds
        self.low = np.array([x0, y0])
        self.high = np.array([x1, y1])
        cell = self.params.visit_cell
        self._grid_shape = (int(math.ceil((x1 - x0) / cell)), int(math.ceil((y1 - y0) / cell)))

    @property
    def obstacles(self):
        return self.scenario.obstacles

    def reset(self, scenario=None):
        if scenario is not None:
            self._load(scenario)
        self.agent = self.start.copy()
        self.visits = np.zeros(self._grid_shape, dtype=np.int64)
        self.visits[self.visit_cell(self.agent)] += 1
        self.step_count = 0
        self.done = False
        return self.agent.copy()

    def visit_cell(self, p):
        cell = self.params.visit_cell
        i = min(int((p[0] - self.low[0]) // cell), self._grid_shape[0] - 1)
        j = min(int((p[1] - self.low[1]) // cell), self._grid_shape[1] - 1)
        return i, j

    def potential(self, p):
        return -float(np.linalg.norm(np.asarray(p) - self.goal)) / self.start_goal_distance

    def near_boundary(self, p):
        m = self.params.boundary_margin
        return bool(np.any(p - self.low < m) or np.any(self.high - p < m))

    def collision_check(self, prev, nxt):
        """Swept test of the move prev -> nxt against obstacles grown by the margin."""
        margin = self.params.obstacle_margin
        return any(ob.segment_distance(prev, nxt) <= margin for ob in self.obstacles)

    def in_goal(self, p):
        return float(np.linalg.norm(np.asarray(p) - self.goal)) <= self.scenario.goal_radius

    def shaped_reward(self, prev, nxt, collided):
        p = self.params
        prev_cell, next_cell = self.visit_cell(prev), self.visit_cell(nxt)
        revisit = next_cell != prev_cell and self.visits[next_cell] > 0
        reached = not collided and self.in_goal(nxt)
        return RewardBreakdown(
            potential=self.potential(nxt),
            step=p.step_penalty,
            boundary=p.boundary_penalty if self.near_boundary(nxt) else 0.0,
            revisit=p.revisit_penalty if revisit else 0.0,
            collision=p.collision_penalty if collided else 0.0,
            goal=p.goal_bonus if reached else 0.0,
        )

    def step(self, action):
        if self.done:
            raise EpisodeOver("step() called on a finished episode; call reset()")
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (2,) or not np.all(np.isfinite(action)):
            raise ValueError(f"action must be a finite 2-vector, got {action!r}")
        action = np.clip(action, -1.0, 1.0)
        prev = self.agent
        nxt = np.clip(prev + action * self.params.step_scale, self.low, self.high)
        collided = self.collision_check(prev, nxt)
        breakdown = self.shaped_reward(prev, nxt, collided)
        self.visits[self.visit_cell(nxt)] += 1
        self.agent = nxt
        self.step_count += 1
        reached = breakdown.goal != 0.0 or (not collided and self.in_goal(nxt))
        timed_out = not (reached or collided) and self.step_count >= self.params.max_steps
        self.done = reached or collided or timed_out
        return ContStepResult(nxt.copy(), breakdown.total, self.done, collided,
                              reached, timed_out, breakdown)


def with_params(env, **changes):
    """Copy of ``env`` with some reward parameters replaced."""
    return ContinuousFarm(env.scenario, replace(env.params, **changes))
