"""Per-step reward used for the ground robot in the 3D field.

Only the reward arithmetic lives here; sensing and outcome detection are the
simulator's job and arrive as fields of :class:`NavState`.
"""
from __future__ import annotations

from dataclasses import dataclass

OBSTACLE_THRESHOLD = 0.22
OBSTACLE_PENALTY = -20.0
TARGET_LINEAR_SPEED = 0.22
STEP_PENALTY = -1.0
SUCCESS_REWARD = 2500.0
FAILURE_PENALTY = -2000.0
OUTCOMES = ("ongoing", "success", "failure")


@dataclass(frozen=True)
class NavState:
    goal_angle: float
    goal_dist: float
    goal_dist_initial: float
    min_obstacle_dist: float
    action_linear: float
    action_angular: float
    outcome: str = "ongoing"

    def __post_init__(self):
        if self.goal_dist_initial <= 0:
            raise ValueError("goal_dist_initial must be positive")
        if self.goal_dist < 0 or self.min_obstacle_dist < 0:
            raise ValueError("distances must be non-negative")
        if self.outcome not in OUTCOMES:
            raise ValueError(f"outcome must be one of {OUTCOMES}")


@dataclass(frozen=True)
class Reward3dBreakdown:
    yaw: float
    angular_velocity: float
    distance: float
    obstacle: float
    linear_velocity: float
    step: float
    success: float
    failure: float

    @property
    def total(self):
        return (self.yaw + self.angular_velocity + self.distance + self.obstacle
                + self.linear_velocity + self.step + self.success + self.failure)


def reward3d(s: NavState) -> tuple[float, Reward3dBreakdown]:
    parts = Reward3dBreakdown(
        yaw=-1.0 * abs(s.goal_angle),
        angular_velocity=-1.0 * (s.action_angular ** 2),
        distance=2.0 * s.goal_dist_initial / (s.goal_dist_initial + s.goal_dist) - 1.0,
        # strict: exactly 0.22 is not penalized
        obstacle=OBSTACLE_PENALTY if s.min_obstacle_dist < OBSTACLE_THRESHOLD else 0.0,
        linear_velocity=-1.0 * ((TARGET_LINEAR_SPEED - s.action_linear) * 10.0) ** 2,
        step=STEP_PENALTY,
        success=SUCCESS_REWARD if s.outcome == "success" else 0.0,
        failure=FAILURE_PENALTY if s.outcome == "failure" else 0.0,
    )
    return parts.total, parts
