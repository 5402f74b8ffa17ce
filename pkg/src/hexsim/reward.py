"""Reward suite: the full term table, the two height-map functionals, and
per-task weighted composition.

Weight notation in the source table reads "m^e" as m x 10^e, giving the
usual legged-RL magnitude hierarchy (forward velocity 100, action rate
-0.5, joint acceleration -1e-5). Both height-map functionals return the
unsigned double sum f(H); the negative task weight applies the single
intended negation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import yaml

from .heightmap import HeightPatch

# term identifiers in table order; composition accumulates in this order
TERM_ORDER = (
    "forward_velocity",
    "lateral_velocity",
    "heading",
    "yaw_rate",
    "ground_impact",
    "collision",
    "action_rate",
    "action_magnitude",
    "torques",
    "joint_accel",
    "joint_limit",
    "end_effector_height",
    "global_y_deviation",
    "obstacle_front",
    "obstacle_above",
)

# task columns of the reward table
TASK_TABLES: dict[str, dict[str, float]] = {
    "joist": {
        "forward_velocity": 100.0,
        "lateral_velocity": -10.0,
        "heading": -30.0,
        "yaw_rate": -1.0,
        "ground_impact": -0.1,
        "collision": -1.0,
        "action_rate": -0.5,
        "action_magnitude": -0.01,
        "torques": -0.001,
        "joint_accel": -1e-5,
        "joint_limit": -1.0,
        "end_effector_height": -0.1,
    },
    "stairs": {
        "forward_velocity": 100.0,
        "lateral_velocity": -10.0,
        "action_rate": -0.5,
        "joint_accel": -1e-5,
        "joint_limit": -1.0,
        "global_y_deviation": -100.0,
    },
    "avoidance": {
        "forward_velocity": 100.0,
        "lateral_velocity": -10.0,
        "yaw_rate": -1.0,
        "collision": -3.0,
        "action_rate": -0.5,
        "action_magnitude": -0.01,
        "torques": -0.001,
        "joint_accel": -1e-5,
        "joint_limit": -1.0,
        "global_y_deviation": -1.0,
        "obstacle_front": -0.1,
    },
    "squeeze": {
        "forward_velocity": 100.0,
        "lateral_velocity": -10.0,
        "yaw_rate": -1.0,
        "collision": -1.0,
        "action_rate": -0.5,
        "action_magnitude": -0.01,
        "torques": -0.01,
        "joint_accel": -1e-5,
        "joint_limit": -1.0,
        "global_y_deviation": -1.0,
        "obstacle_above": -0.1,
    },
}


@dataclass(frozen=True)
class RewardConfig:
    """Weight table for one task; unknown term ids are rejected at load."""

    task: str
    weights: dict[str, float]

    def __post_init__(self):
        unknown = set(self.weights) - set(TERM_ORDER)
        if unknown:
            raise ValueError(f"unknown reward term ids: {sorted(unknown)}")

    @classmethod
    def for_task(cls, task: str) -> "RewardConfig":
        if task not in TASK_TABLES:
            raise ValueError(f"unknown task {task!r}; expected one of {sorted(TASK_TABLES)}")
        return cls(task, dict(TASK_TABLES[task]))

    def scaled(self, factor: float) -> "RewardConfig":
        return RewardConfig(self.task, {k: v * factor for k, v in self.weights.items()})


@dataclass
class RewardBreakdown:
    raw: dict[str, float]
    weighted: dict[str, float]
    total: float


# ---------------------------------------------------------------------------
# individual terms (all pure functions of their inputs)

def term_forward_velocity(v_x: float) -> float:
    return float(np.clip(v_x, -0.4, 0.4))


def term_lateral_velocity(v_y: float) -> float:
    return v_y * v_y


def term_heading(theta: float) -> float:
    return theta * theta


def term_yaw_rate(omega: float) -> float:
    return omega * omega


def term_ground_impact(f_t: np.ndarray, f_prev: np.ndarray) -> float:
    d = np.asarray(f_t, dtype=float) - np.asarray(f_prev, dtype=float)
    return float(d @ d)


def term_collision(any_illegal_contact: bool) -> float:
    return 1.0 if any_illegal_contact else 0.0


def term_action_rate(a_t: np.ndarray, a_prev: np.ndarray) -> float:
    d = np.asarray(a_t, dtype=float) - np.asarray(a_prev, dtype=float)
    return float(d @ d)


def term_action_magnitude(a_t: np.ndarray) -> float:
    a = np.asarray(a_t, dtype=float)
    return float(a @ a)


def term_torques(tau: np.ndarray) -> float:
    t = np.asarray(tau, dtype=float)
    return float(t @ t)


def term_joint_accel(qd_t: np.ndarray, qd_prev: np.ndarray, dt: float) -> float:
    if dt <= 0:
        raise ValueError("dt must be positive")
    acc = (np.asarray(qd_t, dtype=float) - np.asarray(qd_prev, dtype=float)) / dt
    return float(acc @ acc)


def term_joint_limit(q: np.ndarray, q_min: np.ndarray, q_max: np.ndarray) -> float:
    """Sum of clip(q - q_min, max=0) + clip(q - q_max, min=0), as printed.

    Below-limit excursions contribute negatively and above-limit ones
    positively; strictly inside the limits the term is zero.
    """
    q = np.asarray(q, dtype=float)
    lo = np.minimum(q - np.asarray(q_min, dtype=float), 0.0)
    hi = np.maximum(q - np.asarray(q_max, dtype=float), 0.0)
    return float(np.sum(lo + hi))


def term_end_effector_height(z_feet: np.ndarray) -> float:
    """Sum of per-foot |height above local floor|."""
    return float(np.sum(np.abs(np.asarray(z_feet, dtype=float))))


def term_global_y_deviation(y: float, y_start: float) -> float:
    d = y - y_start
    return d * d


# ---------------------------------------------------------------------------
# height-map functionals

def triangular_weights(n: int) -> np.ndarray:
    """Lateral weights: 1 at both edges, peaking at 2 over the patch center."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return np.ones(1)
    j = np.arange(n, dtype=float)
    return 1.0 + (1.0 - np.abs(2.0 * j - (n - 1)) / (n - 1))


def ramp_weights(m: int) -> np.ndarray:
    """Forward weights: 1 at the far row ramping to 2 at the row nearest the robot."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if m == 1:
        return np.ones(1)
    return 1.0 + np.arange(m, dtype=float) / (m - 1)


def avoidance_functional(patch: HeightPatch | np.ndarray) -> float:
    """f(H) = sum_ij 1{h_ij > 0} * w1_j * w2_i over a floor-only patch.

    Heights are taken relative to the ground under the robot (the caller
    normalizes); any positive cell counts as obstacle. Returned
    unsigned: the task weight carries the sign.
    """
    values = patch.values if isinstance(patch, HeightPatch) else np.asarray(patch, dtype=float)
    m, n = values.shape
    binary = (values > 0.0).astype(float)
    w1 = triangular_weights(n)
    w2 = ramp_weights(m)
    return float(w2 @ binary @ w1)


def squeeze_functional(patch: HeightPatch | np.ndarray, b: float) -> float:
    """f(H) for the squeeze-composite patch and base height b.

    Cell scores: 1 when the (ceiling-composited) height clears the base,
    otherwise -2|h - b|; lateral weights are all ones and forward rows
    ramp from 1 (far) to 2 (near). Returned unsigned.
    """
    values = patch.values if isinstance(patch, HeightPatch) else np.asarray(patch, dtype=float)
    m, n = values.shape
    diff = values - b
    scores = np.where(diff > 0.0, 1.0, -2.0 * np.abs(diff))
    w4 = ramp_weights(m)
    return float(w4 @ scores @ np.ones(n))


# ---------------------------------------------------------------------------
# composition

@dataclass
class RewardInputs:
    """Everything the term table consumes for one step."""

    v_x: float = 0.0
    v_y_body: float = 0.0
    heading_error: float = 0.0
    yaw_rate: float = 0.0
    forces: np.ndarray = field(default_factory=lambda: np.zeros(6))
    prev_forces: np.ndarray = field(default_factory=lambda: np.zeros(6))
    collision: bool = False
    action: np.ndarray = field(default_factory=lambda: np.zeros(18))
    prev_action: np.ndarray = field(default_factory=lambda: np.zeros(18))
    torques: np.ndarray = field(default_factory=lambda: np.zeros(18))
    joint_angles: np.ndarray = field(default_factory=lambda: np.zeros(18))
    joint_velocities: np.ndarray = field(default_factory=lambda: np.zeros(18))
    prev_joint_velocities: np.ndarray = field(default_factory=lambda: np.zeros(18))
    dt: float = 0.05
    q_min: np.ndarray = field(default_factory=lambda: np.full(18, -2.0071286397934787))
    q_max: np.ndarray = field(default_factory=lambda: np.full(18, 2.0071286397934787))
    foot_clearances: np.ndarray = field(default_factory=lambda: np.zeros(6))
    y: float = 0.0
    y_start: float = 0.0
    patch: HeightPatch | None = None
    patch_reference: float = 0.0  # ground height under the robot, subtracted before binarizing
    base_height: float = 0.37


def _evaluate_term(term: str, s: RewardInputs) -> float:
    if term == "forward_velocity":
        return term_forward_velocity(s.v_x)
    if term == "lateral_velocity":
        return term_lateral_velocity(s.v_y_body)
    if term == "heading":
        return term_heading(s.heading_error)
    if term == "yaw_rate":
        return term_yaw_rate(s.yaw_rate)
    if term == "ground_impact":
        return term_ground_impact(s.forces, s.prev_forces)
    if term == "collision":
        return term_collision(s.collision)
    if term == "action_rate":
        return term_action_rate(s.action, s.prev_action)
    if term == "action_magnitude":
        return term_action_magnitude(s.action)
    if term == "torques":
        return term_torques(s.torques)
    if term == "joint_accel":
        return term_joint_accel(s.joint_velocities, s.prev_joint_velocities, s.dt)
    if term == "joint_limit":
        return term_joint_limit(s.joint_angles, s.q_min, s.q_max)
    if term == "end_effector_height":
        return term_end_effector_height(s.foot_clearances)
    if term == "global_y_deviation":
        return term_global_y_deviation(s.y, s.y_start)
    if term == "obstacle_front":
        if s.patch is None:
            raise ValueError("obstacle_front needs a height patch")
        return avoidance_functional(s.patch.values - s.patch_reference)
    if term == "obstacle_above":
        if s.patch is None:
            raise ValueError("obstacle_above needs a height patch")
        return squeeze_functional(s.patch.values - s.patch_reference, s.base_height)
    raise ValueError(f"unknown term {term!r}")


def compose(config: RewardConfig, inputs: RewardInputs) -> RewardBreakdown:
    """Weighted sum over the configured terms, accumulated in table order.

    Terms with zero (or missing) weight are skipped entirely, so a
    stairs config never evaluates the height-map functionals.
    """
    raw: dict[str, float] = {}
    weighted: dict[str, float] = {}
    total = 0.0
    for term in TERM_ORDER:
        w = config.weights.get(term, 0.0)
        if w == 0.0:
            continue
        value = _evaluate_term(term, inputs)
        raw[term] = value
        weighted[term] = w * value
        total += w * value
    return RewardBreakdown(raw=raw, weighted=weighted, total=total)


def load_reward_config(path) -> RewardConfig:
    """Read a task table from YAML: {task: name, weights: {term: weight}}."""
    with open(path) as f:
        data = yaml.safe_load(f)
    if not isinstance(data, dict) or "weights" not in data:
        raise ValueError("reward config must contain a 'weights' mapping")
    weights = {str(k): float(v) for k, v in data["weights"].items()}
    return RewardConfig(str(data.get("task", "custom")), weights)


def save_reward_config(config: RewardConfig, path) -> None:
    with open(path, "w") as f:
        yaml.safe_dump({"task": config.task, "weights": config.weights}, f, sort_keys=True)


def write_breakdown_csv(breakdowns: list[RewardBreakdown], path) -> None:
    """Per-step weighted term values: step, <term ids...>, total."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", *TERM_ORDER, "total"])
        for i, b in enumerate(breakdowns):
            writer.writerow(
                [i, *(repr(b.weighted.get(t, 0.0)) for t in TERM_ORDER), repr(b.total)]
            )
