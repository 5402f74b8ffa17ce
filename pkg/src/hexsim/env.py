"""Episode orchestration: reset, step, termination, curriculum progression,
and order-stable vectorized batches.

Step pipeline (fixed order): servo tracking -> contact resolution ->
base advance -> sensors -> reward. Everything is a pure function of
(config, action sequence): identical runs produce bit-identical
StepResult sequences. Per-episode randomness (terrain layout, pose
noise) derives from SeedSequence((seed, episode_index)), so auto-reset
inside a batch stays reproducible and independent of batch order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import physics, terrain
from .heightmap import LayeredHeightField, extract_patch, sample_floor
from .physics import ContactReport, advance, base_height_above_floor, resolve_contacts
from .reward import TERM_ORDER, RewardBreakdown, RewardConfig, RewardInputs, compose
from .robot import JOINT_LIMIT, BaseState, JointState, RobotGeometry, reset_pose, servo_step, torque_proxy
from .sensing import (
    PoseNoise,
    StudentObservation,
    TeacherObservation,
    assemble_student,
    assemble_teacher,
    render_depth,
    sense_pose,
    sensor_config_for_task,
)

TASKS = ("stairs", "avoidance", "squeeze", "joist", "flat")
OBS_MODES = ("teacher", "student", "both", "none")
DONE_REASONS = ("timeout", "fell_over", "out_of_bounds", "task_complete")

# reward tables are published for the four skills; the flat validation
# task trains straight walking under the stairs table
_TASK_REWARDS = {
    "stairs": "stairs",
    "avoidance": "avoidance",
    "squeeze": "squeeze",
    "joist": "joist",
    "flat": "stairs",
}

SOFT_LIMIT = math.radians(115.0)  # joint-limit penalty fires before the hard clamp


@dataclass
class EpisodeConfig:
    task: str = "flat"
    level: int = 0
    total_levels: int = 10
    seed: int = 0
    max_steps: int = 1000
    dt: float = 0.05
    tilt_limit: float = math.radians(60.0)
    corridor_margin: float = 0.5
    collapse_height: float = 0.12  # body resting on the floor counts as fallen
    obs: str = "teacher"
    patch_cell: float = 0.05
    terrain_overrides: dict = dataclass_field(default_factory=dict)
    geometry: RobotGeometry = dataclass_field(default_factory=RobotGeometry)
    pose_noise: PoseNoise | None = None
    reward_config: RewardConfig | None = None  # defaults to the task table

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.obs not in OBS_MODES:
            raise ValueError(f"unknown obs mode {self.obs!r}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0 <= self.level <= self.total_levels:
            raise ValueError(f"level {self.level} outside [0, {self.total_levels}]")


@dataclass
class StepResult:
    teacher: TeacherObservation | None
    student: StudentObservation | None
    reward: RewardBreakdown
    done: bool
    done_reason: str | None
    info: dict

    def __post_init__(self):
        if self.done != (self.done_reason is not None):
            raise ValueError("done_reason must be present iff done")


def build_task_terrain(
    task: str,
    level: int,
    total_levels: int,
    seed: int,
    overrides: dict | None = None,
):
    """Generate the terrain for (task, level, seed); returns (field, layout)."""
    ov = dict(overrides or {})
    lvl = terrain.CurriculumLevel(level, total_levels)
    if task == "stairs":
        base = terrain.stair_params_for_level(lvl)
        params = terrain.StairParams(
            riser=ov.pop("riser", base.riser),
            tread=ov.pop("tread", base.tread),
            step_count=ov.pop("step_count", 8),
            tread_jitter_fraction=ov.pop("tread_jitter_fraction", 0.2),
            landing_interval=ov.pop("landing_interval", None),
            direction=ov.pop("direction", "up"),
        )
        return terrain.generate_stairs_with_layout(params, seed, **ov)
    if task == "avoidance":
        keys = ("density", "shape_set", "corridor_halfwidth", "corridor_length",
                "min_spacing", "spawn_clear")
        params = terrain.ObstacleFieldParams(**{k: ov.pop(k) for k in keys if k in ov})
        density_final = params.density
        density = ov.pop("density_level", None)
        if density is None:
            density = terrain.obstacle_density_for_level(lvl, density_final)
        if ov.pop("cap_density", False):
            density = min(density, density_final)
        return terrain.generate_obstacle_field_with_layout(params, density, seed, **ov)
    if task == "squeeze":
        clearance = ov.pop("clearance", None)
        if clearance is None:
            clearance = terrain.tunnel_clearance_for_level(lvl)
        keys = ("tunnel_length", "obstacle_thickness", "obstacle_width",
                "approach_distance", "num_slabs", "slab_gap")
        params = terrain.TunnelParams(
            clearance=clearance, **{k: ov.pop(k) for k in keys if k in ov}
        )
        randomize = ov.pop("randomize", True)
        return terrain.generate_tunnel_with_layout(params, seed, randomize=randomize, **ov)
    if task == "joist":
        return terrain.generate_joists_with_layout(
            ov.pop("spacing", 0.4),
            ov.pop("joist_height", 0.04),
            ov.pop("joist_width", 0.04),
            seed,
            **ov,
        )
    if task == "flat":
        length = ov.pop("length", 8.0)
        width = ov.pop("width", 3.0)
        cell = ov.pop("cell_size", 0.05)
        rows = int(round(length / cell)) + 1
        cols = int(round(width / cell)) + 1
        field = LayeredHeightField(
            rows, cols, cell, (0.0, -(cols - 1) * cell / 2),
            np.zeros((rows, cols)),
        )
        layout = terrain.TerrainLayout(
            spawn_x=1.0, goal_x=length - 2.0, feature_start_x=1.0,
            feature_end_x=length - 2.0, corridor_halfwidth=width / 2,
        )
        return field, layout
    raise ValueError(f"unknown task {task!r}")


class Env:
    """One episodic environment instance."""

    def __init__(self, config: EpisodeConfig):
        self.config = config
        self.geometry = config.geometry
        self.sensors = sensor_config_for_task(config.task, config.patch_cell)
        self.rewards = config.reward_config or RewardConfig.for_task(_TASK_REWARDS[config.task])
        self._needs_patch_for_reward = bool(
            self.rewards.weights.get("obstacle_front") or self.rewards.weights.get("obstacle_above")
        )
        self.q_min = np.full(18, -SOFT_LIMIT)
        self.q_max = np.full(18, SOFT_LIMIT)
        self.episode_index = -1
        self.reset()

    # -- episode lifecycle -------------------------------------------------

    def reset(self) -> StepResult:
        """Generate terrain for (task, level, seed, episode) and spawn the robot."""
        cfg = self.config
        self.episode_index += 1
        ss = np.random.SeedSequence((cfg.seed, self.episode_index))
        terrain_ss, noise_ss = ss.spawn(2)
        terrain_seed = int(terrain_ss.generate_state(1)[0])
        self.rng = np.random.default_rng(noise_ss)
        self.field, self.layout = build_task_terrain(
            cfg.task, cfg.level, cfg.total_levels, terrain_seed, cfg.terrain_overrides
        )
        spawn_x = self._spawn_x()
        floor_h = sample_floor(self.field, spawn_x, 0.0)
        self.joints, self.base = reset_pose(self.geometry, x=spawn_x, floor_height=floor_h)
        self.base, self.report = resolve_contacts(self.geometry, self.joints, self.base, self.field)
        self.last_action = self.joints.angles.copy()
        self.prev_forces = self.report.forces.copy()
        self.start_x = spawn_x
        self.start_y = 0.0
        self.start_yaw = 0.0
        self.step_count = 0
        self.done = False
        self.done_reason: str | None = None
        return self._result(RewardBreakdown({}, {}, 0.0))

    def _spawn_x(self) -> float:
        cfg, layout, geo = self.config, self.layout, self.geometry
        if cfg.task == "stairs":
            # robot front placed 20 cm before the first riser
            return layout.feature_start_x - 0.20 - geo.half_length
        if cfg.task == "squeeze":
            # robot front placed 30 cm before the slab's leading edge
            return layout.slab_spans[0][0] - 0.30 - geo.half_length
        return layout.spawn_x

    def step(self, action: np.ndarray) -> StepResult:
        """Apply 18 joint-angle targets and advance one control interval."""
        if self.done:
            raise RuntimeError("episode is done; call reset()")
        cfg = self.config
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (18,):
            raise ValueError("action must be 18 joint angles")

        prev_action = self.last_action
        prev_report = self.report
        prev_forces = self.prev_forces

        self.joints = servo_step(self.geometry, self.joints, action, cfg.dt)
        self.base, self.report = resolve_contacts(self.geometry, self.joints, self.base, self.field)
        self.base = advance(self.geometry, self.base, self.joints, self.report, cfg.dt)
        self.step_count += 1
        self.last_action = np.clip(action, -JOINT_LIMIT, JOINT_LIMIT)
        self.prev_forces = self.report.forces.copy()

        b = base_height_above_floor(self.base, self.field)
        patch = None
        if self._needs_patch_for_reward or cfg.obs in ("teacher", "both"):
            patch = self._extract_patch()

        reward = self._compute_reward(patch, b, prev_action, prev_forces)
        self._check_termination(b)
        return self._result(reward, patch=patch, base_height=b)

    def _extract_patch(self):
        return extract_patch(
            self.field,
            self.base.position[0],
            self.base.position[1],
            self.base.heading,
            self.sensors.patch_spec,
            self.sensors.patch_layer,
            front_offset=self.geometry.half_length,
        )

    def _compute_reward(self, patch, b, prev_action, prev_forces) -> RewardBreakdown:
        base = self.base
        yaw = base.heading
        c, s = math.cos(yaw), math.sin(yaw)
        vx, vy = base.linear_velocity[0], base.linear_velocity[1]
        ground = base.position[2] - b  # floor height under the base
        inputs = RewardInputs(
            v_x=vx,
            v_y_body=-s * vx + c * vy,
            heading_error=_wrap_angle(yaw - self.start_yaw),
            yaw_rate=base.angular_velocity[2],
            forces=self.report.forces,
            prev_forces=prev_forces,
            collision=self.report.any_illegal,
            action=self.last_action,
            prev_action=prev_action,
            torques=torque_proxy(self.geometry, self.joints),
            joint_angles=self.joints.angles,
            joint_velocities=self.joints.velocities,
            prev_joint_velocities=self.joints.prev_velocities,
            dt=self.config.dt,
            q_min=self.q_min,
            q_max=self.q_max,
            foot_clearances=self.report.foot_clearances,
            y=base.position[1],
            y_start=self.start_y,
            patch=patch,
            patch_reference=ground,
            base_height=b,
        )
        return compose(self.rewards, inputs)

    def _check_termination(self, b: float) -> None:
        cfg = self.config
        x, y = self.base.position[0], self.base.position[1]
        roll, pitch, _ = self.base.rpy
        if x > self.layout.goal_x:
            self.done, self.done_reason = True, "task_complete"
        elif abs(roll) > cfg.tilt_limit or abs(pitch) > cfg.tilt_limit or b < cfg.collapse_height:
            self.done, self.done_reason = True, "fell_over"
        elif (
            abs(y - self.start_y) > self.layout.corridor_halfwidth + cfg.corridor_margin
            or x < self.start_x - 1.0
        ):
            self.done, self.done_reason = True, "out_of_bounds"
        elif self.step_count >= cfg.max_steps:
            self.done, self.done_reason = True, "timeout"

    # -- outputs -----------------------------------------------------------

    def _result(self, reward: RewardBreakdown, patch=None, base_height=None) -> StepResult:
        cfg = self.config
        if base_height is None:
            base_height = base_height_above_floor(self.base, self.field)
        teacher = None
        student = None
        if cfg.obs in ("teacher", "both"):
            if patch is None:
                patch = self._extract_patch()
            teacher = assemble_teacher(patch, self.joints, self.base, self.last_action)
        if cfg.obs in ("student", "both"):
            depth = render_depth(self.sensors.camera, self.base, self.field)
            pos, quat = sense_pose(self.base, cfg.pose_noise, self.rng)
            student = assemble_student(depth, pos, quat, self.last_action)
        roll, pitch, yaw = self.base.rpy
        info = {
            "step": self.step_count,
            "x": float(self.base.position[0]),
            "y": float(self.base.position[1]),
            "z": float(self.base.position[2]),
            "roll": roll,
            "pitch": pitch,
            "yaw": yaw,
            "base_height": base_height,
            "distance": float(self.base.position[0] - self.start_x),
            "stairs_completed": self._stairs_completed(),
        }
        return StepResult(
            teacher=teacher,
            student=student,
            reward=reward,
            done=self.done,
            done_reason=self.done_reason,
            info=info,
        )

    def _stairs_completed(self) -> int:
        edges = self.layout.step_far_edges
        if not edges:
            return 0
        x = self.base.position[0]
        return int(sum(1 for e in edges if x > e))


class BatchEnv:
    """Order-stable batch of environments with auto-reset."""

    def __init__(self, envs: list[Env]):
        if not envs:
            raise ValueError("batch must contain at least one environment")
        self.envs = envs

    @classmethod
    def from_config(cls, config: EpisodeConfig, batch: int, base_seed: int | None = None) -> "BatchEnv":
        """Batch of identical configs with per-env seeds derived from base_seed."""
        from dataclasses import replace

        base_seed = config.seed if base_seed is None else base_seed
        seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(base_seed).spawn(batch)]
        return cls([Env(replace(config, seed=s)) for s in seeds])

    def __len__(self) -> int:
        return len(self.envs)

    def reset_all(self) -> list[StepResult]:
        return [env.reset() for env in self.envs]

    def step(self, actions: np.ndarray) -> list[StepResult]:
        """Elementwise step; done episodes auto-reset for the next call."""
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != (len(self.envs), 18):
            raise ValueError(f"actions must have shape ({len(self.envs)}, 18)")
        results = []
        for env, act in zip(self.envs, actions):
            result = env.step(act)
            if result.done:
                env.reset()
            results.append(result)
        return results


def curriculum_advance(
    completions,
    level: int,
    total_levels: int,
    window: int = 50,
    threshold: float = 0.7,
) -> int:
    """Promote one level when the recent completion rate clears the threshold.

    `completions` is the per-episode history (1.0 for task_complete);
    only the trailing `window` entries count, and promotion requires a
    full window. The level never leaves [0, total_levels].
    """
    history = list(completions)[-window:]
    if len(history) >= window and float(np.mean(history)) > threshold:
        level = level + 1
    return max(0, min(level, total_levels))


TRACE_COLUMNS = (
    "step", "x", "y", "z", "roll", "pitch", "yaw", "b",
    *TERM_ORDER, "total", "done_reason",
)


def write_trace_csv(results: list[StepResult], path) -> None:
    """Rollout trace: pose, base height b, per-term weighted rewards, total."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_COLUMNS)
        for r in results:
            info = r.info
            writer.writerow(
                [
                    info["step"],
                    repr(info["x"]),
                    repr(info["y"]),
                    repr(info["z"]),
                    repr(info["roll"]),
                    repr(info["pitch"]),
                    repr(info["yaw"]),
                    repr(info["base_height"]),
                    *(repr(r.reward.weighted.get(t, 0.0)) for t in TERM_ORDER),
                    repr(r.reward.total),
                    r.done_reason or "",
                ]
            )


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi
