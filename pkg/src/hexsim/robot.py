"""Hexapod kinematic model: 18 revolute joints, joint limits, reset pose,
forward kinematics, and rate-limited servo tracking.

Leg layout (index: name, mount yaw sign): 0 LF, 1 RF, 2 LM, 3 RM, 4 LR,
5 RR; each leg contributes (coxa yaw, femur pitch, tibia pitch) to the
18-vector in leg-major order. Positive femur/tibia pitch swings the link
below the horizontal, so the foot drop of a leg is
``lf*sin(q2) + lt*sin(q2+q3)``.

The base frame origin sits at the top of the robot (camera payload
included): the published heights -- 37 cm standing, 28.75 cm laying flat
-- are base-origin heights above the floor. Exact link geometry is not
published; the default profile is chosen so those two heights hold, and
everything is overridable through a YAML geometry profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from . import _kernels
from .rotations import quat_from_rpy, quat_to_matrix, rpy_from_quat, yaw_of

N_LEGS = 6
N_JOINTS = 18
JOINT_LIMIT = math.radians(120.0)

LEG_NAMES = ("LF", "RF", "LM", "RM", "LR", "RR")
# tripod gait groups: A swings while B stands, then vice versa
TRIPOD_A = (0, 3, 4)
TRIPOD_B = (1, 2, 5)


@dataclass(frozen=True)
class RobotGeometry:
    """Physical profile; lengths in meters, angles in radians."""

    half_length: float = 0.15
    half_width: float = 0.10
    body_box_height: float = 0.25  # collision box spans z in [-height, 0] below the base origin
    coxa_length: float = 0.045
    femur_length: float = 0.08
    tibia_length: float = 0.16
    mount_xy: tuple = (
        (0.12, 0.10),
        (0.12, -0.10),
        (0.0, 0.115),
        (0.0, -0.115),
        (-0.12, 0.10),
        (-0.12, -0.10),
    )
    mount_yaw_deg: tuple = (55.0, -55.0, 90.0, -90.0, 125.0, -125.0)
    reset_femur: float = math.radians(20.0)
    reset_tibia: float = math.radians(60.0)
    standing_height: float = 0.37
    flat_height: float = 0.2875
    max_servo_speed: float = 4.0  # rad/s
    servo_kp: float = 10.0
    tau_max: float = 5.0
    mass: float = 3.0

    def __post_init__(self):
        for name in ("half_length", "half_width", "body_box_height", "coxa_length",
                     "femur_length", "tibia_length", "standing_height", "flat_height",
                     "max_servo_speed", "servo_kp", "tau_max", "mass"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if len(self.mount_xy) != N_LEGS or len(self.mount_yaw_deg) != N_LEGS:
            raise ValueError("exactly six leg mounts required")

    @property
    def reset_foot_drop(self) -> float:
        """Vertical distance from leg mount to foot in the reset pose."""
        return self.femur_length * math.sin(self.reset_femur) + self.tibia_length * math.sin(
            self.reset_femur + self.reset_tibia
        )

    @property
    def mount_z(self) -> float:
        # mounts placed so that reset-pose feet touch the floor at standing height
        return -(self.standing_height - self.reset_foot_drop)

    @property
    def mounts(self) -> np.ndarray:
        m = np.empty((N_LEGS, 3))
        for i, (x, y) in enumerate(self.mount_xy):
            m[i] = (x, y, self.mount_z)
        return m

    @property
    def mount_yaw(self) -> np.ndarray:
        return np.array([math.radians(a) for a in self.mount_yaw_deg])

    @property
    def link_lengths(self) -> np.ndarray:
        return np.array([self.coxa_length, self.femur_length, self.tibia_length])

    @property
    def reset_angles(self) -> np.ndarray:
        q = np.zeros(N_JOINTS)
        q[1::3] = self.reset_femur
        q[2::3] = self.reset_tibia
        return q

    @property
    def weight(self) -> float:
        return self.mass * 9.81


@dataclass
class JointState:
    angles: np.ndarray
    velocities: np.ndarray
    targets: np.ndarray
    prev_velocities: np.ndarray

    def __post_init__(self):
        for name in ("angles", "velocities", "targets", "prev_velocities"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.shape != (N_JOINTS,):
                raise ValueError(f"{name} must have shape (18,)")
            setattr(self, name, v)
        if np.any(np.abs(self.angles) > JOINT_LIMIT + 1e-9):
            raise ValueError("joint angle outside +/-120 degrees")

    def copy(self) -> "JointState":
        return JointState(
            self.angles.copy(), self.velocities.copy(),
            self.targets.copy(), self.prev_velocities.copy(),
        )


@dataclass
class BaseState:
    position: np.ndarray
    orientation: np.ndarray  # unit quaternion (w, x, y, z)
    linear_velocity: np.ndarray
    angular_velocity: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.orientation = np.asarray(self.orientation, dtype=np.float64)
        self.linear_velocity = np.asarray(self.linear_velocity, dtype=np.float64)
        self.angular_velocity = np.asarray(self.angular_velocity, dtype=np.float64)
        n = np.linalg.norm(self.orientation)
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {n} not within 1e-6 of 1")

    @property
    def heading(self) -> float:
        return yaw_of(self.orientation)

    @property
    def rpy(self) -> tuple[float, float, float]:
        return rpy_from_quat(self.orientation)

    def copy(self) -> "BaseState":
        return BaseState(
            self.position.copy(), self.orientation.copy(),
            self.linear_velocity.copy(), self.angular_velocity.copy(),
        )


@dataclass(frozen=True)
class LegFrames:
    """World-frame chain points per leg: mount, femur joint, tibia joint, foot."""

    points: np.ndarray  # (6, 4, 3)

    @property
    def feet(self) -> np.ndarray:
        return self.points[:, 3, :]

    @property
    def coxa_segments(self) -> np.ndarray:
        return self.points[:, 0:2, :]

    @property
    def femur_segments(self) -> np.ndarray:
        return self.points[:, 1:3, :]

    @property
    def tibia_segments(self) -> np.ndarray:
        return self.points[:, 2:4, :]


def reset_pose(
    geometry: RobotGeometry,
    x: float = 0.0,
    y: float = 0.0,
    yaw: float = 0.0,
    floor_height: float = 0.0,
) -> tuple[JointState, BaseState]:
    """Manufacturer-style resting pose: standing height above the local floor, zero velocities."""
    q = geometry.reset_angles
    joints = JointState(q, np.zeros(N_JOINTS), q.copy(), np.zeros(N_JOINTS))
    base = BaseState(
        np.array([x, y, floor_height + geometry.standing_height]),
        quat_from_rpy(0.0, 0.0, yaw),
        np.zeros(3),
        np.zeros(3),
    )
    return joints, base


def forward_kinematics(
    geometry: RobotGeometry, joints: JointState, base: BaseState
) -> LegFrames:
    """Serial-chain FK per leg: base frame -> coxa yaw -> femur pitch -> tibia pitch."""
    chain = np.empty((N_LEGS, 4, 3))
    _kernels.fk_chain(
        geometry.mounts,
        geometry.mount_yaw,
        geometry.link_lengths,
        joints.angles,
        base.position,
        quat_to_matrix(base.orientation),
        chain,
    )
    return LegFrames(chain)


def feet_body_frame(geometry: RobotGeometry, angles: np.ndarray) -> np.ndarray:
    """Foot positions in the base frame for a raw 18-angle vector."""
    chain = np.empty((N_LEGS, 4, 3))
    _kernels.fk_chain(
        geometry.mounts,
        geometry.mount_yaw,
        geometry.link_lengths,
        np.asarray(angles, dtype=np.float64),
        np.zeros(3),
        np.eye(3),
        chain,
    )
    return chain[:, 3, :]


def servo_step(
    geometry: RobotGeometry, joints: JointState, commanded: np.ndarray, dt: float
) -> JointState:
    """Rate-limited first-order tracking toward the clamped command.

    Angles never move more than max_servo_speed*dt per step and never
    leave the +/-120 degree range (commands are clamped first).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    commanded = np.asarray(commanded, dtype=np.float64)
    if commanded.shape != (N_JOINTS,):
        raise ValueError("command must have shape (18,)")
    targets = np.clip(commanded, -JOINT_LIMIT, JOINT_LIMIT)
    max_delta = geometry.max_servo_speed * dt
    delta = np.clip(targets - joints.angles, -max_delta, max_delta)
    angles = joints.angles + delta
    return JointState(
        angles=angles,
        velocities=delta / dt,
        targets=targets,
        prev_velocities=joints.velocities.copy(),
    )


def torque_proxy(geometry: RobotGeometry, joints: JointState) -> np.ndarray:
    """Position-error torque stand-in: kp * (target - angle), clamped to +/-tau_max.

    The physical robot exposes no torque feedback; this proxy exists
    only to drive the torque penalty term.
    """
    tau = geometry.servo_kp * (joints.targets - joints.angles)
    return np.clip(tau, -geometry.tau_max, geometry.tau_max)


_PROFILE_SCALARS = (
    "half_length", "half_width", "body_box_height",
    "coxa_length", "femur_length", "tibia_length",
    "reset_femur", "reset_tibia", "standing_height", "flat_height",
    "max_servo_speed", "servo_kp", "tau_max", "mass",
)


def save_geometry(geometry: RobotGeometry, path) -> None:
    data = {k: float(getattr(geometry, k)) for k in _PROFILE_SCALARS}
    data["mount_xy"] = [list(map(float, m)) for m in geometry.mount_xy]
    data["mount_yaw_deg"] = list(map(float, geometry.mount_yaw_deg))
    with open(path, "w") as f:
        yaml.safe_dump(data, f, sort_keys=True)


def load_geometry(path) -> RobotGeometry:
    with open(path) as f:
        data = yaml.safe_load(f)
    kwargs = {k: float(data[k]) for k in _PROFILE_SCALARS if k in data}
    if "mount_xy" in data:
        kwargs["mount_xy"] = tuple(tuple(m) for m in data["mount_xy"])
    if "mount_yaw_deg" in data:
        kwargs["mount_yaw_deg"] = tuple(data["mount_yaw_deg"])
    return RobotGeometry(**kwargs)
