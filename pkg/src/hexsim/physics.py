"""Quasi-static contact backend.

Instead of inertial dynamics, each step resolves the base pose from the
supporting feet: contacting feet are seated on the floor by a
least-squares (height, roll, pitch) fit, the body weight is split
equally among them, and planar base motion is derived from how stance
feet sweep relative to the body. The model is fully deterministic,
which makes every downstream reward and acceptance test exact.

Collisions are geometric: any coxa, femur, or body-box point
penetrating the floor or a ceiling cell by more than 2 mm raises the
corresponding illegal-contact flag (the published collision rule uses a
contact-force threshold; without force dynamics, penetration depth is
the analogue).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .heightmap import LayeredHeightField
from .robot import BaseState, JointState, RobotGeometry, forward_kinematics
from .rotations import (
    normalize_quat,
    quat_from_axis_angle,
    quat_from_rpy,
    quat_multiply,
    quat_to_matrix,
    rpy_from_quat,
)

GRAVITY = 9.81
CONTACT_TOL = 0.005  # feet within 5 mm of the floor count as contacting
PENETRATION_THRESHOLD = 0.002  # illegal contact beyond 2 mm of overlap
SETTLE_ITERATIONS = 3
TIP_RATE = 2.5  # rad/s applied while statically unstable
STABILITY_MARGIN = 0.01

_LINK_CLASSES = ("coxa", "femur", "base")
_EMPTY_CEILING = np.full((1, 1), np.nan)


@dataclass
class ContactReport:
    """Per-step contact summary consumed by rewards and termination."""

    contact: np.ndarray  # (6,) bool
    forces: np.ndarray  # (6,) N, equal share of body weight per stance foot
    penetrations: np.ndarray  # (6,) m, residual foot penetration after settling
    illegal_floor: np.ndarray  # (3,) bool: coxa, femur, base
    illegal_ceiling: np.ndarray  # (3,) bool: coxa, femur, base
    feet: np.ndarray  # (6, 3) world foot positions
    foot_floor: np.ndarray  # (6,) floor height under each foot
    unsupported: bool

    @property
    def num_contacts(self) -> int:
        return int(self.contact.sum())

    @property
    def any_illegal(self) -> bool:
        return bool(self.illegal_floor.any() or self.illegal_ceiling.any())

    @property
    def foot_clearances(self) -> np.ndarray:
        """Foot heights above the local floor (the end-effector reward input)."""
        return self.feet[:, 2] - self.foot_floor


def resolve_contacts(
    geometry: RobotGeometry,
    joints: JointState,
    base: BaseState,
    field: LayeredHeightField,
) -> tuple[BaseState, ContactReport]:
    """Seat the base on its supporting feet and report contact state.

    Feet at or below the local floor (within 5 mm) contact; the base
    height/roll/pitch are adjusted so contacting feet sit on the
    surface. Body weight is split equally among contacts. Fewer than
    three contacts marks the state unsupported.
    """
    roll, pitch, yaw = rpy_from_quat(base.orientation)
    ox, oy = field.origin
    chain = np.empty((6, 4, 3))
    contact = np.zeros(6, dtype=np.bool_)
    gaps = np.empty(6)
    z, roll, pitch = _kernels.settle_base(
        geometry.mounts,
        geometry.mount_yaw,
        geometry.link_lengths,
        joints.angles,
        base.position,
        roll,
        pitch,
        yaw,
        field.floor,
        field.cell_size,
        ox,
        oy,
        CONTACT_TOL,
        SETTLE_ITERATIONS,
        chain,
        contact,
        gaps,
    )
    position = base.position.copy()
    position[2] = z
    orientation = quat_from_rpy(roll, pitch, yaw)
    new_base = BaseState(position, orientation, base.linear_velocity.copy(),
                         base.angular_velocity.copy())

    ncon = int(contact.sum())
    forces = np.zeros(6)
    if ncon > 0:
        forces[contact] = geometry.weight / ncon

    flags = np.zeros(6, dtype=np.bool_)
    ceiling = field.ceiling if field.ceiling is not None else _EMPTY_CEILING
    _kernels.collision_flags(
        chain,
        position,
        quat_to_matrix(orientation),
        geometry.half_length,
        geometry.half_width,
        geometry.body_box_height,
        field.floor,
        ceiling,
        field.ceiling is not None,
        field.cell_size,
        ox,
        oy,
        PENETRATION_THRESHOLD,
        flags,
    )
    foot_floor = chain[:, 3, 2] - gaps
    report = ContactReport(
        contact=contact.copy(),
        forces=forces,
        penetrations=np.maximum(0.0, -gaps),
        illegal_floor=flags[:3].copy(),
        illegal_ceiling=flags[3:].copy(),
        feet=chain[:, 3, :].copy(),
        foot_floor=foot_floor,
        unsupported=ncon < 3,
    )
    return new_base, report


def advance(
    geometry: RobotGeometry,
    base: BaseState,
    joints: JointState,
    contacts: ContactReport,
    dt: float,
) -> BaseState:
    """Integrate base motion for one control interval.

    Supported: planar velocity and yaw rate come from the stance-foot
    sweep (stance feet push the body); a statically unstable support
    polygon tips the base toward the overhang. Unsupported: gravity
    accumulates vertical velocity.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    position = base.position.copy()
    orientation = base.orientation.copy()
    lin_vel = np.zeros(3)
    ang_vel = np.zeros(3)
    ncon = contacts.num_contacts

    if ncon == 0:
        vz = base.linear_velocity[2] - GRAVITY * dt
        position[2] += vz * dt
        lin_vel[2] = vz
        return BaseState(position, orientation, lin_vel, ang_vel)

    if ncon >= 3:
        q_prev = joints.angles - joints.velocities * dt
        vbx, vby, omega = _kernels.stance_motion(
            geometry.mounts,
            geometry.mount_yaw,
            geometry.link_lengths,
            joints.angles,
            q_prev,
            contacts.contact,
            dt,
        )
        _, _, yaw = rpy_from_quat(orientation)
        c, s = math.cos(yaw), math.sin(yaw)
        vwx = c * vbx - s * vby
        vwy = s * vbx + c * vby
        position[0] += vwx * dt
        position[1] += vwy * dt
        lin_vel[0] = vwx
        lin_vel[1] = vwy
        ang_vel[2] = omega
        if omega != 0.0:
            orientation = quat_multiply(
                quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), omega * dt), orientation
            )
    else:
        # partial support still falls (the spec's unsupported rule)
        vz = base.linear_velocity[2] - GRAVITY * dt
        position[2] += vz * dt
        lin_vel[2] = vz

    unstable, dx, dy, cx, cy, cz = _kernels.support_instability(
        contacts.feet, contacts.contact, position[0], position[1], STABILITY_MARGIN
    )
    if unstable:
        # statically unstable: rotate the body about the nearest support
        # edge (axis chosen so the top tips toward the COM overhang)
        angle = TIP_RATE * dt
        axis = np.array([-dy, dx, 0.0])
        q_tip = quat_from_axis_angle(axis, angle)
        orientation = quat_multiply(q_tip, orientation)
        pivot = np.array([cx, cy, cz])
        rel = position - pivot
        rot = quat_to_matrix(q_tip)
        position = pivot + rot @ rel

    return BaseState(position, normalize_quat(orientation), lin_vel, ang_vel)


def base_height_above_floor(base: BaseState, field: LayeredHeightField) -> float:
    """b: vertical distance from the base origin to the floor directly beneath it."""
    ox, oy = field.origin
    h = _kernels.bilinear_floor(field.floor, field.cell_size, ox, oy,
                                base.position[0], base.position[1])
    return float(base.position[2] - h)
