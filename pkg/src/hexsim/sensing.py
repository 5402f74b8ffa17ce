"""Observation synthesis: raycast depth camera, pose sensing, and the
teacher/student observation bundles.

The depth camera renders the layered height field directly: terrain
columns are piecewise-constant, so height discontinuities appear as the
vertical walls a box-like obstacle would present, and ceiling cells
render their underside. Rendering is exact (analytic intersections per
grid column) and deterministic.

The camera pitch follows the body: the effective downward tilt is the
configured tilt plus the base pitch, quantized to 1/4 degree so the
per-pixel fan tables can be cached. Body roll is not applied to the
image (rolls are brief transients in the quasi-static backend).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .heightmap import (
    FLOOR_ONLY,
    SQUEEZE_COMPOSITE,
    HeightPatch,
    LayeredHeightField,
    PatchSpec,
)
from .robot import BaseState, JointState
from .rotations import normalize_quat, quat_from_axis_angle, quat_multiply, quat_to_matrix

DEPTH_WIDTH = 320
DEPTH_HEIGHT = 240

_TILT_BUCKET = math.radians(0.25)
_EMPTY_CEILING = np.full((1, 1), np.nan)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole depth camera: 320x240, horizontal FOV, downward tilt."""

    hfov: float = math.radians(70.0)
    tilt: float = 0.0
    mount_offset: tuple = (0.15, 0.0, -0.02)
    near: float = 0.1
    far: float = 4.0
    width: int = DEPTH_WIDTH
    height: int = DEPTH_HEIGHT
    n_fans: int = 640

    def __post_init__(self):
        if self.width != DEPTH_WIDTH or self.height != DEPTH_HEIGHT:
            raise ValueError("depth image size is fixed at 320x240")
        if not 0 < self.near < self.far:
            raise ValueError("need 0 < near < far")


class _FanMap:
    """Per-(camera, tilt) pixel tables: azimuth bins sorted by elevation."""

    def __init__(self, cam: CameraModel, tilt: float):
        w, h = cam.width, cam.height
        f = (w / 2) / math.tan(cam.hfov / 2)
        xu = (np.arange(w) + 0.5 - w / 2) / f
        yv = (np.arange(h) + 0.5 - h / 2) / f
        ct, st = math.cos(tilt), math.sin(tilt)
        hx = ct - yv[:, None] * st  # horizontal-forward component, per row
        hy = -xu[None, :]  # horizontal-left component, per column
        dz = -yv[:, None] * ct - st
        hx = np.broadcast_to(hx, (h, w))
        hy = np.broadcast_to(hy, (h, w))
        dz = np.broadcast_to(dz, (h, w))
        horiz = np.hypot(hx, hy)
        alpha = np.arctan2(hy, hx).ravel()
        elev = (dz / horiz).ravel()
        scale = (np.sqrt(horiz**2 + dz**2) / horiz).ravel()
        self.a_min = float(alpha.min())
        a_max = float(alpha.max())
        self.da = (a_max - self.a_min) / cam.n_fans or 1.0
        bins = np.clip(((alpha - self.a_min) / self.da).astype(np.int64), 0, cam.n_fans - 1)
        order = np.lexsort((elev, bins))
        self.pix_idx = order.astype(np.int64)
        self.pix_e = np.ascontiguousarray(elev[order])
        self.pix_scale = np.ascontiguousarray(scale[order])
        self.fan_start = np.searchsorted(bins[order], np.arange(cam.n_fans + 1)).astype(np.int64)
        self.n_fans = cam.n_fans


_FAN_CACHE: dict[tuple, _FanMap] = {}
_FAN_CACHE_LIMIT = 32


def _fan_map(cam: CameraModel, tilt_eff: float) -> _FanMap:
    bucket = round(tilt_eff / _TILT_BUCKET)
    key = (cam.hfov, cam.n_fans, bucket)
    fm = _FAN_CACHE.get(key)
    if fm is None:
        fm = _FanMap(cam, bucket * _TILT_BUCKET)
        if len(_FAN_CACHE) >= _FAN_CACHE_LIMIT:
            _FAN_CACHE.pop(next(iter(_FAN_CACHE)))
        _FAN_CACHE[key] = fm
    return fm


def render_depth(
    camera: CameraModel, base: BaseState, field: LayeredHeightField
) -> np.ndarray:
    """Per-pixel ray depths (meters, range along the ray), shape (240, 320).

    Nearest intersection with the floor surface, vertical walls at
    height discontinuities, or a ceiling underside; misses return the
    far value and everything is clamped to [near, far].
    """
    roll, pitch, yaw = base.rpy
    fm = _fan_map(camera, camera.tilt + pitch)
    rot = quat_to_matrix(base.orientation)
    origin = base.position + rot @ np.asarray(camera.mount_offset, dtype=np.float64)
    out = np.full(camera.height * camera.width, camera.far, dtype=np.float64)
    ceiling = field.ceiling if field.ceiling is not None else _EMPTY_CEILING
    ox, oy = field.origin
    _kernels.render_fans(
        field.floor,
        ceiling,
        field.ceiling is not None,
        field.cell_size,
        ox,
        oy,
        origin[0],
        origin[1],
        origin[2],
        yaw,
        fm.a_min,
        fm.da,
        fm.n_fans,
        fm.fan_start,
        fm.pix_idx,
        fm.pix_e,
        fm.pix_scale,
        camera.near,
        camera.far,
        out,
    )
    return out.reshape(camera.height, camera.width)


@dataclass(frozen=True)
class PoseNoise:
    """Zero-mean Gaussian position noise and small-angle orientation noise."""

    sigma_pos: float = 0.0
    sigma_rot: float = 0.0


def sense_pose(
    base: BaseState,
    noise: PoseNoise | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(position, unit quaternion) as the tracking camera would report them."""
    position = base.position.copy()
    orientation = base.orientation.copy()
    if noise is not None and (noise.sigma_pos > 0 or noise.sigma_rot > 0):
        if rng is None:
            raise ValueError("pose noise requires an RNG")
        if noise.sigma_pos > 0:
            position = position + rng.normal(0.0, noise.sigma_pos, size=3)
        if noise.sigma_rot > 0:
            axis = rng.normal(0.0, 1.0, size=3)
            n = np.linalg.norm(axis)
            if n > 0:
                angle = rng.normal(0.0, noise.sigma_rot)
                orientation = normalize_quat(
                    quat_multiply(quat_from_axis_angle(axis / n, angle), orientation)
                )
    return position, orientation


@dataclass
class TeacherObservation:
    """Privileged bundle: terrain patch plus full proprioception."""

    patch: HeightPatch
    joint_angles: np.ndarray
    joint_velocities: np.ndarray
    base_summary: np.ndarray  # position 3, quaternion 4, linear vel 3, angular vel 3
    last_action: np.ndarray

    def proprio_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.joint_angles, self.joint_velocities, self.base_summary, self.last_action]
        )


@dataclass
class StudentObservation:
    """Onboard bundle: egocentric depth image plus sensed pose."""

    depth: np.ndarray  # (240, 320) meters
    position: np.ndarray
    orientation: np.ndarray
    last_action: np.ndarray

    def pose_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.orientation])


@dataclass(frozen=True)
class TaskSensorConfig:
    """Camera tilt and privileged patch geometry for one task."""

    task: str
    camera: CameraModel
    patch_spec: PatchSpec
    patch_layer: str


# camera angle / height-map size (width x length) / location per task
_TASK_SENSORS = {
    "joist": (30.0, 0.6, 0.8, 0.3, FLOOR_ONLY),
    "stairs": (30.0, 0.6, 0.8, 0.3, FLOOR_ONLY),
    "avoidance": (30.0, 0.6, 1.0, 0.6, FLOOR_ONLY),
    "squeeze": (0.0, 0.6, 0.8, 0.0, SQUEEZE_COMPOSITE),
    "flat": (30.0, 0.6, 0.8, 0.3, FLOOR_ONLY),
}


def sensor_config_for_task(task: str, patch_cell: float = 0.05) -> TaskSensorConfig:
    if task not in _TASK_SENSORS:
        raise ValueError(f"unknown task {task!r}; expected one of {sorted(_TASK_SENSORS)}")
    tilt_deg, width, length, standoff, layer = _TASK_SENSORS[task]
    return TaskSensorConfig(
        task=task,
        camera=CameraModel(tilt=math.radians(tilt_deg)),
        patch_spec=PatchSpec(width=width, length=length, standoff=standoff, cell_size=patch_cell),
        patch_layer=layer,
    )


def assemble_teacher(
    patch: HeightPatch,
    joints: JointState,
    base: BaseState,
    last_action: np.ndarray,
) -> TeacherObservation:
    """Pack the privileged observation in the documented field order."""
    summary = np.concatenate(
        [base.position, base.orientation, base.linear_velocity, base.angular_velocity]
    )
    return TeacherObservation(
        patch=patch,
        joint_angles=joints.angles.copy(),
        joint_velocities=joints.velocities.copy(),
        base_summary=summary,
        last_action=np.asarray(last_action, dtype=np.float64).copy(),
    )


def assemble_student(
    depth: np.ndarray,
    position: np.ndarray,
    orientation: np.ndarray,
    last_action: np.ndarray,
) -> StudentObservation:
    if depth.shape != (DEPTH_HEIGHT, DEPTH_WIDTH):
        raise ValueError(f"depth image must be {DEPTH_HEIGHT}x{DEPTH_WIDTH}")
    return StudentObservation(
        depth=depth,
        position=np.asarray(position, dtype=np.float64).copy(),
        orientation=np.asarray(orientation, dtype=np.float64).copy(),
        last_action=np.asarray(last_action, dtype=np.float64).copy(),
    )


def write_pgm(depth: np.ndarray, path) -> None:
    """16-bit PGM in millimeters (big-endian samples, per the PGM spec)."""
    mm = np.clip(np.round(depth * 1000.0), 0, 65535).astype(">u2")
    with open(path, "wb") as f:
        f.write(f"P5\n{depth.shape[1]} {depth.shape[0]}\n65535\n".encode())
        f.write(mm.tobytes())


def read_pgm(path) -> np.ndarray:
    """Inverse of write_pgm, returning meters."""
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"P5":
            raise ValueError("not a binary PGM file")
        dims = f.readline().split()
        width, height = int(dims[0]), int(dims[1])
        maxval = int(f.readline())
        if maxval != 65535:
            raise ValueError("expected 16-bit PGM")
        data = np.frombuffer(f.read(width * height * 2), dtype=">u2")
    return data.reshape(height, width).astype(np.float64) / 1000.0
