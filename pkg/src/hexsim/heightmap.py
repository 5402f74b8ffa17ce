"""Layered height-field storage, sampling, and robot-relative patch extraction.

The height field is the single geometric substrate: terrain generators
write it, the contact model and rewards sample it, and the depth camera
raycasts against it. Fields are immutable after construction and safe to
share across environment workers.

Grid convention: ``floor[i, j]`` is the height of the cell centered at
``(origin_x + i*cell_size, origin_y + j*cell_size)`` -- rows run along
world x (the travel direction), columns along world y. An optional
ceiling layer stores the underside height of overhead obstacles, with
NaN marking cells that have no ceiling.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

HXM_MAGIC = b"HXHM"
HXM_VERSION = 1

FLOOR_ONLY = "floor-only"
SQUEEZE_COMPOSITE = "squeeze-composite"


@dataclass(frozen=True)
class LayeredHeightField:
    """Floor heights plus an optional ceiling layer on a regular grid."""

    rows: int
    cols: int
    cell_size: float
    origin: tuple[float, float]
    floor: np.ndarray
    ceiling: np.ndarray | None = None

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must be at least 1x1")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        floor = np.ascontiguousarray(self.floor, dtype=np.float64)
        if floor.shape != (self.rows, self.cols):
            raise ValueError(f"floor shape {floor.shape} != ({self.rows}, {self.cols})")
        if not np.all(np.isfinite(floor)):
            raise ValueError("floor heights must be finite")
        floor.flags.writeable = False
        object.__setattr__(self, "floor", floor)
        if self.ceiling is not None:
            ceil = np.ascontiguousarray(self.ceiling, dtype=np.float64)
            if ceil.shape != (self.rows, self.cols):
                raise ValueError("ceiling shape mismatch")
            present = ~np.isnan(ceil)
            if np.any(ceil[present] <= floor[present]):
                raise ValueError("ceiling must lie strictly above the floor")
            ceil.flags.writeable = False
            object.__setattr__(self, "ceiling", ceil)

    @property
    def extent(self) -> tuple[float, float]:
        """(x length, y length) of the grid in meters, center to center."""
        return (self.rows - 1) * self.cell_size, (self.cols - 1) * self.cell_size

    def has_ceiling(self) -> bool:
        return self.ceiling is not None


def flat_field(
    rows: int,
    cols: int,
    cell_size: float = 0.05,
    height: float = 0.0,
    origin: tuple[float, float] = (0.0, 0.0),
) -> LayeredHeightField:
    """Uniform flat floor, no ceiling."""
    return LayeredHeightField(
        rows, cols, cell_size, origin, np.full((rows, cols), height, dtype=np.float64)
    )


@dataclass(frozen=True)
class PatchSpec:
    """Geometry of a robot-relative height-map patch.

    width is the lateral extent, length the forward extent, standoff the
    distance from the robot front to the patch's near edge.
    """

    width: float
    length: float
    standoff: float
    cell_size: float = 0.05

    def __post_init__(self):
        if self.width <= 0 or self.length <= 0 or self.cell_size <= 0:
            raise ValueError("width, length, cell_size must be positive")
        if self.standoff < 0:
            raise ValueError("standoff must be nonnegative")

    @property
    def m_rows(self) -> int:
        return int(round(self.length / self.cell_size))

    @property
    def n_cols(self) -> int:
        return int(round(self.width / self.cell_size))


@dataclass(frozen=True)
class HeightPatch:
    """Sampled patch: rows ordered far -> near, columns left -> right."""

    m_rows: int
    n_cols: int
    values: np.ndarray
    layer_tag: str = FLOOR_ONLY

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.m_rows, self.n_cols):
            raise ValueError("patch values shape mismatch")
        if not np.all(np.isfinite(vals)):
            raise ValueError("patch values must be finite")
        object.__setattr__(self, "values", vals)


def sample_floor(field: LayeredHeightField, x: float, y: float) -> float:
    """Bilinear floor height; out-of-grid queries clamp to the nearest edge cell."""
    ox, oy = field.origin
    return float(_kernels.bilinear_floor(field.floor, field.cell_size, ox, oy, x, y))


def sample_ceiling(field: LayeredHeightField, x: float, y: float) -> float | None:
    """Nearest-cell ceiling height, or None where the cell has no ceiling.

    Ceilings are piecewise-constant slabs, so no interpolation: that
    would invent sloped ceilings the generators never create.
    """
    if field.ceiling is None:
        return None
    ox, oy = field.origin
    v = _kernels.nearest_cell_value(field.ceiling, field.cell_size, ox, oy, x, y)
    return None if np.isnan(v) else float(v)


def extract_patch(
    field: LayeredHeightField,
    base_x: float,
    base_y: float,
    yaw: float,
    spec: PatchSpec,
    layer: str = FLOOR_ONLY,
    front_offset: float = 0.0,
) -> HeightPatch:
    """Sample a yaw-aligned patch ahead of the robot.

    The near edge sits `spec.standoff` ahead of the robot front
    (base + front_offset along heading). With layer="squeeze-composite"
    a cell takes the ceiling height where a ceiling is present and the
    floor height otherwise.
    """
    if layer not in (FLOOR_ONLY, SQUEEZE_COMPOSITE):
        raise ValueError(f"unknown patch layer {layer!r}")
    m, n = spec.m_rows, spec.n_cols
    out = np.empty((m, n), dtype=np.float64)
    ceiling = field.ceiling
    has_ceiling = ceiling is not None
    if ceiling is None:
        ceiling = _EMPTY_CEILING
    ox, oy = field.origin
    _kernels.extract_patch_core(
        field.floor,
        ceiling,
        has_ceiling,
        field.cell_size,
        ox,
        oy,
        base_x,
        base_y,
        yaw,
        front_offset,
        spec.standoff,
        spec.length,
        spec.width,
        spec.cell_size,
        layer == SQUEEZE_COMPOSITE,
        out,
    )
    return HeightPatch(m, n, out, layer_tag=layer)


_EMPTY_CEILING = np.full((1, 1), np.nan)


def save_hxm(field: LayeredHeightField, path) -> None:
    """Write the binary .hxm format (little-endian, NaN = absent ceiling)."""
    with open(path, "wb") as f:
        f.write(HXM_MAGIC)
        f.write(struct.pack("<II", HXM_VERSION, field.rows))
        f.write(struct.pack("<I", field.cols))
        ox, oy = field.origin
        f.write(struct.pack("<fff", field.cell_size, ox, oy))
        f.write(field.floor.astype("<f4").tobytes())
        if field.ceiling is None:
            f.write(struct.pack("<B", 0))
        else:
            f.write(struct.pack("<B", 1))
            f.write(field.ceiling.astype("<f4").tobytes())


def load_hxm(path) -> LayeredHeightField:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != HXM_MAGIC:
            raise ValueError(f"not a .hxm file (magic {magic!r})")
        version, rows, cols = struct.unpack("<III", f.read(12))
        if version != HXM_VERSION:
            raise ValueError(f"unsupported .hxm version {version}")
        cell_size, ox, oy = struct.unpack("<fff", f.read(12))
        n = rows * cols
        floor = np.frombuffer(f.read(4 * n), dtype="<f4").reshape(rows, cols)
        (has_ceiling,) = struct.unpack("<B", f.read(1))
        ceiling = None
        if has_ceiling:
            ceiling = np.frombuffer(f.read(4 * n), dtype="<f4").reshape(rows, cols)
            ceiling = ceiling.astype(np.float64)
    return LayeredHeightField(
        rows, cols, float(cell_size), (float(ox), float(oy)),
        floor.astype(np.float64), ceiling,
    )
