"""Procedural generators for the four task terrains and their curriculum schedules.

Every generator is a pure function of (params, seed): feeding the same
arguments twice yields bit-identical fields. Fields follow the corridor
convention: x is the travel direction starting at 0, y is centered on
the corridor axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .heightmap import LayeredHeightField

DEG = math.pi / 180.0

# stair curriculum endpoints: risers grow 4.5 -> 18 cm while treads shrink 30 -> 18 cm
RISER_MIN, RISER_MAX = 0.045, 0.18
TREAD_MAX, TREAD_MIN = 0.30, 0.18

# tunnel clearance schedule, easiest to hardest
TUNNEL_CLEARANCES = (0.37, 0.35, 0.33, 0.31)

DEFAULT_CELL = 0.05
DEFAULT_WIDTH = 3.0


@dataclass(frozen=True)
class CurriculumLevel:
    level: int
    total_levels: int = 10

    def __post_init__(self):
        if self.total_levels < 1:
            raise ValueError("total_levels must be >= 1")
        if not 0 <= self.level <= self.total_levels:
            raise ValueError(f"level {self.level} outside [0, {self.total_levels}]")

    @property
    def fraction(self) -> float:
        return self.level / self.total_levels


@dataclass(frozen=True)
class StairParams:
    riser: float
    tread: float
    step_count: int = 8
    tread_jitter_fraction: float = 0.2
    landing_interval: int | None = None
    direction: str = "up"

    def __post_init__(self):
        if not RISER_MIN - 1e-12 <= self.riser <= RISER_MAX + 1e-12:
            raise ValueError(f"riser {self.riser} outside [{RISER_MIN}, {RISER_MAX}]")
        if not TREAD_MIN - 1e-12 <= self.tread <= TREAD_MAX + 1e-12:
            raise ValueError(f"tread {self.tread} outside [{TREAD_MIN}, {TREAD_MAX}]")
        if self.step_count < 1:
            raise ValueError("step_count must be >= 1")
        if self.direction not in ("up", "down"):
            raise ValueError("direction must be 'up' or 'down'")


@dataclass(frozen=True)
class ObstacleFieldParams:
    density: float = 0.3  # obstacles per square meter at full difficulty
    shape_set: tuple = (
        ("box", (0.2, 0.5), (0.25, 0.6)),
        ("cylinder", (0.1, 0.25), (0.25, 0.6)),
        ("polygon", (0.15, 0.3), (0.25, 0.6)),
    )
    corridor_halfwidth: float = 1.5
    corridor_length: float = 8.0
    min_spacing: float = 0.8
    spawn_clear: float = 1.5

    def __post_init__(self):
        if self.density < 0:
            raise ValueError("density must be nonnegative")
        for kind, size_range, height_range in self.shape_set:
            if kind not in ("box", "cylinder", "polygon"):
                raise ValueError(f"unknown footprint type {kind!r}")
            if min(size_range) <= 0 or min(height_range) <= 0:
                raise ValueError("size and height ranges must be positive")
        if self.min_spacing <= 0 or self.corridor_halfwidth <= 0:
            raise ValueError("spacing and halfwidth must be positive")


@dataclass(frozen=True)
class TunnelParams:
    clearance: float
    tunnel_length: float = 1.2
    obstacle_thickness: float = 0.1
    obstacle_width: float = 3.0
    approach_distance: float = 1.5
    num_slabs: int = 1
    slab_gap: float = 1.5

    def __post_init__(self):
        if not TUNNEL_CLEARANCES[-1] - 1e-12 <= self.clearance <= TUNNEL_CLEARANCES[0] + 1e-12:
            raise ValueError(
                f"clearance {self.clearance} outside [{TUNNEL_CLEARANCES[-1]}, {TUNNEL_CLEARANCES[0]}]"
            )
        if self.tunnel_length <= 0:
            raise ValueError("tunnel_length must be positive")
        if self.num_slabs < 1:
            raise ValueError("num_slabs must be >= 1")


@dataclass(frozen=True)
class TerrainLayout:
    """Landmarks the episode engine needs: spawn point, goal line, feature extents."""

    spawn_x: float
    goal_x: float
    feature_start_x: float
    feature_end_x: float
    corridor_halfwidth: float
    step_far_edges: tuple = ()
    slab_spans: tuple = ()  # (start_x, end_x) per ceiling slab
    obstacle_xy: tuple = ()


def stair_params_for_level(lvl: CurriculumLevel) -> StairParams:
    """Linear schedule between the published endpoints: (0.045, 0.30) -> (0.18, 0.18)."""
    t = lvl.fraction
    riser = RISER_MIN + (RISER_MAX - RISER_MIN) * t
    tread = TREAD_MAX - (TREAD_MAX - TREAD_MIN) * t
    return StairParams(riser=riser, tread=tread)


def obstacle_density_for_level(lvl: CurriculumLevel, density_final: float) -> float:
    """(2 * level / total_levels) * density_final, exactly as printed.

    Level 0 gives an obstacle-free walking stage; the top level gives
    twice density_final (the formula as published; pass cap=True on
    generate_obstacle_field callers that want density_final as a cap).
    """
    return (2.0 * lvl.level / lvl.total_levels) * density_final


def tunnel_clearance_for_level(lvl: CurriculumLevel) -> float:
    """Clearance schedule 37 -> 35 -> 33 -> 31 cm across the level range."""
    idx = min(len(TUNNEL_CLEARANCES) - 1, (len(TUNNEL_CLEARANCES) * lvl.level) // lvl.total_levels)
    return TUNNEL_CLEARANCES[idx]


def _corridor_grid(length: float, width: float, cell: float):
    rows = int(round(length / cell)) + 1
    cols = int(round(width / cell)) + 1
    origin = (0.0, -(cols - 1) * cell / 2)
    return rows, cols, origin


def _x_to_row(x: float, cell: float) -> int:
    # first row whose cell center is >= x
    return int(math.ceil(x / cell - 1e-9))


def generate_stairs(
    params: StairParams,
    seed: int,
    width: float = DEFAULT_WIDTH,
    cell_size: float = DEFAULT_CELL,
    approach: float = 2.0,
    exit_length: float = 2.0,
) -> LayeredHeightField:
    field, _ = generate_stairs_with_layout(
        params, seed, width=width, cell_size=cell_size, approach=approach,
        exit_length=exit_length,
    )
    return field


def generate_stairs_with_layout(
    params: StairParams,
    seed: int,
    width: float = DEFAULT_WIDTH,
    cell_size: float = DEFAULT_CELL,
    approach: float = 2.0,
    exit_length: float = 2.0,
    landing_depth: float = 1.0,
):
    """Flat approach, then step_count steps with seeded tread jitter.

    Cumulative height after k steps is exactly k * riser; jitter only
    perturbs tread depths. 'down' starts elevated and descends.
    """
    rng = np.random.default_rng(seed)
    treads = []
    edges = [approach]
    x = approach
    for k in range(params.step_count):
        u = rng.uniform(-params.tread_jitter_fraction, params.tread_jitter_fraction)
        tread = params.tread * (1.0 + u)
        treads.append(tread)
        x += tread
        edges.append(x)
        if (
            params.landing_interval
            and (k + 1) % params.landing_interval == 0
            and k + 1 < params.step_count
        ):
            x += landing_depth
            edges[-1] = x  # the landing extends the step's plateau
    total_rise = params.step_count * params.riser
    length = x + exit_length
    rows, cols, origin = _corridor_grid(length, width, cell_size)
    floor = np.zeros((rows, cols))
    going_up = params.direction == "up"
    if not going_up:
        floor[:] = total_rise
    # each step k raises (or lowers) the floor from its leading edge onward
    for k in range(params.step_count):
        r = _x_to_row(edges[k], cell_size)
        h = (k + 1) * params.riser
        floor[r:, :] = h if going_up else total_rise - h
    field = LayeredHeightField(rows, cols, cell_size, origin, floor)
    layout = TerrainLayout(
        spawn_x=approach / 2,
        goal_x=edges[-1],
        feature_start_x=approach,
        feature_end_x=edges[-1],
        corridor_halfwidth=width / 2,
        step_far_edges=tuple(edges[1:]),
    )
    return field, layout


def generate_obstacle_field(
    params: ObstacleFieldParams,
    density: float,
    seed: int,
    cell_size: float = DEFAULT_CELL,
) -> LayeredHeightField:
    field, _ = generate_obstacle_field_with_layout(params, density, seed, cell_size)
    return field


def generate_obstacle_field_with_layout(
    params: ObstacleFieldParams,
    density: float,
    seed: int,
    cell_size: float = DEFAULT_CELL,
):
    """Poisson-disk (dart throwing) obstacle placement at the given density.

    Exactly round(density * placement area) obstacles are placed, at
    least min_spacing apart, never inside the spawn clear zone. Raises
    ValueError when the requested density exceeds what dart throwing can
    reliably pack at that spacing.
    """
    if density < 0:
        raise ValueError("density must be nonnegative")
    length = params.corridor_length
    width = 2 * params.corridor_halfwidth
    x_lo = params.spawn_clear
    x_hi = length - 0.5
    area = max(0.0, (x_hi - x_lo)) * width
    count = int(round(density * area))
    # hexagonal packing bound at min_spacing, derated for dart throwing
    max_count = int(0.5 * (2 / math.sqrt(3)) * area / params.min_spacing**2)
    if count > max_count:
        raise ValueError(
            f"requested density {density}/m^2 needs {count} obstacles but spacing "
            f"{params.min_spacing} m supports at most {max_count} in {area:.1f} m^2"
        )
    rng = np.random.default_rng(seed)
    rows, cols, origin = _corridor_grid(length, width, cell_size)
    floor = np.zeros((rows, cols))
    placed: list[tuple[float, float]] = []
    attempts = 0
    limit = 1000 * max(count, 1)
    while len(placed) < count:
        if attempts >= limit:
            raise ValueError(
                f"could not place {count} obstacles with spacing {params.min_spacing} m "
                f"after {limit} attempts (density {density}/m^2 infeasible)"
            )
        attempts += 1
        x = rng.uniform(x_lo, x_hi)
        y = rng.uniform(-params.corridor_halfwidth, params.corridor_halfwidth)
        ok = True
        for px, py in placed:
            if (x - px) ** 2 + (y - py) ** 2 < params.min_spacing**2:
                ok = False
                break
        if ok:
            placed.append((x, y))
    ox, oy = origin
    for x, y in placed:
        kind, size_range, height_range = params.shape_set[
            rng.integers(len(params.shape_set))
        ]
        size = rng.uniform(*size_range)
        height = rng.uniform(*height_range)
        _rasterize_obstacle(floor, cell_size, ox, oy, kind, x, y, size, height, rng)
    field = LayeredHeightField(rows, cols, cell_size, origin, floor)
    last_x = max((x for x, _ in placed), default=params.spawn_clear)
    layout = TerrainLayout(
        spawn_x=params.spawn_clear / 2,
        goal_x=min(last_x + 1.0, length - 0.5),
        feature_start_x=x_lo,
        feature_end_x=last_x,
        corridor_halfwidth=params.corridor_halfwidth,
        obstacle_xy=tuple(placed),
    )
    return field, layout


def _rasterize_obstacle(floor, cell, ox, oy, kind, x, y, size, height, rng):
    """Stamp one footprint onto the floor grid (max with existing heights)."""
    half = size / 2
    if kind == "polygon":
        k = int(rng.integers(5, 9))
        angles = np.sort(rng.uniform(0, 2 * math.pi, size=k))
        radii = rng.uniform(0.6 * half, half, size=k)
        verts = np.stack([x + radii * np.cos(angles), y + radii * np.sin(angles)], axis=1)
    elif kind == "box":
        yaw = rng.uniform(0, math.pi)
        c, s = math.cos(yaw), math.sin(yaw)
        hx = half
        hy = half * rng.uniform(0.6, 1.0)
        verts = np.array(
            [
                (x + c * dx - s * dy, y + s * dx + c * dy)
                for dx, dy in ((-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy))
            ]
        )
    else:
        verts = None
    i_lo = max(0, int((x - half - ox) / cell))
    i_hi = min(floor.shape[0] - 1, int((x + half - ox) / cell) + 1)
    j_lo = max(0, int((y - half - oy) / cell))
    j_hi = min(floor.shape[1] - 1, int((y + half - oy) / cell) + 1)
    for i in range(i_lo, i_hi + 1):
        cx = ox + i * cell
        for j in range(j_lo, j_hi + 1):
            cy = oy + j * cell
            if kind == "cylinder":
                inside = (cx - x) ** 2 + (cy - y) ** 2 <= half**2
            else:
                inside = _point_in_polygon(cx, cy, verts)
            if inside and height > floor[i, j]:
                floor[i, j] = height


def _point_in_polygon(px, py, verts) -> bool:
    inside = False
    n = len(verts)
    for a in range(n):
        x1, y1 = verts[a]
        x2, y2 = verts[(a + 1) % n]
        if (y1 > py) != (y2 > py):
            t = (py - y1) / (y2 - y1)
            if px < x1 + t * (x2 - x1):
                inside = not inside
    return inside


def generate_tunnel(
    params: TunnelParams,
    seed: int,
    width: float = DEFAULT_WIDTH,
    cell_size: float = DEFAULT_CELL,
    randomize: bool = False,
    exit_length: float = 2.0,
) -> LayeredHeightField:
    field, _ = generate_tunnel_with_layout(
        params, seed, width=width, cell_size=cell_size, randomize=randomize,
        exit_length=exit_length,
    )
    return field


def generate_tunnel_with_layout(
    params: TunnelParams,
    seed: int,
    width: float = DEFAULT_WIDTH,
    cell_size: float = DEFAULT_CELL,
    randomize: bool = False,
    exit_length: float = 2.0,
):
    """Flat floor with floating ceiling slab(s) at the given clearance.

    The slab band along the travel direction spans [approach_distance,
    approach_distance + tunnel_length]. With randomize=True the approach
    distance, slab length, and slab width are drawn from seeded ranges
    (they do not reflect difficulty); the clearance is never randomized
    here -- it is the curriculum variable.
    """
    rng = np.random.default_rng(seed)
    approach = params.approach_distance
    band = params.tunnel_length
    slab_width = min(params.obstacle_width, width)
    if randomize:
        approach = rng.uniform(1.0, 2.5)
        band = rng.uniform(0.6, 1.5)
        slab_width = rng.uniform(1.5, width)
    spans = []
    x0 = approach
    for _ in range(params.num_slabs):
        spans.append((x0, x0 + band))
        x0 += band + params.slab_gap
    length = spans[-1][1] + exit_length
    rows, cols, origin = _corridor_grid(length, width, cell_size)
    floor = np.zeros((rows, cols))
    ceiling = np.full((rows, cols), np.nan)
    ox, oy = origin
    j_lo = max(0, int(round((-slab_width / 2 - oy) / cell_size)))
    j_hi = min(cols - 1, int(round((slab_width / 2 - oy) / cell_size)))
    for sx0, sx1 in spans:
        r0 = _x_to_row(sx0, cell_size)
        r1 = _x_to_row(sx1, cell_size)  # exclusive: cells with center in [sx0, sx1)
        ceiling[r0:r1, j_lo : j_hi + 1] = params.clearance
    field = LayeredHeightField(rows, cols, cell_size, origin, floor, ceiling)
    layout = TerrainLayout(
        spawn_x=approach / 2,
        goal_x=spans[-1][1] + 0.5,
        feature_start_x=spans[0][0],
        feature_end_x=spans[-1][1],
        corridor_halfwidth=width / 2,
        slab_spans=tuple(spans),
    )
    return field, layout


def generate_joists(
    spacing: float,
    joist_height: float,
    joist_width: float,
    seed: int,
    length: float = 8.0,
    width: float = DEFAULT_WIDTH,
    cell_size: float = DEFAULT_CELL,
    start: float = 1.5,
) -> LayeredHeightField:
    field, _ = generate_joists_with_layout(
        spacing, joist_height, joist_width, seed,
        length=length, width=width, cell_size=cell_size, start=start,
    )
    return field


def generate_joists_with_layout(
    spacing: float,
    joist_height: float,
    joist_width: float,
    seed: int,
    length: float = 8.0,
    width: float = DEFAULT_WIDTH,
    cell_size: float = DEFAULT_CELL,
    start: float = 1.5,
):
    """Periodic raised ridges perpendicular to the travel direction."""
    if spacing <= 0 or joist_width <= 0 or joist_height < 0:
        raise ValueError("joist dimensions must be positive")
    rows, cols, origin = _corridor_grid(length, width, cell_size)
    floor = np.zeros((rows, cols))
    x = start
    last = start
    while x < length - 0.5:
        r0 = _x_to_row(x, cell_size)
        r1 = _x_to_row(x + joist_width, cell_size)
        floor[r0:r1, :] = joist_height
        last = x + joist_width
        x += spacing
    field = LayeredHeightField(rows, cols, cell_size, origin, floor)
    layout = TerrainLayout(
        spawn_x=start / 2,
        goal_x=min(last + 1.0, length - 0.5),
        feature_start_x=start,
        feature_end_x=last,
        corridor_halfwidth=width / 2,
    )
    return field, layout
