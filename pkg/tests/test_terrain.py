import math

import numpy as np
import pytest

from hexsim.heightmap import sample_ceiling, sample_floor
from hexsim.terrain import (
    TUNNEL_CLEARANCES,
    CurriculumLevel,
    ObstacleFieldParams,
    StairParams,
    TunnelParams,
    generate_joists,
    generate_obstacle_field,
    generate_obstacle_field_with_layout,
    generate_stairs,
    generate_stairs_with_layout,
    generate_tunnel,
    generate_tunnel_with_layout,
    obstacle_density_for_level,
    stair_params_for_level,
    tunnel_clearance_for_level,
)


def test_curriculum_level_validation():
    with pytest.raises(ValueError):
        CurriculumLevel(-1, 10)
    with pytest.raises(ValueError):
        CurriculumLevel(11, 10)
    with pytest.raises(ValueError):
        CurriculumLevel(0, 0)


def test_stair_params_endpoints():
    lo = stair_params_for_level(CurriculumLevel(0, 10))
    assert lo.riser == 0.045
    assert lo.tread == 0.30
    hi = stair_params_for_level(CurriculumLevel(10, 10))
    assert hi.riser == 0.18
    assert hi.tread == 0.18


def test_stair_params_midpoint():
    mid = stair_params_for_level(CurriculumLevel(5, 10))
    assert mid.riser == pytest.approx(0.1125, abs=1e-15)
    assert mid.tread == pytest.approx(0.24, abs=1e-15)


def test_stairs_centerline_plateaus():
    params = StairParams(riser=0.1, tread=0.30, step_count=3, tread_jitter_fraction=0.0)
    f = generate_stairs(params, seed=0, approach=1.0, exit_length=1.0)
    assert sample_floor(f, 0.5, 0.0) == 0.0
    assert sample_floor(f, 1.15, 0.0) == pytest.approx(0.1)
    assert sample_floor(f, 1.45, 0.0) == pytest.approx(0.2)
    assert sample_floor(f, 1.75, 0.0) == pytest.approx(0.3)
    # cumulative height after k steps is exactly k * riser
    assert sample_floor(f, 1.95, 0.0) == 3 * 0.1


def test_stairs_down_direction():
    params = StairParams(riser=0.1, tread=0.30, step_count=3,
                         tread_jitter_fraction=0.0, direction="down")
    f = generate_stairs(params, seed=0, approach=1.0, exit_length=1.0)
    assert sample_floor(f, 0.5, 0.0) == pytest.approx(0.3)
    assert sample_floor(f, 2.2, 0.0) == 0.0


def test_stairs_determinism():
    params = StairParams(riser=0.12, tread=0.25, step_count=6)
    a = generate_stairs(params, seed=42)
    b = generate_stairs(params, seed=42)
    np.testing.assert_array_equal(a.floor, b.floor)
    c = generate_stairs(params, seed=43)
    assert not np.array_equal(a.floor, c.floor)


def test_stairs_tread_jitter_bounds():
    params = StairParams(riser=0.1, tread=0.25, step_count=5, tread_jitter_fraction=0.2)
    for seed in range(1000):
        _, layout = generate_stairs_with_layout(params, seed, width=0.4)
        edges = np.array((layout.feature_start_x,) + layout.step_far_edges)
        treads = np.diff(edges)
        assert np.all(treads >= 0.25 * 0.8 - 1e-12)
        assert np.all(treads <= 0.25 * 1.2 + 1e-12)


def test_stairs_landing_platform():
    params = StairParams(riser=0.1, tread=0.20, step_count=4,
                         tread_jitter_fraction=0.0, landing_interval=2)
    _, layout = generate_stairs_with_layout(params, 0, landing_depth=1.0)
    treads = np.diff(np.array((layout.feature_start_x,) + layout.step_far_edges))
    # second step's plateau is extended by the 1 m landing
    assert treads[1] == pytest.approx(1.20)
    assert treads[3] == pytest.approx(0.20)


def test_obstacle_density_formula():
    for total in range(1, 11):
        for level in range(total + 1):
            lvl = CurriculumLevel(level, total)
            d = obstacle_density_for_level(lvl, 0.5)
            assert d == (2 * level / total) * 0.5
    assert obstacle_density_for_level(CurriculumLevel(0, 10), 0.5) == 0.0
    assert obstacle_density_for_level(CurriculumLevel(10, 10), 0.5) == 1.0
    assert obstacle_density_for_level(CurriculumLevel(5, 10), 0.5) == 0.5


def test_obstacle_field_zero_density_flat():
    f = generate_obstacle_field(ObstacleFieldParams(), 0.0, seed=1)
    assert np.all(f.floor == 0.0)
    assert f.ceiling is None


def test_obstacle_field_count_tracks_density():
    params = ObstacleFieldParams()
    density = 0.3
    area = (params.corridor_length - 0.5 - params.spawn_clear) * 2 * params.corridor_halfwidth
    expected = density * area
    counts = []
    for seed in range(100):
        _, layout = generate_obstacle_field_with_layout(params, density, seed)
        counts.append(len(layout.obstacle_xy))
    assert abs(np.mean(counts) - expected) <= 0.15 * expected


def test_obstacle_field_determinism_and_clear_spawn():
    params = ObstacleFieldParams()
    a, la = generate_obstacle_field_with_layout(params, 0.4, seed=7)
    b, lb = generate_obstacle_field_with_layout(params, 0.4, seed=7)
    np.testing.assert_array_equal(a.floor, b.floor)
    assert la.obstacle_xy == lb.obstacle_xy
    # spawn region stays flat
    spawn_rows = int(1.0 / a.cell_size)
    assert np.all(a.floor[:spawn_rows, :] == 0.0)


def test_obstacle_field_min_spacing_respected():
    params = ObstacleFieldParams(min_spacing=0.8)
    _, layout = generate_obstacle_field_with_layout(params, 0.4, seed=3)
    pts = np.array(layout.obstacle_xy)
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            assert np.hypot(*(pts[i] - pts[j])) >= 0.8 - 1e-12


def test_obstacle_field_infeasible_density_rejected():
    with pytest.raises(ValueError, match="density"):
        generate_obstacle_field(ObstacleFieldParams(min_spacing=1.0), 5.0, seed=0)


def test_tunnel_clearance_schedule():
    values = {tunnel_clearance_for_level(CurriculumLevel(k, 10)) for k in range(11)}
    assert values == set(TUNNEL_CLEARANCES)
    assert tunnel_clearance_for_level(CurriculumLevel(0, 10)) == 0.37
    assert tunnel_clearance_for_level(CurriculumLevel(10, 10)) == 0.31


def test_tunnel_slab_geometry():
    params = TunnelParams(clearance=0.31, tunnel_length=1.2, approach_distance=1.5)
    f = generate_tunnel(params, seed=0)
    # under the slab: ceiling at 0.31 above a floor at 0
    assert sample_ceiling(f, 2.0, 0.0) == pytest.approx(0.31)
    assert sample_floor(f, 2.0, 0.0) == 0.0
    # before and after the slab: no ceiling
    assert sample_ceiling(f, 0.5, 0.0) is None
    assert sample_ceiling(f, 3.5, 0.0) is None


def test_tunnel_band_length_matches_request():
    # at 1 mm cells the 129.1 cm band is exactly representable
    params = TunnelParams(clearance=0.33, tunnel_length=1.291, approach_distance=1.5)
    f = generate_tunnel(params, seed=0, width=0.2, cell_size=0.001)
    present_rows = np.any(~np.isnan(f.ceiling), axis=1)
    assert present_rows.sum() * f.cell_size == pytest.approx(1.291, abs=1e-9)


def test_tunnel_two_slabs_with_gap():
    params = TunnelParams(clearance=0.33, tunnel_length=0.8, approach_distance=1.0,
                          num_slabs=2, slab_gap=1.5)
    f, layout = generate_tunnel_with_layout(params, seed=0)
    assert len(layout.slab_spans) == 2
    (a0, a1), (b0, b1) = layout.slab_spans
    assert sample_ceiling(f, (a0 + a1) / 2, 0.0) == pytest.approx(0.33)
    assert sample_ceiling(f, (a1 + b0) / 2, 0.0) is None  # the gap
    assert sample_ceiling(f, (b0 + b1) / 2, 0.0) == pytest.approx(0.33)


def test_tunnel_ceiling_above_floor_for_all_curriculum_clearances():
    for clearance in TUNNEL_CLEARANCES:
        f = generate_tunnel(TunnelParams(clearance=clearance), seed=0)
        present = ~np.isnan(f.ceiling)
        assert np.all(f.ceiling[present] > f.floor[present])


def test_tunnel_randomize_determinism():
    params = TunnelParams(clearance=0.35)
    a = generate_tunnel(params, seed=5, randomize=True)
    b = generate_tunnel(params, seed=5, randomize=True)
    np.testing.assert_array_equal(np.nan_to_num(a.ceiling), np.nan_to_num(b.ceiling))


def test_joists_profile():
    f = generate_joists(spacing=0.4, joist_height=0.04, joist_width=0.04, seed=0,
                        length=4.0, start=1.0)
    # sample at cell centers: bilinear interpolation smears joist edges
    assert sample_floor(f, 1.0, 0.0) == pytest.approx(0.04)
    assert sample_floor(f, 1.2, 0.0) == 0.0
    assert sample_floor(f, 1.4, 0.0) == pytest.approx(0.04)  # period 0.4


def test_joists_zero_height_flat():
    f = generate_joists(0.4, 0.0, 0.04, seed=0)
    assert np.all(f.floor == 0.0)


def test_joists_determinism():
    a = generate_joists(0.4, 0.04, 0.04, seed=1)
    b = generate_joists(0.4, 0.04, 0.04, seed=1)
    np.testing.assert_array_equal(a.floor, b.floor)


def test_param_validation():
    with pytest.raises(ValueError):
        StairParams(riser=0.3, tread=0.25)
    with pytest.raises(ValueError):
        StairParams(riser=0.1, tread=0.5)
    with pytest.raises(ValueError):
        TunnelParams(clearance=0.5)
    with pytest.raises(ValueError):
        ObstacleFieldParams(shape_set=(("pyramid", (0.1, 0.2), (0.1, 0.2)),))
