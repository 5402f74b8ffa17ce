import math

import numpy as np
import pytest

from hexsim.heightmap import HeightPatch
from hexsim.reward import (
    TASK_TABLES,
    TERM_ORDER,
    RewardConfig,
    RewardInputs,
    avoidance_functional,
    compose,
    load_reward_config,
    ramp_weights,
    save_reward_config,
    squeeze_functional,
    term_action_rate,
    term_collision,
    term_forward_velocity,
    term_global_y_deviation,
    term_ground_impact,
    term_joint_accel,
    term_joint_limit,
    triangular_weights,
    write_breakdown_csv,
)


# --- independent brute-force oracles -----------------------------------------

def brute_avoidance(values):
    """Literal double sum with explicit weight sequences."""
    m, n = values.shape
    w1 = [1.0 + (1.0 - abs(2 * j - (n - 1)) / (n - 1)) if n > 1 else 1.0 for j in range(n)]
    w2 = [1.0 + i / (m - 1) if m > 1 else 1.0 for i in range(m)]
    total = 0.0
    for i in range(m):
        row = 0.0
        for j in range(n):
            h = 1.0 if values[i, j] > 0 else 0.0
            row += h * w1[j]
        total += row * w2[i]
    return total


def brute_squeeze(values, b):
    m, n = values.shape
    w4 = [1.0 + i / (m - 1) if m > 1 else 1.0 for i in range(m)]
    total = 0.0
    for i in range(m):
        row = 0.0
        for j in range(n):
            d = values[i, j] - b
            row += 1.0 if d > 0 else -2.0 * abs(d)
        total += row * w4[i]
    return total


# --- simple terms -------------------------------------------------------------

def test_forward_velocity_clip():
    assert term_forward_velocity(0.2) == 0.2
    assert term_forward_velocity(1.0) == 0.4
    assert term_forward_velocity(-0.7) == -0.4


def test_quadratic_terms():
    assert term_action_rate(np.ones(18), np.ones(18)) == 0.0
    qd_t = np.zeros(18)
    qd_t[0] = 0.1
    assert term_joint_accel(qd_t, np.zeros(18), 0.05) == pytest.approx((0.1 / 0.05) ** 2)
    assert term_global_y_deviation(0.3, 0.1) == pytest.approx(0.04)
    f_t = np.array([1.0, 0, 0, 0, 0, 0])
    assert term_ground_impact(f_t, np.zeros(6)) == 1.0


def test_joint_limit_term():
    q_min = np.full(18, -1.0)
    q_max = np.full(18, 1.0)
    q = np.zeros(18)
    assert term_joint_limit(q, q_min, q_max) == 0.0
    q[0] = 1.1
    assert term_joint_limit(q, q_min, q_max) == pytest.approx(0.1)
    q[0] = 0.0
    q[1] = -1.05
    assert term_joint_limit(q, q_min, q_max) == pytest.approx(-0.05)


def test_collision_indicator():
    assert term_collision(False) == 0.0
    assert term_collision(True) == 1.0


def test_joint_accel_requires_positive_dt():
    with pytest.raises(ValueError):
        term_joint_accel(np.zeros(18), np.zeros(18), 0.0)


# --- functionals --------------------------------------------------------------

def test_weight_vectors_shape_and_endpoints():
    w1 = triangular_weights(3)
    np.testing.assert_allclose(w1, [1.0, 2.0, 1.0])
    w2 = ramp_weights(2)
    np.testing.assert_allclose(w2, [1.0, 2.0])
    assert triangular_weights(1).tolist() == [1.0]
    assert ramp_weights(1).tolist() == [1.0]
    w1_12 = triangular_weights(12)
    assert w1_12[0] == 1.0 and w1_12[-1] == 1.0
    assert w1_12.max() <= 2.0
    np.testing.assert_allclose(w1_12, w1_12[::-1])  # symmetric
    w2_16 = ramp_weights(16)
    assert w2_16[0] == 1.0 and w2_16[-1] == 2.0


def test_avoidance_zero_patch():
    assert avoidance_functional(np.zeros((4, 5))) == 0.0


def test_avoidance_all_obstacles_2x3():
    # w1 = [1, 2, 1], w2 = [1, 2]: full patch -> 4*1 + 4*2 = 12
    values = np.ones((2, 3))
    assert avoidance_functional(values) == pytest.approx(12.0)
    assert brute_avoidance(values) == pytest.approx(12.0)


def test_avoidance_single_center_near_cell():
    values = np.zeros((2, 3))
    values[1, 1] = 0.5  # center column, nearest row: w1=2, w2=2
    assert avoidance_functional(values) == pytest.approx(4.0)


def test_avoidance_matches_bruteforce_random():
    rng = np.random.default_rng(1)
    for _ in range(200):
        m = int(rng.integers(1, 21))
        n = int(rng.integers(1, 17))
        values = rng.uniform(-0.2, 0.5, size=(m, n))
        f = avoidance_functional(values)
        g = brute_avoidance(values)
        assert f == pytest.approx(g, rel=1e-12, abs=1e-12)


def test_avoidance_monotone_in_obstacles():
    rng = np.random.default_rng(2)
    values = (rng.random((6, 7)) < 0.3) * 0.4
    base = avoidance_functional(values)
    more = values.copy()
    free = np.argwhere(more == 0.0)
    i, j = free[0]
    more[i, j] = 0.4
    assert avoidance_functional(more) >= base


def test_avoidance_mirror_symmetry():
    rng = np.random.default_rng(3)
    values = (rng.random((5, 8)) < 0.4) * 0.3
    assert avoidance_functional(values) == pytest.approx(
        avoidance_functional(values[:, ::-1].copy()), rel=1e-12
    )


def test_squeeze_flat_floor_tall_stance():
    # 1x1 patch of bare floor (h=0), b=0.3: h'' = -0.6, f = -0.6
    f = squeeze_functional(np.zeros((1, 1)), 0.3)
    assert f == pytest.approx(-0.6)
    # weighted with -0.1 the contribution is +0.06: standing tall is rewarded
    assert -0.1 * f == pytest.approx(0.06)


def test_squeeze_piecewise_branches():
    assert squeeze_functional(np.full((1, 1), 0.31), 0.30) == pytest.approx(1.0)
    assert squeeze_functional(np.full((1, 1), 0.31), 0.35) == pytest.approx(-0.08)


def test_squeeze_matches_bruteforce_random():
    rng = np.random.default_rng(4)
    for _ in range(200):
        m = int(rng.integers(1, 21))
        n = int(rng.integers(1, 17))
        values = rng.uniform(0.0, 0.5, size=(m, n))
        b = rng.uniform(0.0, 0.45)
        f = squeeze_functional(values, b)
        g = brute_squeeze(values, b)
        assert f == pytest.approx(g, rel=1e-12, abs=1e-12)


def test_squeeze_taller_stance_rewarded_without_ceiling():
    """With bare floor everywhere, the weighted term grows with base height."""
    floor = np.zeros((4, 3))
    f_low = squeeze_functional(floor, 0.30)
    f_high = squeeze_functional(floor, 0.37)
    assert -0.1 * f_high > -0.1 * f_low


def test_squeeze_plateau_above_base():
    """All cells clearing the base: f is constant in b (the printed formula's plateau)."""
    ceiling = np.full((3, 4), 0.35)
    assert squeeze_functional(ceiling, 0.30) == squeeze_functional(ceiling, 0.33)


# --- configs and composition ---------------------------------------------------

def test_task_tables_complete():
    assert set(TASK_TABLES) == {"joist", "stairs", "avoidance", "squeeze"}
    for task, table in TASK_TABLES.items():
        cfg = RewardConfig.for_task(task)
        assert cfg.weights == table


def test_stairs_active_terms():
    cfg = RewardConfig.for_task("stairs")
    assert cfg.weights == {
        "forward_velocity": 100.0,
        "lateral_velocity": -10.0,
        "action_rate": -0.5,
        "joint_accel": -1e-5,
        "joint_limit": -1.0,
        "global_y_deviation": -100.0,
    }


def test_unknown_term_rejected():
    with pytest.raises(ValueError, match="unknown reward term"):
        RewardConfig("custom", {"warp_drive": 1.0})
    with pytest.raises(ValueError):
        RewardConfig.for_task("swimming")


def test_compose_walking_straight():
    cfg = RewardConfig.for_task("stairs")
    s = RewardInputs(v_x=0.4)
    out = compose(cfg, s)
    assert out.total == pytest.approx(40.0)
    assert out.weighted["forward_velocity"] == pytest.approx(40.0)


def test_compose_skips_zero_weight_terms():
    cfg = RewardConfig.for_task("stairs")
    s = RewardInputs(v_x=0.1)  # no patch provided; stairs must not need one
    out = compose(cfg, s)
    assert "obstacle_front" not in out.raw
    assert "heading" not in out.raw


def test_compose_linear_in_weights():
    cfg = RewardConfig.for_task("squeeze")
    patch = HeightPatch(2, 2, np.full((2, 2), 0.31), layer_tag="squeeze-composite")
    s = RewardInputs(v_x=0.2, v_y_body=0.05, patch=patch, base_height=0.33,
                     collision=True, yaw_rate=0.1)
    a = compose(cfg, s)
    b = compose(cfg.scaled(2.0), s)
    assert b.total == pytest.approx(2.0 * a.total, rel=1e-12)


def test_compose_total_matches_sum():
    cfg = RewardConfig.for_task("avoidance")
    patch = HeightPatch(3, 3, (np.random.default_rng(0).random((3, 3)) < 0.5) * 0.4)
    s = RewardInputs(v_x=0.3, v_y_body=0.1, yaw_rate=0.2, patch=patch,
                     action=np.full(18, 0.1), torques=np.full(18, 0.2))
    out = compose(cfg, s)
    assert out.total == pytest.approx(sum(out.weighted.values()))


def test_reward_config_yaml_roundtrip(tmp_path):
    cfg = RewardConfig.for_task("squeeze")
    p = tmp_path / "cfg.yaml"
    save_reward_config(cfg, p)
    loaded = load_reward_config(p)
    assert loaded.weights == cfg.weights
    assert loaded.task == "squeeze"


def test_reward_config_yaml_rejects_unknown(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("task: custom\nweights:\n  flux_capacitor: 1.0\n")
    with pytest.raises(ValueError):
        load_reward_config(p)


def test_breakdown_csv(tmp_path):
    cfg = RewardConfig.for_task("stairs")
    rows = [compose(cfg, RewardInputs(v_x=0.1 * k)) for k in range(3)]
    p = tmp_path / "rewards.csv"
    write_breakdown_csv(rows, p)
    lines = p.read_text().strip().splitlines()
    assert lines[0].split(",") == ["step", *TERM_ORDER, "total"]
    assert len(lines) == 4
