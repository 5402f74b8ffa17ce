import math

import numpy as np
import pytest

from hexsim.heightmap import LayeredHeightField, flat_field
from hexsim.physics import (
    CONTACT_TOL,
    GRAVITY,
    ContactReport,
    advance,
    base_height_above_floor,
    resolve_contacts,
)
from hexsim.robot import (
    BaseState,
    JointState,
    RobotGeometry,
    forward_kinematics,
    reset_pose,
    servo_step,
)


@pytest.fixture
def geo():
    return RobotGeometry()


@pytest.fixture
def floor():
    return flat_field(200, 100, cell_size=0.05, origin=(-2.0, -2.5))


def test_standing_reset_full_support(geo, floor):
    joints, base = reset_pose(geo)
    new_base, report = resolve_contacts(geo, joints, base, floor)
    assert report.num_contacts == 6
    assert not report.unsupported
    np.testing.assert_allclose(report.forces, geo.weight / 6)
    assert report.forces.sum() == pytest.approx(geo.weight)
    assert not report.any_illegal
    assert new_base.position[2] == pytest.approx(0.37, abs=1e-9)


def test_one_foot_lifted_redistributes_weight(geo, floor):
    joints, base = reset_pose(geo)
    q = joints.angles.copy()
    q[1] -= 0.4  # lift LF femur
    q[2] -= 0.4
    joints = JointState(q, np.zeros(18), q.copy(), np.zeros(18))
    _, report = resolve_contacts(geo, joints, base, floor)
    assert report.num_contacts == 5
    assert not report.contact[0]
    np.testing.assert_allclose(report.forces[report.contact], geo.weight / 5)
    assert report.forces[0] == 0.0


def test_ceiling_overlap_flags_base(geo):
    floor = np.zeros((100, 60))
    ceiling = np.full((100, 60), 0.31)
    field = LayeredHeightField(100, 60, 0.05, (-2.0, -1.5), floor, ceiling)
    joints, base = reset_pose(geo)  # base top at 0.37 under a 0.31 ceiling
    _, report = resolve_contacts(geo, joints, base, field)
    assert report.illegal_ceiling[2]  # base class
    assert report.any_illegal


def test_no_ceiling_flag_when_crouched_below(geo):
    floor = np.zeros((100, 60))
    ceiling = np.full((100, 60), 0.35)
    field = LayeredHeightField(100, 60, 0.05, (-2.0, -1.5), floor, ceiling)
    joints, base = reset_pose(geo)
    # crouch by folding femur/tibia, then let the base fall onto the feet
    q = joints.angles.copy()
    q[1::3] -= 0.3
    q[2::3] -= 0.3
    crouched = JointState(q, np.zeros(18), q.copy(), np.zeros(18))
    state = base
    for _ in range(20):
        state, report = resolve_contacts(geo, crouched, state, field)
        if not report.unsupported:
            break
        state = advance(geo, state, crouched, report, dt=0.05)
    assert not report.unsupported
    assert state.position[2] < 0.33
    assert not report.illegal_ceiling.any()


def test_penetrating_feet_lift_base(geo, floor):
    joints, base = reset_pose(geo)
    sunk = BaseState(base.position - np.array([0.0, 0.0, 0.05]), base.orientation,
                     np.zeros(3), np.zeros(3))
    new_base, report = resolve_contacts(geo, joints, sunk, floor)
    assert new_base.position[2] == pytest.approx(0.37, abs=1e-6)
    assert report.num_contacts == 6


def test_fixed_point_of_advance_resolve(geo, floor):
    joints, base = reset_pose(geo)
    state = base
    for _ in range(10):
        state, report = resolve_contacts(geo, joints, state, floor)
        state = advance(geo, state, joints, report, dt=0.05)
    np.testing.assert_allclose(state.position, base.position, atol=1e-9)
    roll, pitch, _ = state.rpy
    assert abs(roll) < 1e-9 and abs(pitch) < 1e-9


def test_free_fall_accumulates_gravity(geo, floor):
    joints, base = reset_pose(geo)
    high = BaseState(base.position + np.array([0.0, 0.0, 1.0]), base.orientation,
                     np.zeros(3), np.zeros(3))
    state = high
    dt = 0.05
    drop = 0.0
    for k in range(1, 4):
        _, report = resolve_contacts(geo, joints, state, floor)
        assert report.unsupported
        state = advance(geo, state, joints, report, dt)
        drop += GRAVITY * dt * dt * k
    assert high.position[2] - state.position[2] == pytest.approx(drop, abs=1e-12)


def test_stance_sweep_moves_base(geo, floor):
    """Base velocity equals minus the mean stance-foot velocity (body frame)."""
    from hexsim.robot import feet_body_frame

    joints, base = reset_pose(geo)
    dt = 0.05
    # sweep all coxa joints by a small angle in one servo step
    cmd = joints.angles.copy()
    cmd[0::3] += 0.1
    moved = servo_step(geo, joints, cmd, dt)
    _, report = resolve_contacts(geo, moved, base, floor)
    assert report.num_contacts == 6
    new_base = advance(geo, base, moved, report, dt)
    feet_now = feet_body_frame(geo, moved.angles)
    feet_prev = feet_body_frame(geo, moved.angles - moved.velocities * dt)
    v_mean = (feet_now - feet_prev)[:, :2].mean(axis=0) / dt
    expected = base.position[:2] - v_mean * dt  # yaw = 0: body frame == world frame
    np.testing.assert_allclose(new_base.position[:2], expected, atol=1e-12)


def test_no_joint_motion_base_stationary(geo, floor):
    joints, base = reset_pose(geo)
    _, report = resolve_contacts(geo, joints, base, floor)
    out = advance(geo, base, joints, report, dt=0.05)
    np.testing.assert_allclose(out.position, base.position, atol=1e-15)
    assert np.all(out.linear_velocity == 0.0)


def test_tipping_when_unbalanced(geo):
    """Support on one side at a ledge: the COM overhangs and the base rolls over."""
    floor_grid = np.zeros((200, 100))
    floor_grid[:, 50:] = -1.0  # ledge: everything left of the robot drops away
    field = LayeredHeightField(200, 100, 0.05, (-2.0, -2.5), floor_grid)
    joints, base = reset_pose(geo)
    q = joints.angles.copy()
    for leg in (0, 2, 4):  # fold all left legs up against the body
        q[3 * leg + 1] = -1.6
        q[3 * leg + 2] = -0.9
    lifted = JointState(q, np.zeros(18), q.copy(), np.zeros(18))
    state = base
    rolled = False
    for _ in range(60):
        state, report = resolve_contacts(geo, lifted, state, field)
        state = advance(geo, state, lifted, report, dt=0.05)
        roll, pitch, _ = state.rpy
        if abs(roll) > math.radians(60) or abs(pitch) > math.radians(60):
            rolled = True
            break
    assert rolled


def test_stable_on_flat_ground_never_tips(geo, floor):
    """A symmetric stance with the COM inside the support stays level."""
    joints, base = reset_pose(geo)
    state = base
    for _ in range(50):
        state, report = resolve_contacts(geo, joints, state, floor)
        state = advance(geo, state, joints, report, dt=0.05)
    roll, pitch, _ = state.rpy
    assert abs(roll) < 1e-9 and abs(pitch) < 1e-9


def test_determinism(geo, floor):
    joints, base = reset_pose(geo)
    rng = np.random.default_rng(5)
    cmds = rng.uniform(-0.5, 0.5, size=(20, 18)) + joints.angles

    def run():
        j, b = reset_pose(geo)
        traj = []
        for c in cmds:
            j = servo_step(geo, j, c, 0.05)
            b, rep = resolve_contacts(geo, j, b, floor)
            b = advance(geo, b, j, rep, 0.05)
            traj.append(b.position.copy())
        return np.array(traj)

    np.testing.assert_array_equal(run(), run())


def test_base_height_above_floor(geo):
    field = flat_field(100, 60, cell_size=0.05, height=0.25, origin=(-2.0, -1.5))
    joints, base = reset_pose(geo, floor_height=0.25)
    assert base_height_above_floor(base, field) == pytest.approx(0.37)
