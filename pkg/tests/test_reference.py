import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from pushmpc.plant import PlantModel, initial_world, step_world
from pushmpc.reference import (
    ARC,
    LINE,
    TURN,
    ManeuverParams,
    ReferencePath,
    Segment,
    TrapezoidalProfile,
    path_from_spec,
    repositioning_maneuver,
    sample_path,
)
from pushmpc.robot import RobotState, wrap_angle

MODEL = PlantModel.build()


def test_line_constant_speed():
    path = ReferencePath((0, 0, 0), (Segment(LINE, length=1.0, v_max=0.1, a_max=np.inf),))
    r = sample_path(path, 2.0)
    np.testing.assert_allclose([r.x_rd, r.y_rd, r.theta_rd], [0.2, 0, 0], atol=1e-15)
    assert (r.v_rd, r.omega_rd) == (0.1, 0.0)


def test_arc_quarter_circle():
    seg = Segment(ARC, radius=1.0, sweep=np.pi / 2, v_max=0.1, a_max=np.inf)
    path = ReferencePath((0, 0, 0), (seg,))
    assert path.duration == pytest.approx(np.pi / 2 / 0.1)
    r = sample_path(path, path.duration)
    assert r.theta_rd == pytest.approx(np.pi / 2, abs=1e-12)
    np.testing.assert_allclose([r.x_rd, r.y_rd], [1.0, 1.0], atol=1e-12)
    mid = sample_path(path, 1.0)
    assert mid.omega_rd == pytest.approx(0.1)


def test_start_of_segment():
    path = ReferencePath((0.5, -0.2, 0.3), (Segment(LINE, length=1.0, v_max=0.1, a_max=0.05),))
    r = sample_path(path, 0.0)
    np.testing.assert_allclose([r.x_rd, r.y_rd, r.theta_rd], [0.5, -0.2, 0.3])
    assert r.v_rd == 0.0
    assert r.a_rd == 0.0
    assert sample_path(path, 0.5).a_rd > 0


def test_profile_speed_is_c1():
    prof = TrapezoidalProfile(1.0, 0.2, 0.1)
    assert prof.peak == pytest.approx(0.2)
    h = 1e-7
    for corner in (0.0, prof.ramp_time, prof.duration - prof.ramp_time, prof.duration):
        lo, hi = prof(max(corner - h, 0.0)), prof(min(corner + h, prof.duration))
        assert abs(hi[1] - lo[1]) <= 1e-6
        assert abs(hi[2] - lo[2]) <= 1e-6
    ts = np.linspace(0, prof.duration, 2001)
    assert max(abs(prof(t)[2]) for t in ts) == pytest.approx(0.1, rel=1e-4)


def test_segments_chain():
    path = path_from_spec((0, 0, 0), [("line", 0.5), ("arc", 0.5, -np.pi / 2), ("turn", np.pi)], 0.1, 0.05)
    np.testing.assert_allclose(path.starts[1], [0.5, 0, 0])
    np.testing.assert_allclose(path.starts[2], [1.0, -0.5, -np.pi / 2], atol=1e-12)
    end = sample_path(path, path.duration)
    np.testing.assert_allclose([end.x_rd, end.y_rd, end.theta_rd], [1.0, -0.5, np.pi / 2], atol=1e-12)


def test_sample_outside_raises():
    path = path_from_spec((0, 0, 0), [("line", 0.5)], 0.1, 0.05)
    with pytest.raises(ValueError):
        sample_path(path, -0.1)
    with pytest.raises(ValueError):
        sample_path(path, path.duration + 1.0)


def test_window_holds_past_end():
    path = path_from_spec((0, 0, 0), [("line", 0.5)], 0.1, 0.05)
    w = path.window(path.duration - 0.05, 0.1, 3)
    assert w[-1].x_rd == pytest.approx(0.5)
    assert w[-1].v_rd == 0.0


def test_bad_segments():
    with pytest.raises(ValueError):
        Segment("spiral")
    with pytest.raises(ValueError):
        Segment(ARC, radius=0.0, sweep=1.0)
    with pytest.raises(ValueError):
        path_from_spec((0, 0, 0), [("spiral", 1.0)], 0.1, 0.1)
    with pytest.raises(ValueError):
        TrapezoidalProfile(-1.0, 0.1)


@settings(max_examples=40)
@given(st.floats(0.01, 5.0), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_profile_limits(dist, v_max, a_max):
    prof = TrapezoidalProfile(dist, v_max, a_max)
    ts = np.linspace(0, prof.duration, 400)
    vals = np.array([prof(t) for t in ts])
    assert np.all(vals[:, 1] <= v_max + 1e-12)
    assert np.all(np.abs(vals[:, 2]) <= a_max + 1e-12)
    assert np.all(vals[:, 1] >= 0)
    assert prof(prof.duration)[0] == pytest.approx(dist)
    # position is the integral of speed
    corners = [prof.ramp_time, prof.duration - prof.ramp_time]
    for t in ts[::50]:
        s, _ = quad(lambda x: prof(x)[1], 0, t, points=[c for c in corners if 0 < c < t] or None)
        assert prof(t)[0] == pytest.approx(s, abs=1e-9)


kinds = st.sampled_from([("line", 0.7), ("line", -0.4), ("arc", 0.5, 1.2), ("arc", 0.9, -2.0), ("turn", 1.0)])


@settings(max_examples=30)
@given(st.lists(kinds, min_size=1, max_size=4), st.floats(0, 1))
def test_nonholonomic_exact(items, frac):
    path = path_from_spec((0.1, 0.2, 0.3), items, 0.1, 0.05)
    t = frac * path.duration
    h = 1e-6
    t0, t1 = max(0.0, t - h), min(path.duration, t + h)
    a, b = sample_path(path, t0), sample_path(path, t1)
    # the sampled velocity is along the heading by construction
    r = sample_path(path, t)
    vel = r.v_rd * np.array([np.cos(r.theta_rd), np.sin(r.theta_rd)])
    lateral = -np.sin(r.theta_rd) * vel[0] + np.cos(r.theta_rd) * vel[1]
    assert abs(lateral) <= 1e-10
    # and finite differences of the pose agree with it (no sideways drift)
    d = np.array([b.x_rd - a.x_rd, b.y_rd - a.y_rd])
    if t1 > t0:
        side = -np.sin(r.theta_rd) * d[0] + np.cos(r.theta_rd) * d[1]
        assert abs(side) / (t1 - t0) <= 1e-6


def _maneuver(side, robot=(0.0, 0.0, 0.0)):
    world = initial_world(RobotState(*robot), MODEL)
    path = repositioning_maneuver(robot, world.object_pose, side, MODEL.contact_distance, MODEL.half_side)
    return world, path


@pytest.mark.parametrize("side,sweep", [(2, np.pi), (1, np.pi / 2), (3, -np.pi / 2)])
def test_maneuver_arc_sweep(side, sweep):
    _, path = _maneuver(side)
    arcs = [s for s in path.segments if s.kind == ARC]
    assert len(arcs) == 1
    assert arcs[0].sweep == pytest.approx(sweep, abs=1e-12)
    circum = np.sqrt(2) * MODEL.half_side
    assert arcs[0].radius >= circum + ManeuverParams().clearance
    assert path.segments[0].kind == LINE and path.segments[0].length <= -0.3
    last = path.segments[-1]
    assert last.kind == LINE and last.v_max <= 0.02


@pytest.mark.parametrize("side", [1, 2, 3])
def test_maneuver_end_pose(side):
    world, path = _maneuver(side)
    end = path.end_pose
    target = world.object_pose[2] + side * np.pi / 2
    assert abs(wrap_angle(end[2] - target)) <= 1e-12
    # the bumper line crosses the object centre line at the requested face
    rel = np.array(world.object_pose[:2]) - end[:2]
    fwd = np.array([np.cos(end[2]), np.sin(end[2])])
    lateral = fwd[0] * rel[1] - fwd[1] * rel[0]
    assert abs(lateral) <= 1e-12
    assert rel @ fwd == pytest.approx(MODEL.contact_distance - ManeuverParams().overshoot, abs=1e-12)


@pytest.mark.parametrize("side", [1, 2, 3])
def test_maneuver_contact_in_simulation(side):
    world, path = _maneuver(side)
    dt = 0.01
    n = int(np.ceil(path.duration / dt))
    for k in range(n):
        r = sample_path(path, min(k * dt, path.duration))
        world = step_world(world, (r.v_rd, r.omega_rd), dt, MODEL)
    assert world.in_contact
    assert world.side == side
    assert abs(world.p_or[1]) <= 1e-3
    assert abs(wrap_angle(world.object_pose[2] - world.robot.theta_r + side * np.pi / 2)) <= 1e-9


def test_maneuver_rejects_bad_side():
    with pytest.raises(ValueError):
        _maneuver(4)


def test_turn_segment_kinematics():
    path = ReferencePath((0, 0, 0), (Segment(TURN, sweep=-np.pi / 2, v_max=0.4, a_max=0.4),))
    mid = sample_path(path, path.duration / 2)
    assert mid.v_rd == 0.0 and mid.omega_rd < 0
    end = sample_path(path, path.duration)
    assert end.theta_rd == pytest.approx(-np.pi / 2)
