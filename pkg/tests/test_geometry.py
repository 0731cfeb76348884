import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from waynav.errors import BehindCamera, FrameMismatch, InvalidDepth, OutOfBounds
from waynav.geometry import (
    CAMERA,
    DOWN_PITCH,
    WORLD,
    Intrinsics,
    Point3,
    Pose,
    backproject,
    cam_to_world,
    normalize_yaw,
    project,
    world_to_cam,
    wrap_angle,
)

K640 = Intrinsics(320.0, 320.0, 320.0, 240.0, 640, 480)


def test_principal_point_ray_is_optical_axis():
    p = backproject(K640.cx, K640.cy, 2.0, K640)
    assert (p.x, p.y, p.z, p.frame) == (0.0, 0.0, 2.0, CAMERA)


def test_backproject_hand_value():
    p = backproject(480, 240, 2.0, K640)
    assert (p.x, p.y, p.z) == pytest.approx((1.0, 0.0, 2.0), abs=1e-12)


@pytest.mark.parametrize("d", [0.0, -1.0, math.inf, math.nan])
def test_bad_depth_rejected(d):
    with pytest.raises(InvalidDepth):
        backproject(0, 0, d, K640)


@pytest.mark.parametrize("u,v", [(-1, 0), (640, 0), (0, 480), (0, -0.5)])
def test_pixel_out_of_bounds(u, v):
    with pytest.raises(OutOfBounds):
        backproject(u, v, 1.0, K640)


def test_project_optical_axis_and_behind():
    assert project(Point3(0, 0, 5, CAMERA), K640) == (K640.cx, K640.cy)
    with pytest.raises(BehindCamera):
        project(Point3(0, 0, -1, CAMERA), K640)
    with pytest.raises(FrameMismatch):
        project(Point3(0, 0, 1, WORLD), K640)


def test_round_trip_1000_seeded_pixels():
    rng = np.random.default_rng(0)
    us = rng.uniform(0, 640, 1000)
    vs = rng.uniform(0, 480, 1000)
    ds = rng.uniform(0.05, 60.0, 1000)
    for u, v, d in zip(us, vs, ds):
        p = backproject(u, v, d, K640)
        uu, vv = project(p, K640)
        assert abs(uu - u) <= 1e-9 and abs(vv - v) <= 1e-9
        assert p.z == d


def test_cam_to_world_examples():
    ahead = cam_to_world(Point3(0, 0, 1, CAMERA), Pose(0, 0, 0, 0))
    assert (ahead.x, ahead.y, ahead.z) == pytest.approx((1, 0, 0), abs=1e-12)
    left = cam_to_world(Point3(0, 0, 1, CAMERA), Pose(0, 0, 0, 0), 90)
    assert (left.x, left.y) == pytest.approx((0, 1), abs=1e-12)
    # facing west from (3, 4): one metre ahead lands at x = 2
    w = cam_to_world(Point3(0, 0, 1, CAMERA), Pose(3, 4, 0, 180))
    assert (w.x, w.y) == pytest.approx((2, 4), abs=1e-12)
    assert w.frame == WORLD


def test_cam_to_world_rejects_world_points():
    with pytest.raises(FrameMismatch):
        cam_to_world(Point3(0, 0, 1, WORLD), Pose(0, 0))


def test_down_view_looks_down():
    p = cam_to_world(Point3(0, 0, 3, CAMERA), Pose(1, 1, 10, 0), 0.0, DOWN_PITCH)
    assert (p.x, p.y, p.z) == pytest.approx((1, 1, 7), abs=1e-12)
    # image top points along the heading
    top = cam_to_world(Point3(0, -1, 3, CAMERA), Pose(1, 1, 10, 0), 0.0, DOWN_PITCH)
    assert top.x == pytest.approx(2.0)


def test_frame_mixing_rejected():
    with pytest.raises(FrameMismatch):
        Point3(0, 0, 0, CAMERA) + Point3(0, 0, 0, WORLD)


def test_pose_invariants():
    assert Pose(0, 0, yaw=-30).yaw == 330
    assert Pose(0, 0, yaw=720).yaw == 0
    with pytest.raises(ValueError):
        Pose(math.nan, 0)
    with pytest.raises(ValueError):
        Pose(0, 0, floor_id=-1)
    assert Pose.from_dict(Pose(1, 2, 3, 45, 1).to_dict()) == Pose(1, 2, 3, 45, 1)


def test_intrinsics_invariants():
    with pytest.raises(ValueError):
        Intrinsics(0, 1, 1, 1, 4, 4)
    with pytest.raises(ValueError):
        Intrinsics(1, 1, 4, 1, 4, 4)


angles = st.floats(-1e4, 1e4, allow_nan=False)


@given(angles)
def test_yaw_normalisation_idempotent(a):
    n = normalize_yaw(a)
    assert 0 <= n < 360
    assert normalize_yaw(n) == n


@given(angles)
def test_four_quarter_turns_return(a):
    p = Pose(0, 0, yaw=a)
    q = p
    for _ in range(4):
        q = q.with_(yaw=q.yaw + 90)
    hx, hy = p.heading()
    qx, qy = q.heading()
    assert (qx, qy) == pytest.approx((hx, hy), abs=1e-9)


@given(angles)
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -180 < w <= 180


coord = st.floats(-50, 50, allow_nan=False)


@settings(max_examples=200)
@given(coord, coord, coord, coord, coord, coord, coord, coord, angles, st.sampled_from([0, 90, 180, 270]))
def test_cam_to_world_is_rigid(ax, ay, az, bx, by, bz, px, py, yaw, off):
    pose = Pose(px, py, 0.0, yaw)
    a, b = Point3(ax, ay, az, CAMERA), Point3(bx, by, bz, CAMERA)
    wa, wb = cam_to_world(a, pose, off), cam_to_world(b, pose, off)
    assert wa.distance(wb) == pytest.approx(a.distance(b), abs=1e-9)
    back = world_to_cam(wa, pose, off)
    assert (back.x, back.y, back.z) == pytest.approx((ax, ay, az), abs=1e-9)
