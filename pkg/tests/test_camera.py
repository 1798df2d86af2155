import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aidtrack.camera import (
    CameraModel,
    DepthFrame,
    PixelBox,
    camera_pose,
    camera_to_world,
    depth_to_cloud,
    project_metric_box,
    world_to_camera,
)
from aidtrack.errors import ConfigurationError, DegenerateProjectionError, NothingVisibleError

CAM = CameraModel()


def frame_with(pixels: dict) -> DepthFrame:
    d = np.zeros(CAM.shape, np.uint16)
    for (u, v), mm in pixels.items():
        d[v, u] = mm
    return DepthFrame(d)


def test_principal_point_maps_to_optical_axis():
    pts = depth_to_cloud(frame_with({(480, 270): 2000}), CAM)
    np.testing.assert_allclose(pts, [[0.0, 0.0, 2.0]])


def test_pixel_one_focal_length_right():
    # hand computation: x = (u - cx) z / fx = 540 * 1.0 / 540
    cam = CameraModel(cx=100.0)
    d = np.zeros(cam.shape, np.uint16)
    d[270, 640] = 1000
    pts = depth_to_cloud(DepthFrame(d), cam)
    np.testing.assert_allclose(pts, [[1.0, 0.0, 1.0]])


def test_zero_and_out_of_range_depth_emit_nothing():
    pts = depth_to_cloud(frame_with({(10, 10): 0, (11, 10): 400, (12, 10): 9000}), CAM)
    assert pts.shape == (0, 3)


def test_row_major_order():
    pts, pix = depth_to_cloud(frame_with({(5, 3): 1000, (2, 4): 1000, (9, 3): 1000}), CAM, return_pixels=True)
    assert [tuple(p) for p in pix.tolist()] == [(5, 3), (9, 3), (2, 4)]
    assert np.all(np.diff(pts[:, 1]) >= 0)


def test_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        depth_to_cloud(DepthFrame(np.zeros((10, 10), np.uint16)), CAM)


def test_camera_invariants():
    for bad in (dict(fx=0), dict(cx=960), dict(min_depth=2.0, max_depth=1.0), dict(min_depth=0.0)):
        with pytest.raises(ConfigurationError):
            CameraModel(**bad)


def test_metric_box_width():
    cam = CameraModel(fx=500.0, fy=500.0)
    box = project_metric_box((0.0, 0.0, 2.0), 0.4, 0.4, cam)
    assert box.width == pytest.approx(100.0)


def test_metric_box_centered_on_axis():
    box = project_metric_box((0.0, 0.0, 3.0), 0.5, 0.5, CAM)
    assert box.center == pytest.approx((CAM.cx, CAM.cy))


def test_metric_box_far_left_is_invisible():
    with pytest.raises(NothingVisibleError):
        project_metric_box((-50.0, 0.0, 2.0), 0.4, 1.75, CAM)


def test_metric_box_too_close():
    with pytest.raises(DegenerateProjectionError):
        project_metric_box((0.0, 0.0, 0.2), 0.4, 1.75, CAM)


def test_box_clamped_to_image():
    box = project_metric_box((0.0, 0.0, 0.6), 0.4, 1.75, CAM)
    assert box.v_min == 0.0 and box.v_max == CAM.height


@given(st.floats(0.6, 7.5), st.floats(0.6, 7.5))
def test_pixel_width_decreasing_in_depth(z1, z2):
    if abs(z1 - z2) < 1e-6:
        return
    near, far = sorted((z1, z2))
    w_near = project_metric_box((0, 0, near), 0.01, 0.01, CAM).width
    w_far = project_metric_box((0, 0, far), 0.01, 0.01, CAM).width
    assert w_near > w_far


@settings(max_examples=200)
@given(st.integers(0, 959), st.integers(0, 539), st.integers(500, 8000))
def test_round_trip(u, v, mm):
    pts = depth_to_cloud(frame_with({(u, v): mm}), CAM)
    assert len(pts) == 1
    uv = CAM.project(pts)[0]
    assert abs(uv[0] - u) <= 0.5 and abs(uv[1] - v) <= 0.5
    assert abs(pts[0, 2] * 1000 - mm) <= 1.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_point_count_equals_valid_pixels(seed):
    rng = np.random.default_rng(seed)
    d = rng.integers(0, 9000, size=CAM.shape).astype(np.uint16)
    d[rng.random(CAM.shape) < 0.3] = 0
    valid = ((d >= 500) & (d <= 8000)).sum()
    assert len(depth_to_cloud(DepthFrame(d), CAM)) == valid


def test_identity_pose_maps_optical_to_ground_plane():
    pose = camera_pose()
    np.testing.assert_allclose(pose, np.eye(4))
    w = camera_to_world([[0.7, -0.3, 2.5]], pose)[0]
    assert (w[0], w[1]) == pytest.approx((0.7, 2.5))


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-math.pi, math.pi), st.floats(0, 2))
def test_world_camera_round_trip(x, y, yaw, h):
    pose = camera_pose(x, y, yaw, h)
    p = np.array([[0.3, -0.2, 3.0]])
    np.testing.assert_allclose(world_to_camera(camera_to_world(p, pose), pose), p, atol=1e-9)


def test_pixelbox_helpers():
    b = PixelBox(-10, 5, 30, 600)
    c = b.clamped(CAM)
    assert c.as_list() == [0.0, 5.0, 30.0, 540.0]
    assert PixelBox(1000, 0, 1100, 10).clamped(CAM) is None
    assert PixelBox.from_list(b.as_list()) == b


def test_depth_frame_is_immutable():
    f = frame_with({(0, 0): 1000})
    with pytest.raises(ValueError):
        f.depth[0, 0] = 5
