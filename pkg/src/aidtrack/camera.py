"""Pinhole camera model, depth frames and pixel boxes.

Axis conventions
----------------
Camera (optical) frame: x to the right, y down, z along the optical axis.
Camera body frame: x to the right, y forward (optical axis), z up.  The
``camera_pose`` stored with every frame maps body coordinates to the world
frame, so with an identity pose the world ground-plane position of a camera
point is ``(x_c, z_c)``.  The world frame has z up; ground-plane coordinates
are its (x, y).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DegenerateProjectionError, NothingVisibleError

# body = BODY_FROM_OPTICAL @ optical
BODY_FROM_OPTICAL = np.array(
    [[1.0, 0.0, 0.0],
     [0.0, 0.0, 1.0],
     [0.0, -1.0, 0.0]]
)


@dataclass(frozen=True)
class CameraModel:
    fx: float = 540.0
    fy: float = 540.0
    cx: float = 480.0
    cy: float = 270.0
    width: int = 960
    height: int = 540
    min_depth: float = 0.5
    max_depth: float = 8.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigurationError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ConfigurationError("principal point outside the image")
        if not (0 < self.min_depth < self.max_depth):
            raise ConfigurationError("need 0 < min_depth < max_depth")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def half_fov(self) -> float:
        """Smallest horizontal half-angle of the view frustum (radians)."""
        return min(math.atan2(self.cx, self.fx), math.atan2(self.width - self.cx, self.fx))

    def project(self, points) -> np.ndarray:
        """Project camera-frame points (N, 3) to pixel coordinates (N, 2)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        z = p[:, 2]
        return np.column_stack([p[:, 0] * self.fx / z + self.cx, p[:, 1] * self.fy / z + self.cy])

    def back_project(self, u, v, z) -> np.ndarray:
        u, v, z = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float), np.asarray(z, float))
        return np.stack([(u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z], axis=-1)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass(frozen=True, order=True)
class PixelBox:
    """Axis-aligned pixel rectangle with continuous edges, ``u_max``/``v_max`` exclusive."""

    u_min: float
    v_min: float
    u_max: float
    v_max: float

    @property
    def width(self) -> float:
        return self.u_max - self.u_min

    @property
    def height(self) -> float:
        return self.v_max - self.v_min

    @property
    def area(self) -> float:
        return max(self.width, 0.0) * max(self.height, 0.0)

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.u_min + self.u_max), 0.5 * (self.v_min + self.v_max))

    def shifted(self, du: float = 0.0, dv: float = 0.0) -> "PixelBox":
        return PixelBox(self.u_min + du, self.v_min + dv, self.u_max + du, self.v_max + dv)

    def clamped(self, cam: CameraModel) -> "PixelBox | None":
        """Clip to the image; None when nothing of the box remains."""
        u0, v0 = max(self.u_min, 0.0), max(self.v_min, 0.0)
        u1, v1 = min(self.u_max, float(cam.width)), min(self.v_max, float(cam.height))
        if u0 >= u1 or v0 >= v1:
            return None
        return PixelBox(u0, v0, u1, v1)

    def as_list(self) -> list[float]:
        return [self.u_min, self.v_min, self.u_max, self.v_max]

    @classmethod
    def from_list(cls, values) -> "PixelBox":
        u0, v0, u1, v1 = (float(x) for x in values)
        return cls(u0, v0, u1, v1)


def _frozen_array(a, dtype=None) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DepthFrame:
    """A depth image in millimetres (0 = invalid) with its timestamp and pose.

    ``camera_pose`` is the 4x4 body-to-world transform described in the module
    docstring.
    """

    depth: np.ndarray
    timestamp: float = 0.0
    camera_pose: np.ndarray = field(default_factory=lambda: np.eye(4))
    frame_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "depth", _frozen_array(self.depth, np.uint16))
        pose = _frozen_array(self.camera_pose, float)
        if pose.shape != (4, 4):
            raise ConfigurationError("camera_pose must be a 4x4 matrix")
        object.__setattr__(self, "camera_pose", pose)

    def check(self, cam: CameraModel) -> None:
        if self.depth.shape != cam.shape:
            raise ConfigurationError(
                f"depth grid {self.depth.shape} does not match camera {cam.shape}"
            )


def camera_pose(x: float = 0.0, y: float = 0.0, yaw: float = math.pi / 2, height: float = 0.0) -> np.ndarray:
    """Body-to-world pose of a level camera at ``(x, y, height)``.

    ``yaw`` is the heading of the optical axis measured from world +x, so the
    default ``yaw=pi/2, height=0`` is the identity transform.
    """
    a = yaw - math.pi / 2
    c, s = math.cos(a), math.sin(a)
    T = np.eye(4)
    T[:2, :2] = [[c, -s], [s, c]]
    T[:3, 3] = (x, y, height)
    return T


def camera_to_world(points_cam, pose) -> np.ndarray:
    p = np.atleast_2d(np.asarray(points_cam, dtype=float))
    body = p @ BODY_FROM_OPTICAL.T
    return body @ np.asarray(pose)[:3, :3].T + np.asarray(pose)[:3, 3]


def world_to_camera(points_world, pose) -> np.ndarray:
    p = np.atleast_2d(np.asarray(points_world, dtype=float))
    pose = np.asarray(pose)
    body = (p - pose[:3, 3]) @ pose[:3, :3]
    return body @ BODY_FROM_OPTICAL


def valid_depth_mask(frame: DepthFrame, cam: CameraModel) -> np.ndarray:
    frame.check(cam)
    d = frame.depth
    lo = math.ceil(cam.min_depth * 1000.0)
    hi = math.floor(cam.max_depth * 1000.0)
    return (d != 0) & (d >= lo) & (d <= hi)


def depth_to_cloud(frame: DepthFrame, cam: CameraModel, stride: int = 1, return_pixels: bool = False):
    """Back-project every valid pixel to a camera-frame point in metres.

    Points come out in row-major pixel order.  ``stride > 1`` keeps every
    ``stride``-th row and column only.  With ``return_pixels`` the (N, 2)
    integer array of ``(u, v)`` pixel coordinates is returned as well.
    """
    mask = valid_depth_mask(frame, cam)
    if stride > 1:
        sub = np.zeros_like(mask)
        sub[::stride, ::stride] = True
        mask &= sub
    v, u = np.nonzero(mask)
    z = frame.depth[v, u].astype(float) / 1000.0
    pts = np.column_stack([(u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z])
    if return_pixels:
        return pts, np.column_stack([u, v])
    return pts


def metric_box(center, width_m: float, height_m: float, cam: CameraModel) -> PixelBox:
    """Unclamped pixel footprint of a metric rectangle facing the camera at ``center``."""
    x, y, z = (float(c) for c in center)
    if z < cam.min_depth:
        raise DegenerateProjectionError(f"depth {z:.3f} m below min_depth {cam.min_depth}")
    u = x * cam.fx / z + cam.cx
    v = y * cam.fy / z + cam.cy
    hw = 0.5 * width_m * cam.fx / z
    hh = 0.5 * height_m * cam.fy / z
    return PixelBox(u - hw, v - hh, u + hw, v + hh)


def project_metric_box(center, width_m: float, height_m: float, cam: CameraModel) -> PixelBox:
    box = metric_box(center, width_m, height_m, cam).clamped(cam)
    if box is None:
        raise NothingVisibleError("projected box lies outside the image")
    return box
