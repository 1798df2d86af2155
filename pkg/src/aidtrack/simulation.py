"""Synthetic scenes: people with mobility aids moving on a floor, rendered to
depth frames with a z-buffer, together with complete ground truth.

Bodies are unions of boxes.  Each class has a shape whose extent along the
walking direction equals the width of its template (side view), so a person
walking across the image fills the matching template.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import CameraModel, DepthFrame, PixelBox, camera_pose, world_to_camera, BODY_FROM_OPTICAL
from .classes import ClassId
from .errors import ConfigurationError
from .groundtruth import GroundTruthFrame, GroundTruthObject

# Parts as (fwd_min, fwd_max, lat_min, lat_max, up_min, up_max), metres, actor-local.
_PED = (-0.2, 0.2, -0.12, 0.12, 0.0, 1.75)
CLASS_SHAPES: dict[ClassId, tuple[tuple[float, ...], ...]] = {
    ClassId.PEDESTRIAN: (_PED,),
    ClassId.CRUTCHES: (
        (-0.15, 0.15, -0.12, 0.12, 0.0, 1.75),
        (-1 / 3, -1 / 3 + 0.06, -0.2, -0.15, 0.0, 1.3),
        (1 / 3 - 0.06, 1 / 3, 0.15, 0.2, 0.0, 1.3),
    ),
    ClassId.WALKER: (
        (-1 / 3, -0.03, -0.12, 0.12, 0.0, 1.75),
        (1 / 3 - 0.05, 1 / 3, -0.27, -0.22, 0.0, 0.9),
        (1 / 3 - 0.05, 1 / 3, 0.22, 0.27, 0.0, 0.9),
        (0.0, 1 / 3, -0.27, 0.27, 0.85, 0.9),
    ),
    ClassId.WHEELCHAIR: (
        (-1 / 3, 1 / 3, -0.3, 0.3, 0.0, 0.55),
        (-1 / 3, -0.03, -0.2, 0.2, 0.55, 1.3125),
    ),
    ClassId.PUSH_WHEELCHAIR: (
        (-0.2, 0.4667, -0.3, 0.3, 0.0, 0.55),
        (-0.2, 0.1, -0.2, 0.2, 0.55, 1.3125),
        (-0.4667, -0.22, -0.12, 0.12, 0.0, 1.75),
    ),
}


def _interp_path(path: np.ndarray, t: float) -> np.ndarray:
    """Linear interpolation of rows ``[t, v1, v2, ...]``, clamped at the ends."""
    ts = path[:, 0]
    return np.array([np.interp(t, ts, path[:, k]) for k in range(1, path.shape[1])])


@dataclass
class Actor:
    person_id: int
    class_id: ClassId
    waypoints: list  # [(t, x, y), ...]
    facing: float = 0.0  # heading used while standing still
    class_schedule: list = field(default_factory=list)  # [(t_start, class), ...]

    def __post_init__(self):
        self.class_id = ClassId.parse(self.class_id)
        if self.class_id == ClassId.BACKGROUND:
            raise ConfigurationError("actors must belong to a foreground class")
        self.class_schedule = [(float(t), ClassId.parse(c)) for t, c in self.class_schedule]
        wp = np.asarray(self.waypoints, dtype=float).reshape(-1, 3)
        if len(wp) > 1 and np.any(np.diff(wp[:, 0]) <= 0):
            raise ConfigurationError(f"actor {self.person_id}: waypoint times must increase")
        self._wp = wp

    @property
    def t_start(self) -> float:
        return float(self._wp[0, 0])

    @property
    def t_end(self) -> float:
        return float(self._wp[-1, 0])

    def present(self, t: float) -> bool:
        return self.t_start - 1e-9 <= t <= self.t_end + 1e-9

    def position(self, t: float) -> np.ndarray:
        return _interp_path(self._wp, t)

    def heading(self, t: float) -> float:
        wp = self._wp
        if len(wp) > 1:
            k = int(np.clip(np.searchsorted(wp[:, 0], t, side="right") - 1, 0, len(wp) - 2))
            d = wp[k + 1, 1:] - wp[k, 1:]
            if np.hypot(*d) > 1e-9 and wp[k, 0] - 1e-9 <= t <= wp[k + 1, 0] + 1e-9:
                return math.atan2(d[1], d[0])
        return self.facing

    def class_at(self, t: float) -> ClassId:
        current = self.class_id
        for ts, c in self.class_schedule:
            if t + 1e-9 >= ts:
                current = c
        return current

    def to_dict(self) -> dict:
        return {
            "person_id": self.person_id,
            "class": self.class_id.label,
            "waypoints": [list(map(float, w)) for w in self._wp],
            "facing": self.facing,
            "class_schedule": [[t, c.label] for t, c in self.class_schedule],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Actor":
        return cls(
            person_id=int(d["person_id"]),
            class_id=d["class"],
            waypoints=d["waypoints"],
            facing=float(d.get("facing", 0.0)),
            class_schedule=d.get("class_schedule", []),
        )


@dataclass
class Obstacle:
    x: float
    y: float
    length: float
    width: float
    height: float
    yaw: float = 0.0

    @property
    def parts(self):
        return ((-self.length / 2, self.length / 2, -self.width / 2, self.width / 2, 0.0, self.height),)


@dataclass
class Scenario:
    name: str
    actors: list[Actor] = field(default_factory=list)
    camera_path: list = field(default_factory=lambda: [(0.0, 0.0, 0.0, math.pi / 2)])  # (t, x, y, yaw)
    duration: float = 1.0
    fps: float = 15.0
    camera_height: float = 1.0
    obstacles: list[Obstacle] = field(default_factory=list)
    noise_mm: float = 5.0
    seed: int = 0
    description: str = ""

    def __post_init__(self):
        if self.fps <= 0:
            raise ConfigurationError("frame rate must be positive")
        ids = [a.person_id for a in self.actors]
        if len(ids) != len(set(ids)):
            raise ConfigurationError("actor ids must be unique")
        cp = np.asarray(self.camera_path, dtype=float).reshape(-1, 4)
        if len(cp) > 1 and np.any(np.diff(cp[:, 0]) <= 0):
            raise ConfigurationError("camera path times must increase")
        self._cp = cp

    @property
    def n_frames(self) -> int:
        return int(math.floor(self.duration * self.fps + 1e-9)) + 1

    def frame_time(self, k: int) -> float:
        return k / self.fps

    def camera_pose_at(self, t: float) -> np.ndarray:
        x, y, yaw = _interp_path(self._cp, t)
        return camera_pose(x, y, yaw, self.camera_height)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "duration": self.duration,
            "fps": self.fps,
            "camera_height": self.camera_height,
            "noise_mm": self.noise_mm,
            "seed": self.seed,
            "camera_path": [list(map(float, r)) for r in self._cp],
            "actors": [a.to_dict() for a in self.actors],
            "obstacles": [vars(o).copy() for o in self.obstacles],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(
            name=d.get("name", "scenario"),
            description=d.get("description", ""),
            actors=[Actor.from_dict(a) for a in d.get("actors", [])],
            camera_path=d.get("camera_path", [(0.0, 0.0, 0.0, math.pi / 2)]),
            duration=float(d.get("duration", 1.0)),
            fps=float(d.get("fps", 15.0)),
            camera_height=float(d.get("camera_height", 1.0)),
            obstacles=[Obstacle(**o) for o in d.get("obstacles", [])],
            noise_mm=float(d.get("noise_mm", 5.0)),
            seed=int(d.get("seed", 0)),
        )

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


class _Rays:
    """Per-pixel ray directions (dx, dy, 1) in the optical frame."""

    def __init__(self, cam: CameraModel):
        u = np.arange(cam.width, dtype=float)
        v = np.arange(cam.height, dtype=float)
        self.dx = (u - cam.cx) / cam.fx
        self.dy = (v - cam.cy) / cam.fy


_RAY_CACHE: dict[CameraModel, _Rays] = {}


def _rays(cam: CameraModel) -> _Rays:
    if cam not in _RAY_CACHE:
        _RAY_CACHE[cam] = _Rays(cam)
    return _RAY_CACHE[cam]


def _optical_axes(yaw_world: float, pose: np.ndarray):
    """Unit fwd/lat/up vectors of an upright world-yawed box in the optical frame."""
    R = pose[:3, :3]
    fwd_w = np.array([math.cos(yaw_world), math.sin(yaw_world), 0.0])
    lat_w = np.array([-math.sin(yaw_world), math.cos(yaw_world), 0.0])
    up_w = np.array([0.0, 0.0, 1.0])
    to_opt = BODY_FROM_OPTICAL.T @ R.T
    return to_opt @ fwd_w, to_opt @ lat_w, to_opt @ up_w


def _render_object(parts, origin_w, yaw, pose, cam: CameraModel, height_offset: float = 0.0):
    """Depth (metres, inf = miss) of one object inside its pixel window.

    Returns ``(v0, v1, u0, u1, depth)`` or None when it cannot be seen.
    """
    rays = _rays(cam)
    e_f, e_l, e_u = _optical_axes(yaw, pose)
    origin_c = world_to_camera([[origin_w[0], origin_w[1], height_offset]], pose)[0]
    boxes = []
    corners = []
    for f0, f1, l0, l1, z0, z1 in parts:
        lo = np.array([f0, l0, z0])
        hi = np.array([f1, l1, z1])
        boxes.append((lo, hi))
        for cf in (f0, f1):
            for cl in (l0, l1):
                for cz in (z0, z1):
                    corners.append(origin_c + cf * e_f + cl * e_l + cz * e_u)
    corners = np.array(corners)
    zc = corners[:, 2]
    if np.all(zc <= 1e-3):
        return None
    if np.all(zc > 0.05):
        uv = cam.project(corners)
        u0 = max(int(math.floor(uv[:, 0].min())) - 1, 0)
        u1 = min(int(math.ceil(uv[:, 0].max())) + 2, cam.width)
        v0 = max(int(math.floor(uv[:, 1].min())) - 1, 0)
        v1 = min(int(math.ceil(uv[:, 1].max())) + 2, cam.height)
    else:
        u0, u1, v0, v1 = 0, cam.width, 0, cam.height
    if u0 >= u1 or v0 >= v1:
        return None
    dx = rays.dx[u0:u1][None, :]
    dy = rays.dy[v0:v1][:, None]
    basis = np.stack([e_f, e_l, e_u])  # rows
    # ray o=0, d=(dx,dy,1) in local coords: d_local = basis @ d, o_local = -basis @ origin_c
    d_loc = [basis[k, 0] * dx + basis[k, 1] * dy + basis[k, 2] for k in range(3)]
    o_loc = -basis @ origin_c
    depth = np.full((v1 - v0, u1 - u0), np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = [1.0 / d for d in d_loc]
        for lo, hi in boxes:
            tmin = np.zeros_like(depth)
            tmax = np.full_like(depth, np.inf)
            for k in range(3):
                ta = (lo[k] - o_loc[k]) * inv[k]
                tb = (hi[k] - o_loc[k]) * inv[k]
                near = np.fmin(ta, tb)
                far = np.fmax(ta, tb)
                # rays parallel to a slab: inside -> (-inf, inf), outside -> nan/empty
                par = d_loc[k] == 0
                if np.any(par):
                    inside = (o_loc[k] >= lo[k]) & (o_loc[k] <= hi[k])
                    near = np.where(par, -np.inf if inside else np.inf, near)
                    far = np.where(par, np.inf if inside else -np.inf, far)
                tmin = np.maximum(tmin, near)
                tmax = np.minimum(tmax, far)
            hit = tmax >= tmin
            np.minimum(depth, np.where(hit, tmin, np.inf), out=depth)
    # ray parameter equals optical depth since d_z = 1
    return v0, v1, u0, u1, depth


def floor_depth(cam: CameraModel, camera_height: float) -> np.ndarray:
    rays = _rays(cam)
    dy = np.broadcast_to(rays.dy[:, None], cam.shape)
    with np.errstate(divide="ignore"):
        z = np.where(dy > 0, camera_height / dy, np.inf)
    return np.array(z)


def render_frame(scenario: Scenario, t: float, cam: CameraModel | None = None, frame_id: int | None = None):
    """Render the scene at time ``t``; returns ``(DepthFrame, GroundTruthFrame)``."""
    cam = cam or CameraModel()
    if not (-1e-9 <= t <= scenario.duration + 1e-9):
        raise ConfigurationError(f"t={t} outside [0, {scenario.duration}]")
    if frame_id is None:
        frame_id = int(round(t * scenario.fps))
    pose = scenario.camera_pose_at(t)
    zbuf = floor_depth(cam, scenario.camera_height)

    for ob in scenario.obstacles:
        r = _render_object(ob.parts, (ob.x, ob.y), ob.yaw, pose, cam)
        if r is not None:
            v0, v1, u0, u1, d = r
            np.minimum(zbuf[v0:v1, u0:u1], d, out=zbuf[v0:v1, u0:u1])

    rendered = []
    for actor in scenario.actors:
        if not actor.present(t):
            continue
        cls = actor.class_at(t)
        pos = actor.position(t)
        r = _render_object(CLASS_SHAPES[cls], pos, actor.heading(t), pose, cam)
        if r is None:
            continue
        v0, v1, u0, u1, d = r
        np.minimum(zbuf[v0:v1, u0:u1], d, out=zbuf[v0:v1, u0:u1])
        rendered.append((actor, cls, pos, r))

    objects = []
    for actor, cls, pos, (v0, v1, u0, u1, d) in rendered:
        own = (d >= cam.min_depth) & (d <= cam.max_depth)
        total = int(own.sum())
        if total == 0:
            continue
        vis = own & (d <= zbuf[v0:v1, u0:u1])
        frac = float(vis.sum()) / total
        rows = np.flatnonzero(own.any(axis=1))
        cols = np.flatnonzero(own.any(axis=0))
        box = PixelBox(float(u0 + cols[0]), float(v0 + rows[0]), float(u0 + cols[-1] + 1), float(v0 + rows[-1] + 1))
        objects.append(
            GroundTruthObject(
                box=box,
                class_id=cls,
                position_world=(float(pos[0]), float(pos[1])),
                person_id=actor.person_id,
                occluded=frac < 0.5,
                visible_fraction=frac,
            )
        )

    rng = np.random.default_rng([scenario.seed, frame_id])
    mm = zbuf * 1000.0
    if scenario.noise_mm > 0:
        mm = mm + rng.normal(0.0, scenario.noise_mm, size=mm.shape)
    valid = np.isfinite(mm) & (mm >= cam.min_depth * 1000.0) & (mm <= cam.max_depth * 1000.0)
    depth = np.where(valid, np.rint(np.where(valid, mm, 0.0)), 0).astype(np.uint16)
    frame = DepthFrame(depth=depth, timestamp=float(t), camera_pose=pose, frame_id=frame_id)
    return frame, GroundTruthFrame(frame_id=frame_id, objects=tuple(objects), timestamp=float(t))


def render_sequence(scenario: Scenario, cam: CameraModel | None = None):
    """Yield ``(DepthFrame, GroundTruthFrame)`` for every frame of the scenario."""
    for k in range(scenario.n_frames):
        yield render_frame(scenario, scenario.frame_time(k), cam, frame_id=k)


# ---------------------------------------------------------------------------
# Standard scenarios.  Camera at the world origin looking along +y, 1 m high.

def _walk(pid, cls, start, end, t0, t1, **kw) -> Actor:
    return Actor(pid, cls, [(t0, *start), (t1, *end)], **kw)


def single_walker() -> Scenario:
    return Scenario(
        name="single-walker",
        description="One person with a walking frame crosses the view at 3.5 m. "
        "Expected: one track for the whole sequence, final belief argmax = walker.",
        actors=[_walk(1, ClassId.WALKER, (-1.5, 3.5), (1.5, 3.5), 0.0, 6.0)],
        duration=6.0,
    )


def five_class_lineup() -> Scenario:
    classes = [ClassId.PEDESTRIAN, ClassId.WHEELCHAIR, ClassId.PUSH_WHEELCHAIR, ClassId.CRUTCHES, ClassId.WALKER]
    actors = [
        Actor(i + 1, c, [(0.0, x, 4.5)], facing=0.0)
        for i, (c, x) in enumerate(zip(classes, (-2.4, -1.2, 0.0, 1.2, 2.4)))
    ]
    for a in actors:
        a.waypoints = [(0.0, a.position(0)[0], 4.5), (2.0, a.position(0)[0], 4.5)]
        a.__post_init__()
    return Scenario(
        name="five-class-lineup",
        description="All five classes stand side by side 4.5 m away, side-on to the camera. "
        "Expected: five segments, five detections, one per class.",
        actors=actors,
        duration=2.0,
    )


def crossing_with_occlusion() -> Scenario:
    return Scenario(
        name="crossing-with-occlusion",
        description="A pedestrian at 3 m walks left to right while a person with crutches at 4.8 m "
        "walks right to left; their lines of sight cross at t = 5 s and the far person is "
        "more than half hidden for about ten frames. Expected: both tracks survive with no "
        "identity switch, and the far person's belief recovers after reacquisition.",
        actors=[
            _walk(1, ClassId.PEDESTRIAN, (-2.0, 3.0), (2.0, 3.0), 0.0, 10.0),
            _walk(2, ClassId.CRUTCHES, (1.5, 4.8), (-1.5, 4.8), 0.0, 10.0),
        ],
        duration=10.0,
    )


def class_transition() -> Scenario:
    return Scenario(
        name="class-transition",
        description="One person changes category: crutches, then pedestrian, then wheelchair. "
        "Expected: a single track whose belief follows the true class with a short lag.",
        actors=[
            Actor(1, ClassId.CRUTCHES, [(0.0, -1.2, 3.5), (12.0, 1.2, 3.5)],
                  class_schedule=[(4.0, ClassId.PEDESTRIAN), (8.0, ClassId.WHEELCHAIR)]),
        ],
        duration=12.0,
    )


def out_of_fov_reentry() -> Scenario:
    # The person is outside the frustum for about 0.9 s, inside the ~1.4 s a
    # converged default track survives without measurements.
    return Scenario(
        name="out-of-fov-reentry",
        description="A pedestrian walks across at 4 m while the robot turns away and back. "
        "Expected: the track coasts outside the field of view and keeps its id on re-entry.",
        actors=[_walk(1, ClassId.PEDESTRIAN, (-1.0, 4.0), (1.0, 4.0), 0.0, 6.0)],
        camera_path=[
            (0.0, 0.0, 0.0, math.pi / 2),
            (2.0, 0.0, 0.0, math.pi / 2),
            (2.3, 0.0, 0.0, math.pi / 2 + 1.3),
            (2.9, 0.0, 0.0, math.pi / 2 + 1.3),
            (3.2, 0.0, 0.0, math.pi / 2),
        ],
        duration=6.0,
    )


def guidance_scenarios() -> list[Scenario]:
    """Thirteen guidance runs: two per mobility-aid class, five pedestrians.

    Each visitor walks up to the robot and stops 2.2-2.6 m in front of it.
    """
    classes = [ClassId.PEDESTRIAN] * 5 + [c for c in (ClassId.WHEELCHAIR, ClassId.PUSH_WHEELCHAIR,
                                                       ClassId.CRUTCHES, ClassId.WALKER) for _ in range(2)]
    out = []
    for k, cls in enumerate(classes):
        x_end = (-0.3, 0.0, 0.3)[k % 3]
        y_end = 2.2 + 0.1 * (k % 5)
        actor = Actor(1, cls, [(0.0, x_end + 0.8, 5.5), (3.0, x_end, y_end), (8.0, x_end, y_end)], facing=0.0)
        out.append(
            Scenario(
                name=f"guidance-{k:02d}-{cls.label}",
                description=f"A visitor ({cls.label}) approaches and waits in front of the robot.",
                actors=[actor],
                duration=8.0,
                seed=k,
            )
        )
    return out


def standard_scenarios() -> dict[str, Scenario]:
    scenarios = [single_walker(), five_class_lineup(), crossing_with_occlusion(), class_transition(),
                 out_of_fov_reentry()]
    return {s.name: s for s in scenarios}
