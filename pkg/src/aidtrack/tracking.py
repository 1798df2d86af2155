"""Constant-velocity Kalman multi-target tracking on the ground plane."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import linear_sum_assignment

from .belief import HmmModel, background_probability, default_model, forward_update
from .classes import ClassId
from .errors import ConfigurationError, NumericError

H_POS = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(4))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float).reshape(4, 4))

    @property
    def position(self) -> np.ndarray:
        return self.mean[:2]

    @property
    def velocity(self) -> np.ndarray:
        return self.mean[2:]

    @property
    def sigma_pos(self) -> float:
        """Square root of the largest eigenvalue of the position covariance."""
        return float(math.sqrt(max(np.linalg.eigvalsh(self.cov[:2, :2])[-1], 0.0)))


@dataclass(frozen=True)
class NoiseConfig:
    q: float = 0.5
    R: tuple = ((0.04, 0.0), (0.0, 0.04))

    def __post_init__(self):
        if not self.q > 0:
            raise ConfigurationError("process noise density must be positive")
        R = np.asarray(self.R, dtype=float)
        if R.shape != (2, 2) or not np.allclose(R, R.T) or np.any(np.linalg.eigvalsh(R) <= 0):
            raise ConfigurationError("observation noise must be symmetric positive definite")

    @property
    def R_matrix(self) -> np.ndarray:
        return np.asarray(self.R, dtype=float)


def transition_matrix(dt: float) -> np.ndarray:
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    return F


def process_noise(dt: float, q: float) -> np.ndarray:
    """White-acceleration noise integrated over ``dt`` with spectral density ``q``."""
    a, b, c = dt**3 / 3.0, dt**2 / 2.0, dt
    return q * np.array([[a, 0, b, 0], [0, a, 0, b], [b, 0, c, 0], [0, b, 0, c]])


def predict(state: KalmanState, dt: float, q: float) -> KalmanState:
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    F = transition_matrix(dt)
    P = F @ state.cov @ F.T + process_noise(dt, q)
    return KalmanState(F @ state.mean, 0.5 * (P + P.T))


def innovation(state: KalmanState, z, R, H=H_POS):
    v = np.asarray(z, dtype=float) - H @ state.mean
    S = H @ state.cov @ H.T + np.asarray(R, dtype=float)
    return v, S


def update(state: KalmanState, z, R, H=H_POS) -> KalmanState:
    v, S = innovation(state, z, R, H)
    K = cho_solve(_cho(S), H @ state.cov).T
    I_KH = np.eye(4) - K @ H
    # Joseph form keeps P symmetric positive semi-definite
    P = I_KH @ state.cov @ I_KH.T + K @ np.asarray(R, dtype=float) @ K.T
    return KalmanState(state.mean + K @ v, 0.5 * (P + P.T))


def _cho(S):
    try:
        return cho_factor(S, lower=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericError("innovation covariance is not positive definite") from exc


def mahalanobis(state: KalmanState, z, H=H_POS, R=None) -> float:
    """Squared Mahalanobis distance of ``z`` from the predicted observation."""
    R = np.zeros((H.shape[0], H.shape[0])) if R is None else R
    v, S = innovation(state, z, R, H)
    return float(max(v @ cho_solve(_cho(S), v), 0.0))


def assign(cost) -> list[tuple[int, int]]:
    """Minimum-cost assignment (rectangular allowed) via the Hungarian method."""
    cost = np.asarray(cost, dtype=float)
    if cost.size == 0:
        return []
    rows, cols = linear_sum_assignment(cost)
    return list(zip(rows.tolist(), cols.tolist()))


def associate(states: Sequence[KalmanState], observations, gate: float, R):
    """Assign observations to tracks by Mahalanobis distance, then drop pairs
    beyond the gate.  Returns ``(pairs, unmatched_tracks, unmatched_obs)``."""
    obs = np.asarray(observations, dtype=float).reshape(-1, 2)
    n, m = len(states), len(obs)
    if n == 0 or m == 0:
        return [], list(range(n)), list(range(m))
    cost = np.array([[mahalanobis(s, z, H_POS, R) for z in obs] for s in states])
    pairs = []
    for i, j in assign(cost):
        if cost[i, j] <= gate:
            pairs.append((i, j))
    mt = {i for i, _ in pairs}
    mo = {j for _, j in pairs}
    return pairs, [i for i in range(n) if i not in mt], [j for j in range(m) if j not in mo]


@dataclass(frozen=True)
class FieldOfView:
    max_range: float = 8.0
    half_angle: float = math.radians(41.6)

    @classmethod
    def from_camera(cls, cam) -> "FieldOfView":
        return cls(cam.max_depth, cam.half_fov)

    def contains(self, point_xy, pose) -> bool:
        pose = np.asarray(pose)
        rel = np.asarray(point_xy, dtype=float) - pose[:2, 3]
        fwd = pose[:2, 1]  # body +y (optical axis) in world
        right = pose[:2, 0]
        ahead = rel @ fwd
        side = rel @ right
        if ahead <= 0:
            return False
        return math.hypot(ahead, side) <= self.max_range and abs(math.atan2(side, ahead)) <= self.half_angle


@dataclass(frozen=True)
class TrackerConfig:
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    init_pos_var: float = 0.25
    init_vel_var: float = 1.0
    gate: float = 9.21  # chi-square, 2 dof, 99 %
    max_sigma_pos: float = 1.0
    max_background_prob: float = 0.9


@dataclass
class Track:
    id: int
    state: KalmanState
    belief: np.ndarray
    created_at: float
    frames_since_observation: int = 0
    last_observation: int | None = None
    in_fov: bool = True

    @property
    def sigma_pos(self) -> float:
        return self.state.sigma_pos

    @property
    def background_probability(self) -> float:
        return background_probability(self.belief)


@dataclass(frozen=True)
class Observation:
    position: tuple[float, float]
    class_id: ClassId

    @classmethod
    def from_detection(cls, det) -> "Observation":
        return cls(tuple(det.position_world), ClassId(det.class_id))


class Tracker:
    """Single-owner multi-target tracker.  Call :meth:`step` once per frame."""

    def __init__(self, config: TrackerConfig | None = None, model: HmmModel | None = None,
                 fov: FieldOfView | None = None):
        self.config = config or TrackerConfig()
        self.model = model or default_model()
        self.fov = fov
        self.tracks: list[Track] = []
        self._next_id = 1
        self.time: float | None = None
        self.deleted: list[tuple[int, str]] = []

    def _new_state(self, z) -> KalmanState:
        c = self.config
        return KalmanState(
            np.array([z[0], z[1], 0.0, 0.0]),
            np.diag([c.init_pos_var, c.init_pos_var, c.init_vel_var, c.init_vel_var]),
        )

    def spawn(self, obs: Observation, t: float) -> Track:
        belief = forward_update(self.model.prior, int(obs.class_id), True, self.model)
        track = Track(self._next_id, self._new_state(obs.position), belief, created_at=t,
                      last_observation=int(obs.class_id))
        self._next_id += 1
        self.tracks.append(track)
        return track

    def step(self, observations, t: float, camera_pose=None, dt: float | None = None) -> list[Track]:
        """Advance all tracks to time ``t`` and incorporate this frame's observations."""
        obs = [o if isinstance(o, Observation) else Observation.from_detection(o) for o in observations]
        if dt is None:
            dt = None if self.time is None else t - self.time
        self.time = t
        cfg = self.config
        R = cfg.noise.R_matrix

        if dt is not None:
            for tr in self.tracks:
                tr.state = predict(tr.state, dt, cfg.noise.q)

        pairs, unmatched_tracks, unmatched_obs = associate(
            [tr.state for tr in self.tracks], [o.position for o in obs], cfg.gate, R
        )
        for i, j in pairs:
            tr = self.tracks[i]
            tr.state = update(tr.state, obs[j].position, R)
            tr.in_fov = True if camera_pose is None or self.fov is None else self.fov.contains(tr.state.position, camera_pose)
            # an associated observation is always used, whatever the FOV test says
            tr.belief = forward_update(tr.belief, int(obs[j].class_id), True, self.model)
            tr.frames_since_observation = 0
            tr.last_observation = int(obs[j].class_id)
        for i in unmatched_tracks:
            tr = self.tracks[i]
            tr.in_fov = True if camera_pose is None or self.fov is None else self.fov.contains(tr.state.position, camera_pose)
            tr.belief = forward_update(tr.belief, None, tr.in_fov, self.model)
            tr.frames_since_observation += 1
            tr.last_observation = None

        survivors = []
        for tr in self.tracks:
            if tr.sigma_pos > cfg.max_sigma_pos:
                self.deleted.append((tr.id, "uncertain"))
            elif tr.background_probability > cfg.max_background_prob:
                self.deleted.append((tr.id, "background"))
            else:
                survivors.append(tr)
        self.tracks = survivors

        for j in unmatched_obs:
            self.spawn(obs[j], t)
        return list(self.tracks)
