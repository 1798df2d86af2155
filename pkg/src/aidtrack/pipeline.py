"""End-to-end orchestration: detection, tracking, class belief, guidance."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, fields, is_dataclass
from typing import Iterable

import numpy as np

from . import logs
from .belief import HmmModel, class_probabilities
from .camera import CameraModel, DepthFrame
from .classes import M, ClassId
from .detection import DetectionConfig, OracleScorer, Scorer, confusion_with_diagonal, detect_frame
from .errors import ConfigurationError, PipelineError
from .evaluation import evaluate
from .proposals import ProposalConfig, TemplateSet
from .segmentation import SegmentationConfig
from .tracking import FieldOfView, NoiseConfig, Track, Tracker, TrackerConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AreaOfInterest:
    """Region in front of the robot that triggers guidance."""

    max_range: float = 3.0
    half_angle: float = math.radians(20.0)

    def contains(self, point_xy, pose) -> bool:
        return FieldOfView(self.max_range, self.half_angle).contains(point_xy, pose)


@dataclass(frozen=True)
class HmmConfig:
    """Parameters of :meth:`HmmModel.from_confusion`; ``model_file`` overrides them."""

    detection_prob: float = 0.8
    clutter_prior: float = 0.02
    clutter_background: float = 0.32
    stay: float = 0.994
    to_clutter: float = 0.001
    clutter_exit: float = 0.01
    model_file: str | None = None


@dataclass(frozen=True)
class ScorerConfig:
    kind: str = "oracle"  # oracle | mock
    confusion_diagonal: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class PipelineConfig:
    camera: CameraModel = field(default_factory=CameraModel)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    hmm: HmmConfig = field(default_factory=HmmConfig)
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    fov: FieldOfView | None = None  # None: derived from the camera
    area: AreaOfInterest = field(default_factory=AreaOfInterest)
    max_skip_ratio: float = 0.1
    # per-class guidance speed (m/s); no values are assumed
    guidance_speed: dict = field(default_factory=dict)

    @property
    def field_of_view(self) -> FieldOfView:
        return self.fov or FieldOfView.from_camera(self.camera)

    def confusion(self) -> np.ndarray:
        return confusion_with_diagonal(self.scorer.confusion_diagonal)

    def hmm_model(self) -> HmmModel:
        h = self.hmm
        if h.model_file:
            from .belief import load_model

            return load_model(h.model_file)
        return HmmModel.from_confusion(
            self.confusion(), h.detection_prob, h.clutter_prior, h.clutter_background,
            h.stay, h.to_clutter, h.clutter_exit,
        )

    # -- (de)serialisation ------------------------------------------------
    def to_dict(self) -> dict:
        return _to_plain(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return _from_plain(cls, d)

    def with_overrides(self, overrides: dict) -> "PipelineConfig":
        """Apply dotted-key overrides, e.g. ``{"tracker.gate": 12.0}``."""
        data = self.to_dict()
        for key, value in overrides.items():
            node = data
            parts = key.split(".")
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ConfigurationError(f"unknown config section {key!r}")
                node = node[p]
            if parts[-1] not in node:
                raise ConfigurationError(f"unknown config key {key!r}")
            node[parts[-1]] = value
        return PipelineConfig.from_dict(data)


def _to_plain(obj):
    if is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_to_plain(x) for x in obj]
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    return obj


_NESTED = {
    "camera": CameraModel,
    "detection": DetectionConfig,
    "proposals": ProposalConfig,
    "templates": TemplateSet,
    "segmentation": SegmentationConfig,
    "tracker": TrackerConfig,
    "noise": NoiseConfig,
    "hmm": HmmConfig,
    "scorer": ScorerConfig,
    "fov": FieldOfView,
    "area": AreaOfInterest,
}


def _from_plain(cls, d):
    if d is None:
        return None
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigurationError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    kwargs = {}
    for k, v in d.items():
        if k in _NESTED and isinstance(v, dict):
            kwargs[k] = _from_plain(_NESTED[k], v)
        elif k == "R":
            kwargs[k] = tuple(tuple(float(x) for x in row) for row in v)
        else:
            kwargs[k] = v
    return cls(**kwargs)


def build_scorer(config: PipelineConfig, ground_truth=None) -> Scorer:
    if config.scorer.kind == "oracle":
        if ground_truth is None:
            raise ConfigurationError("the oracle scorer needs ground truth")
        return OracleScorer(ground_truth, config.confusion(), seed=config.scorer.seed)
    raise ConfigurationError(f"scorer {config.scorer.kind!r} cannot be built from configuration alone")


def detection_record(det) -> dict:
    return {
        "frame": det.frame_id,
        "box": det.box.as_list(),
        "class": det.class_id.label,
        "scores": list(det.scores),
        "pos_cam": list(det.position_cam),
        "pos_world": list(det.position_world),
    }


def track_record(frame_id: int, tr: Track) -> dict:
    m = tr.state.mean
    return {
        "frame": frame_id,
        "track_id": tr.id,
        "x": float(m[0]),
        "y": float(m[1]),
        "vx": float(m[2]),
        "vy": float(m[3]),
        "sigma_pos": tr.sigma_pos,
        "belief": [float(b) for b in tr.belief],
    }


@dataclass
class RunResult:
    detections: list[dict]
    tracks: list[dict]
    stats: dict
    frames: list[dict] = field(default_factory=list)  # per-frame {frame, timestamp, camera_pose}


def track_frames(per_frame_detections, config: PipelineConfig, frame_meta):
    """Run the tracker over already computed detections.

    ``per_frame_detections`` maps frame id to a list of observations (or
    Detection objects); ``frame_meta`` is an ordered list of dicts with
    ``frame``, ``timestamp`` and ``camera_pose``.
    """
    tracker = Tracker(config.tracker, config.hmm_model(), config.field_of_view)
    records = []
    for meta in frame_meta:
        fid = int(meta["frame"])
        tracks = tracker.step(per_frame_detections.get(fid, []), float(meta["timestamp"]),
                              np.asarray(meta["camera_pose"]))
        records.extend(track_record(fid, tr) for tr in tracks)
    return records, tracker


def run(frames: Iterable[DepthFrame], config: PipelineConfig, scorer: Scorer) -> RunResult:
    """Detect and track over a time-ordered frame sequence."""
    cam = config.camera
    tracker = Tracker(config.tracker, config.hmm_model(), config.field_of_view)
    det_log, track_log, frame_log = [], [], []
    timings = {"detect": [], "track": []}
    proposals, skipped, n = [], [], 0
    last_t = None
    for frame in frames:
        n += 1
        if last_t is not None and frame.timestamp <= last_t:
            raise PipelineError("frames must be strictly time-ordered")
        last_t = frame.timestamp
        t0 = time.perf_counter()
        try:
            result = detect_frame(frame, cam, config.detection, scorer)
        except Exception as exc:  # a bad frame is skipped, not fatal
            log.warning("frame %d skipped: %s", frame.frame_id, exc)
            skipped.append(frame.frame_id)
            continue
        t1 = time.perf_counter()
        tracks = tracker.step(result.detections, frame.timestamp, frame.camera_pose)
        t2 = time.perf_counter()
        det_log.extend(detection_record(d) for d in result.detections)
        track_log.extend(track_record(frame.frame_id, tr) for tr in tracks)
        frame_log.append({"frame": frame.frame_id, "timestamp": frame.timestamp,
                          "camera_pose": np.asarray(frame.camera_pose).tolist()})
        timings["detect"].append(t1 - t0)
        timings["track"].append(t2 - t1)
        proposals.append(result.stats.get("proposals", 0))
    if n and len(skipped) > config.max_skip_ratio * n:
        raise PipelineError(f"{len(skipped)} of {n} frames failed")
    stats = {
        "frames": n,
        "skipped_frames": skipped,
        "mean_proposals": float(np.mean(proposals)) if proposals else 0.0,
        "median_detect_s": float(np.median(timings["detect"])) if proposals else 0.0,
        "median_track_s": float(np.median(timings["track"])) if proposals else 0.0,
        "deleted_tracks": [list(x) for x in tracker.deleted],
    }
    return RunResult(det_log, track_log, stats, frame_log)


def evaluate_logs(detections, tracks, ground_truth, config: PipelineConfig, frame_meta=None,
                  include_occluded: bool = True):
    """MetricReport and AP curves from detection/track log records.

    With ``frame_meta`` the track hypotheses are restricted to the field of
    view, matching how ground truth only covers visible people.
    """
    poses = {m["frame"]: np.asarray(m["camera_pose"]) for m in frame_meta} if frame_meta else None
    return evaluate(logs.scored_boxes(detections), ground_truth, tracks, include_occluded=include_occluded,
                    fov=config.field_of_view if poses else None, frame_poses=poses)


# -- guidance -------------------------------------------------------------------

@dataclass(frozen=True)
class GuidanceDecision:
    action: str  # wait | stairs | elevator
    class_id: ClassId | None = None
    dwell: float = 0.0
    track_id: int | None = None


DWELL_SECONDS = 4.0
CONFIDENCE = 0.90


def guidance_decision(history: dict[int, list[tuple[float, bool, np.ndarray]]], now: float,
                      dwell_s: float = DWELL_SECONDS, confidence: float = CONFIDENCE) -> GuidanceDecision:
    """Decide where to guide, given per-track ``(t, inside_area, belief)`` histories.

    A track qualifies when it has been inside the area continuously for at
    least ``dwell_s`` up to ``now`` and its most confident class reaches
    ``confidence``.  Pedestrians go to the stairs, everyone else to the
    elevator.  Among qualifying tracks the longest dwell wins.
    """
    best = None
    for tid in sorted(history):
        entries = [e for e in history[tid] if e[0] <= now + 1e-9]
        if not entries or not entries[-1][1] or entries[-1][0] < now - 1e-9:
            continue
        start = entries[-1][0]
        for t, inside, _ in reversed(entries):
            if not inside:
                break
            start = t
        dwell = now - start
        if dwell + 1e-9 < dwell_s:
            continue
        belief = np.asarray(entries[-1][2], dtype=float)
        probs = belief[:M]
        c = int(np.argmax(probs))
        if probs[c] + 1e-12 < confidence:
            continue
        if best is None or dwell > best.dwell:
            action = "stairs" if c == ClassId.PEDESTRIAN else "elevator"
            best = GuidanceDecision(action, ClassId(c), dwell, tid)
    return best or GuidanceDecision("wait")


class GuidanceMonitor:
    """Accumulates track states frame by frame and applies :func:`guidance_decision`."""

    def __init__(self, area: AreaOfInterest | None = None, dwell_s: float = DWELL_SECONDS,
                 confidence: float = CONFIDENCE):
        self.area = area or AreaOfInterest()
        self.dwell_s = dwell_s
        self.confidence = confidence
        self.history: dict[int, list] = {}

    def observe(self, t: float, tracks, camera_pose) -> GuidanceDecision:
        for tr in tracks:
            if isinstance(tr, dict):
                tid, pos, belief = tr["track_id"], (tr["x"], tr["y"]), tr["belief"]
            else:
                tid, pos, belief = tr.id, tr.state.position, tr.belief
            inside = self.area.contains(pos, camera_pose)
            self.history.setdefault(tid, []).append((t, inside, np.asarray(belief, dtype=float)))
        return guidance_decision(self.history, t, self.dwell_s, self.confidence)


def belief_argmax(belief) -> ClassId:
    return ClassId(int(np.argmax(np.asarray(belief))))


def class_argmax(belief) -> ClassId:
    return ClassId(int(np.argmax(class_probabilities(belief))))


def replay_guidance(result: RunResult, monitor: GuidanceMonitor | None = None):
    """Feed a run's track log to a monitor frame by frame.

    Returns ``(decision, time)`` for the first non-wait decision, or
    ``(wait, None)`` if nobody qualified.
    """
    monitor = monitor or GuidanceMonitor()
    by_frame: dict[int, list] = {}
    for r in result.tracks:
        by_frame.setdefault(r["frame"], []).append(r)
    for meta in result.frames:
        d = monitor.observe(meta["timestamp"], by_frame.get(meta["frame"], []), np.asarray(meta["camera_pose"]))
        if d.action != "wait":
            return d, meta["timestamp"]
    return GuidanceDecision("wait"), None
