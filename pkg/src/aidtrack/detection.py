"""Per-segment classification of proposals, NMS and 3D localisation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .camera import CameraModel, DepthFrame, PixelBox, camera_to_world
from .classes import FOREGROUND, M, N_CATEGORIES, ClassId
from .errors import ConfigurationError
from .groundtruth import GroundTruthFrame
from .proposals import ProposalConfig, frame_proposals
from .segmentation import Segment, SegmentationConfig


def box_iou(a: PixelBox, b: PixelBox) -> float:
    iw = min(a.u_max, b.u_max) - max(a.u_min, b.u_min)
    ih = min(a.v_max, b.v_max) - max(a.v_min, b.v_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    a = np.asarray([b.as_list() for b in boxes_a], dtype=float).reshape(-1, 4)
    b = np.asarray([x.as_list() for x in boxes_b], dtype=float).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(union > 0, inter / union, 0.0)
    return out


def check_scores(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    if s.ndim != 2 or s.shape[1] != N_CATEGORIES:
        raise ConfigurationError(f"score vectors must have {N_CATEGORIES} entries")
    if np.any(s < -1e-12) or np.any(s > 1 + 1e-12) or np.any(np.abs(s.sum(axis=1) - 1) > 1e-6):
        raise ConfigurationError("score vectors must be probability vectors")
    return s


@dataclass(frozen=True)
class Detection:
    box: PixelBox
    class_id: ClassId
    scores: tuple[float, ...]
    position_cam: tuple[float, float, float]
    position_world: tuple[float, float]
    frame_id: int = 0
    segment_id: int = -1

    @property
    def score(self) -> float:
        return self.scores[int(self.class_id)]


class Scorer(Protocol):
    def scores(self, frame: DepthFrame, boxes: Sequence[PixelBox]) -> np.ndarray:
        """One probability vector over the six categories per box, shape (N, 6)."""
        ...


def peaked_scores(label: int, peak: float = 0.9) -> np.ndarray:
    s = np.full(N_CATEGORIES, (1.0 - peak) / (N_CATEGORIES - 1))
    s[label] = peak
    return s


class MockScorer:
    """Scores looked up by ``(frame_id, rounded box)``; unknown boxes score as background."""

    def __init__(self, table: dict | None = None, default=None, ndigits: int = 1):
        self.ndigits = ndigits
        self.table = {}
        for (fid, box), s in (table or {}).items():
            self.set(fid, box, s)
        self.default = np.asarray(default if default is not None else peaked_scores(ClassId.BACKGROUND, 1.0))

    def _key(self, frame_id: int, box) -> tuple:
        vals = box.as_list() if isinstance(box, PixelBox) else list(box)
        return (int(frame_id), tuple(round(float(x), self.ndigits) for x in vals))

    def set(self, frame_id: int, box, scores) -> None:
        self.table[self._key(frame_id, box)] = np.asarray(scores, dtype=float)

    def scores(self, frame: DepthFrame, boxes) -> np.ndarray:
        out = [self.table.get(self._key(frame.frame_id, b), self.default) for b in boxes]
        return check_scores(np.array(out).reshape(-1, N_CATEGORIES))


def confusion_with_diagonal(p: float) -> np.ndarray:
    """5x5 row-stochastic matrix with ``p`` on the diagonal, rest spread evenly."""
    c = np.full((M, M), (1.0 - p) / (M - 1))
    np.fill_diagonal(c, p)
    return c


class OracleScorer:
    """Labels ROIs by overlap with simulator ground truth and passes the label
    through a confusion matrix.

    IoU > ``pos_iou`` gives the overlapped person's class, anything else is
    background.  The confused label is drawn once per (frame, person), so all
    proposals of one person in one frame agree and the per-frame observation
    follows ``confusion`` exactly.  ``confusion`` is M x M (rows true class)
    or M x (M+1) with a final misdetection column.
    """

    def __init__(self, ground_truth: dict[int, GroundTruthFrame], confusion=None, seed: int = 0,
                 pos_iou: float = 0.6, neg_iou: float = 0.4, peak: float = 0.9):
        self.ground_truth = ground_truth
        c = np.eye(M) if confusion is None else np.asarray(confusion, dtype=float)
        if c.shape[1] == M:
            c = np.hstack([c, np.zeros((M, 1))])
        if c.shape != (M, M + 1) or np.any(c < 0) or np.any(np.abs(c.sum(axis=1) - 1) > 1e-9):
            raise ConfigurationError("confusion must be row-stochastic with shape (5, 5) or (5, 6)")
        self.confusion = c
        self.seed = seed
        self.pos_iou = pos_iou
        self.neg_iou = neg_iou
        self.peak = peak
        self._draws: dict[tuple[int, int], int] = {}

    def label_for(self, frame_id: int, person_id: int, true_class: ClassId) -> int:
        key = (frame_id, person_id)
        if key not in self._draws:
            rng = np.random.default_rng([self.seed, frame_id, person_id])
            self._draws[key] = int(rng.choice(M + 1, p=self.confusion[int(true_class)]))
        return self._draws[key]

    def scores(self, frame: DepthFrame, boxes) -> np.ndarray:
        boxes = list(boxes)
        out = np.tile(peaked_scores(ClassId.BACKGROUND, self.peak), (len(boxes), 1))
        gt = self.ground_truth.get(frame.frame_id)
        if gt is None or not gt.objects or not boxes:
            return out
        ious = iou_matrix(boxes, [o.box for o in gt.objects])
        best = ious.argmax(axis=1)
        for r, j in enumerate(best):
            # the (neg_iou, pos_iou] band is ambiguous and scored as background
            if ious[r, j] > self.pos_iou:
                obj = gt.objects[j]
                label = self.label_for(frame.frame_id, obj.person_id, obj.class_id)
                out[r] = peaked_scores(label, self.peak)
        return out


def vote_segment_class(scores) -> tuple[ClassId, np.ndarray]:
    """Majority vote over per-proposal argmax classes of one segment.

    Only proposals whose argmax is a person class vote; the segment is
    background when none does.  Ties go to the class with the higher mean
    winning score, then to the lower class index.  Returns the winning class
    and the mean score vector of its voters.
    """
    s = np.atleast_2d(np.asarray(scores, dtype=float))
    if len(s) == 0:
        raise ConfigurationError("cannot vote without proposals")
    votes = s.argmax(axis=1)
    fg = votes != ClassId.BACKGROUND
    if not fg.any():
        return ClassId.BACKGROUND, s.mean(axis=0)
    best_key, best_cls = None, None
    for c in FOREGROUND:
        voters = fg & (votes == c)
        n = int(voters.sum())
        if n == 0:
            continue
        key = (n, s[voters, c].mean(), -int(c))
        if best_key is None or key > best_key:
            best_key, best_cls = key, c
    voters = votes == best_cls
    return best_cls, s[voters].mean(axis=0)


def nms(detections: Sequence[Detection], iou_threshold: float = 0.3) -> list[Detection]:
    """Greedy class-agnostic suppression by winning-class score."""
    order = sorted(detections, key=lambda d: (-d.score, d.box.as_list(), int(d.class_id)))
    kept: list[Detection] = []
    for d in order:
        if all(box_iou(d.box, k.box) <= iou_threshold for k in kept):
            kept.append(d)
    return kept


def locate_segment(segment: Segment, box: PixelBox, frame: DepthFrame, cam: CameraModel):
    """Camera-frame position from the box centre at the segment's median depth,
    plus its ground-plane world position."""
    z = float(np.median(segment.points[:, 2]))
    u, v = box.center
    p_cam = cam.back_project(u, v, z)
    w = camera_to_world(p_cam[None, :], frame.camera_pose)[0]
    return (float(p_cam[0]), float(p_cam[1]), float(p_cam[2])), (float(w[0]), float(w[1]))


@dataclass(frozen=True)
class DetectionConfig:
    proposals: ProposalConfig = field(default_factory=ProposalConfig)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    nms_threshold: float = 0.3


@dataclass
class FrameDetections:
    detections: list[Detection]
    stats: dict


def detect_frame(frame: DepthFrame, cam: CameraModel, cfg: DetectionConfig, scorer: Scorer) -> FrameDetections:
    fp = frame_proposals(frame, cam, cfg.proposals, cfg.segmentation)
    stats = dict(fp.stats)
    if not fp.proposals:
        stats.update(candidates=0, detections=0)
        return FrameDetections([], stats)
    scores = check_scores(scorer.scores(frame, [p.box for p in fp.proposals]))
    if len(scores) != len(fp.proposals):
        raise ConfigurationError("scorer returned the wrong number of score vectors")
    seg_ids = np.array([p.segment_id for p in fp.proposals])
    candidates = []
    for sid, segment in enumerate(fp.segments):
        rows = np.flatnonzero(seg_ids == sid)
        if len(rows) == 0:
            continue
        cls, mean_scores = vote_segment_class(scores[rows])
        if cls == ClassId.BACKGROUND:
            continue
        # report the best-scoring box among the winning class's voters
        voters = rows[scores[rows].argmax(axis=1) == cls]
        r = voters[np.argmax(scores[voters, cls])]
        box = fp.proposals[r].box
        pos_cam, pos_world = locate_segment(segment, box, frame, cam)
        candidates.append(
            Detection(box, cls, tuple(float(x) for x in mean_scores), pos_cam, pos_world, frame.frame_id, sid)
        )
    dets = nms(candidates, cfg.nms_threshold)
    stats.update(candidates=len(candidates), detections=len(dets))
    return FrameDetections(dets, stats)
