"""Detection metrics (IoU, AP/MAP, confusion matrix) and CLEAR-MOT tracking metrics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .camera import PixelBox
from .classes import FOREGROUND, M, ClassId
from .detection import box_iou, iou_matrix
from .groundtruth import GroundTruthFrame, GroundTruthObject
from .tracking import assign

__all__ = [
    "GroundTruthFrame", "GroundTruthObject", "ScoredBox", "iou", "average_precision",
    "confusion_matrix", "clear_mot", "MetricReport",
]


def iou(a: PixelBox, b: PixelBox) -> float:
    return box_iou(a, b)


@dataclass(frozen=True)
class ScoredBox:
    """A detection as seen by the detection metrics."""

    frame_id: int
    box: PixelBox
    class_id: ClassId
    score: float

    @classmethod
    def from_detection(cls, det) -> "ScoredBox":
        return cls(det.frame_id, det.box, ClassId(det.class_id), float(det.score))


def _as_scored(detections) -> list[ScoredBox]:
    return [d if isinstance(d, ScoredBox) else ScoredBox.from_detection(d) for d in detections]


def interpolated_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    """Area under the monotone precision envelope (all-points interpolation)."""
    r = np.concatenate([[0.0], recall, [1.0]])
    p = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(p) - 2, -1, -1):
        p[i] = max(p[i], p[i + 1])
    idx = np.flatnonzero(r[1:] != r[:-1]) + 1
    return float(np.sum((r[idx] - r[idx - 1]) * p[idx]))


@dataclass
class PRCurve:
    class_id: ClassId
    scores: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    n_gt: int
    ap: float | None


def _match_class(dets: list[ScoredBox], gt_frames: Mapping[int, GroundTruthFrame], cls: ClassId,
                 iou_thresh: float, include_occluded: bool):
    """Greedy score-ordered matching of one class; returns (tp flags, ignored flags, n_gt)."""
    gts: dict[int, list[GroundTruthObject]] = {}
    n_gt = 0
    for fid, fr in gt_frames.items():
        objs = [o for o in fr.objects if o.class_id == cls]
        gts[fid] = objs
        n_gt += sum(1 for o in objs if include_occluded or not o.occluded)
    claimed = {fid: [False] * len(objs) for fid, objs in gts.items()}
    tp = np.zeros(len(dets), dtype=bool)
    ignored = np.zeros(len(dets), dtype=bool)
    for k, d in enumerate(dets):
        objs = gts.get(d.frame_id, [])
        # best unclaimed box at or above the threshold
        best, best_iou = -1, -1.0
        for j, o in enumerate(objs):
            v = box_iou(d.box, o.box)
            if not claimed[d.frame_id][j] and v >= iou_thresh and v > best_iou:
                best, best_iou = j, v
        if best < 0:
            continue
        claimed[d.frame_id][best] = True
        if not include_occluded and objs[best].occluded:
            ignored[k] = True
        else:
            tp[k] = True
    return tp, ignored, n_gt


def average_precision(detections, ground_truth: Mapping[int, GroundTruthFrame] | Sequence[GroundTruthFrame],
                      iou_thresh: float = 0.5, include_occluded: bool = True) -> dict:
    """Per-class AP at ``iou_thresh`` and their mean.

    Detections are swept in descending score order (ties keep input order); a
    detection is a true positive when it overlaps an unclaimed ground-truth box
    of its class by at least ``iou_thresh``.  Classes without ground truth get
    ``None`` and are left out of the mean.  With ``include_occluded=False``
    occluded ground truth neither counts as a miss nor penalises a detection
    that matches it.
    """
    gt = _gt_map(ground_truth)
    dets = _as_scored(detections)
    curves: dict[ClassId, PRCurve] = {}
    for cls in FOREGROUND:
        cd = [d for d in dets if d.class_id == cls]
        order = sorted(range(len(cd)), key=lambda i: -cd[i].score)
        cd = [cd[i] for i in order]
        tp, ignored, n_gt = _match_class(cd, gt, cls, iou_thresh, include_occluded)
        keep = ~ignored
        tp = tp[keep]
        scores = np.array([d.score for d, k in zip(cd, keep) if k])
        ctp = np.cumsum(tp)
        cfp = np.cumsum(~tp)
        with np.errstate(invalid="ignore", divide="ignore"):
            precision = np.where(ctp + cfp > 0, ctp / np.maximum(ctp + cfp, 1), 0.0)
            recall = ctp / n_gt if n_gt else np.zeros(len(tp))
        ap = interpolated_ap(recall, precision) if n_gt else None
        curves[cls] = PRCurve(cls, scores, precision, recall, n_gt, ap)
    aps = {c.label: curves[c].ap for c in FOREGROUND}
    valid = [v for v in aps.values() if v is not None]
    recall = {c.label: (float(curves[c].recall[-1]) if len(curves[c].recall) and curves[c].n_gt else None)
              for c in FOREGROUND}
    return {
        "ap": aps,
        "map": float(np.mean(valid)) if valid else None,
        "recall": recall,
        "missing_classes": [k for k, v in aps.items() if v is None],
        "curves": curves,
    }


def _gt_map(ground_truth) -> dict[int, GroundTruthFrame]:
    if isinstance(ground_truth, Mapping):
        return dict(ground_truth)
    return {g.frame_id: g for g in ground_truth}


def confusion_matrix(detections, ground_truth, iou_thresh: float = 0.5, include_occluded: bool = True) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class plus a final
    "missed" column.  Detections and ground truth are paired per frame by a
    maximum-IoU assignment ignoring class."""
    gt = _gt_map(ground_truth)
    dets = _as_scored(detections)
    by_frame: dict[int, list[ScoredBox]] = {}
    for d in dets:
        by_frame.setdefault(d.frame_id, []).append(d)
    counts = np.zeros((M, M + 1), dtype=int)
    for fid, fr in gt.items():
        objs = [o for o in fr.objects if include_occluded or not o.occluded]
        if not objs:
            continue
        fd = by_frame.get(fid, [])
        matched = set()
        if fd:
            ious = iou_matrix([o.box for o in objs], [d.box for d in fd])
            for i, j in assign(-ious):
                if ious[i, j] >= iou_thresh:
                    counts[int(objs[i].class_id), int(fd[j].class_id)] += 1
                    matched.add(i)
        for i, o in enumerate(objs):
            if i not in matched:
                counts[int(o.class_id), M] += 1
    return counts


@dataclass
class MotResult:
    motp: float
    mota: float
    misses: int
    false_positives: int
    mismatches: int
    matches: int
    total_gt: int
    mismatch_events: list = field(default_factory=list)  # (frame, gt id, old hyp, new hyp)


def clear_mot(hypotheses: Mapping[int, Mapping[int, Sequence[float]]],
              ground_truth: Mapping[int, Mapping[int, Sequence[float]]],
              match_dist: float = 0.5) -> MotResult:
    """CLEAR-MOT over ground-plane positions.

    Both inputs map frame id -> {object id: (x, y)}.  Correspondences from the
    previous frame are kept while still within ``match_dist``; remaining
    objects are paired by minimum total distance.  A mismatch is counted when
    a ground-truth object is matched to a different hypothesis than the last
    one it was matched to.  MOTP is the mean matched distance in metres.
    """
    frames = sorted(set(hypotheses) | set(ground_truth))
    prev: dict[int, int] = {}  # gt -> hyp in previous frame
    last: dict[int, int] = {}  # gt -> last hyp ever matched
    misses = fps = mismatches = matches = total = 0
    dist_sum = 0.0
    events = []
    for f in frames:
        gts = {k: np.asarray(v, float) for k, v in ground_truth.get(f, {}).items()}
        hyps = {k: np.asarray(v, float) for k, v in hypotheses.get(f, {}).items()}
        total += len(gts)
        cur: dict[int, int] = {}
        for g, h in prev.items():
            if g in gts and h in hyps and np.linalg.norm(gts[g] - hyps[h]) <= match_dist:
                cur[g] = h
        free_g = [g for g in sorted(gts) if g not in cur]
        used_h = set(cur.values())
        free_h = [h for h in sorted(hyps) if h not in used_h]
        if free_g and free_h:
            d = np.array([[np.linalg.norm(gts[g] - hyps[h]) for h in free_h] for g in free_g])
            big = 1e6
            for i, j in assign(np.where(d <= match_dist, d, big)):
                if d[i, j] <= match_dist:
                    cur[free_g[i]] = free_h[j]
        for g, h in sorted(cur.items()):
            if g in last and last[g] != h:
                mismatches += 1
                events.append((f, g, last[g], h))
            last[g] = h
            dist_sum += float(np.linalg.norm(gts[g] - hyps[h]))
        matches += len(cur)
        misses += len(gts) - len(cur)
        fps += len(hyps) - len(cur)
        prev = cur
    motp = dist_sum / matches if matches else float("nan")
    mota = 1.0 - (misses + fps + mismatches) / total if total else float("nan")
    return MotResult(motp, mota, misses, fps, mismatches, matches, total, events)


def gt_positions(ground_truth, include_occluded: bool = True) -> dict[int, dict[int, tuple]]:
    out = {}
    for fid, fr in _gt_map(ground_truth).items():
        out[fid] = {o.person_id: o.position_world for o in fr.objects if include_occluded or not o.occluded}
    return out


def track_positions(track_log: Iterable[dict], fov=None, frame_poses: Mapping[int, np.ndarray] | None = None):
    """frame -> {track id: (x, y)} from track-log records, optionally keeping
    only hypotheses inside the field of view."""
    out: dict[int, dict[int, tuple]] = {}
    for r in track_log:
        pos = (r["x"], r["y"])
        if fov is not None and frame_poses is not None and r["frame"] in frame_poses:
            if not fov.contains(pos, frame_poses[r["frame"]]):
                continue
        out.setdefault(int(r["frame"]), {})[int(r["track_id"])] = pos
    return out


@dataclass
class MetricReport:
    ap: dict
    map: float | None
    recall: dict
    confusion: list
    motp: float | None = None
    mota: float | None = None
    misses: int | None = None
    false_positives: int | None = None
    mismatches: int | None = None
    matches: int | None = None
    total_gt: int | None = None

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, float) and math.isnan(v):
                return None
            return v

        d = {k: clean(v) for k, v in asdict(self).items()}
        return json.dumps(d, indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = ["Detection"]
        for name, v in self.ap.items():
            lines.append(f"  AP {name:16s} " + ("n/a" if v is None else f"{v:.4f}"))
        lines.append("  MAP                 " + ("n/a" if self.map is None else f"{self.map:.4f}"))
        lines.append("Confusion (rows true, cols predicted + missed)")
        header = " ".join(f"{c.label[:6]:>7s}" for c in FOREGROUND) + "  missed"
        lines.append(" " * 18 + header)
        for c, row in zip(FOREGROUND, self.confusion):
            lines.append(f"  {c.label:15s} " + " ".join(f"{x:7d}" for x in row))
        if self.mota is not None:
            lines.append("Tracking")
            lines.append(f"  MOTA {self.mota:.4f}   MOTP {self.motp:.4f} m")
            lines.append(f"  misses {self.misses}  false positives {self.false_positives}  "
                         f"mismatches {self.mismatches}  matches {self.matches}  gt {self.total_gt}")
        return "\n".join(lines)


def evaluate(detections, ground_truth, track_log=None, iou_thresh: float = 0.5, match_dist: float = 0.5,
             include_occluded: bool = True, fov=None, frame_poses=None) -> tuple[MetricReport, dict]:
    """Full report plus the raw AP result (with PR curves)."""
    ap = average_precision(detections, ground_truth, iou_thresh, include_occluded)
    cm = confusion_matrix(detections, ground_truth, iou_thresh, include_occluded)
    report = MetricReport(ap["ap"], ap["map"], ap["recall"], cm.tolist())
    if track_log is not None:
        mot = clear_mot(track_positions(track_log, fov, frame_poses), gt_positions(ground_truth, include_occluded),
                        match_dist)
        report.motp, report.mota = mot.motp, mot.mota
        report.misses, report.false_positives = mot.misses, mot.false_positives
        report.mismatches, report.matches, report.total_gt = mot.mismatches, mot.matches, mot.total_gt
    return report, ap
