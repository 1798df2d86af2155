"""JSON-lines logs: detections, tracks, ground truth, proposals, frame metadata."""

from __future__ import annotations

import json
from typing import Iterable, Iterator

import numpy as np

from .camera import PixelBox
from .classes import ClassId
from .detection import Detection
from .evaluation import ScoredBox
from .groundtruth import GroundTruthFrame, GroundTruthObject
from .proposals import Proposal


def dumps(record: dict) -> str:
    # sorted keys and repr floats keep logs byte-stable and lossless
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def write_jsonl(path, records: Iterable[dict]) -> int:
    n = 0
    with open(path, "w") as fh:
        for r in records:
            fh.write(dumps(r) + "\n")
            n += 1
    return n


def read_jsonl(path) -> Iterator[dict]:
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def gt_records(frame: GroundTruthFrame) -> list[dict]:
    return [
        {
            "frame": frame.frame_id,
            "timestamp": frame.timestamp,
            "box": o.box.as_list(),
            "class": o.class_id.label,
            "pos_world": list(o.position_world),
            "person_id": o.person_id,
            "occluded": bool(o.occluded),
            "visible_fraction": o.visible_fraction,
        }
        for o in frame.objects
    ]


def empty_gt_record(frame: GroundTruthFrame) -> dict:
    """Marks a frame with no visible people, so it still counts in evaluation."""
    return {"frame": frame.frame_id, "timestamp": frame.timestamp, "empty": True}


def write_ground_truth(path, frames: Iterable[GroundTruthFrame]) -> None:
    records = []
    for f in frames:
        records.extend(gt_records(f) if f.objects else [empty_gt_record(f)])
    write_jsonl(path, records)


def read_ground_truth(path) -> dict[int, GroundTruthFrame]:
    objs: dict[int, list] = {}
    stamps: dict[int, float] = {}
    for r in read_jsonl(path):
        fid = int(r["frame"])
        stamps[fid] = r.get("timestamp", 0.0)
        objs.setdefault(fid, [])
        if r.get("empty"):
            continue
        objs[fid].append(
            GroundTruthObject(
                PixelBox.from_list(r["box"]),
                ClassId.parse(r["class"]),
                tuple(r["pos_world"]),
                int(r["person_id"]),
                bool(r.get("occluded", False)),
                float(r.get("visible_fraction", 1.0)),
            )
        )
    return {fid: GroundTruthFrame(fid, tuple(objs[fid]), stamps[fid]) for fid in sorted(objs)}


def detection_from_record(r: dict) -> Detection:
    return Detection(
        PixelBox.from_list(r["box"]),
        ClassId.parse(r["class"]),
        tuple(r["scores"]),
        tuple(r["pos_cam"]),
        tuple(r["pos_world"]),
        int(r["frame"]),
    )


def read_detections(path) -> list[Detection]:
    return [detection_from_record(r) for r in read_jsonl(path)]


def scored_boxes(records: Iterable[dict]) -> list[ScoredBox]:
    out = []
    for r in records:
        c = ClassId.parse(r["class"])
        out.append(ScoredBox(int(r["frame"]), PixelBox.from_list(r["box"]), c, float(r["scores"][int(c)])))
    return out


def proposal_record(frame_id: int, p: Proposal) -> dict:
    return {
        "frame": frame_id,
        "segment_id": p.segment_id,
        "box": p.box.as_list(),
        "template_id": p.template_id,
        "offset_px": p.offset_px,
    }


def detections_by_frame(records: Iterable[dict]) -> dict[int, list[Detection]]:
    out: dict[int, list[Detection]] = {}
    for r in records:
        d = detection_from_record(r)
        out.setdefault(d.frame_id, []).append(d)
    return out


def frame_meta_record(frame) -> dict:
    return {"frame": frame.frame_id, "timestamp": frame.timestamp,
            "camera_pose": np.asarray(frame.camera_pose).tolist()}
