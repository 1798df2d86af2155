"""On-disk depth frame format.

A frame directory holds::

    camera.json              intrinsics (CameraModel fields)
    000000.png               16-bit single-channel PNG, depth in millimetres, 0 = invalid
    000000.json              sidecar: {"frame": 0, "timestamp": 0.0,
                                       "camera_pose": [[...4x4...]],
                                       "intrinsics": "camera.json"}

Frame files are numbered by frame id with six digits.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from .camera import CameraModel, DepthFrame
from .errors import ConfigurationError

CAMERA_FILE = "camera.json"


def write_camera(directory, cam: CameraModel) -> Path:
    path = Path(directory) / CAMERA_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(cam.to_dict(), indent=2) + "\n")
    return path


def read_camera(directory) -> CameraModel:
    path = Path(directory) / CAMERA_FILE
    if not path.exists():
        raise ConfigurationError(f"missing {path}")
    return CameraModel.from_dict(json.loads(path.read_text()))


def write_frame(directory, frame: DepthFrame) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = f"{frame.frame_id:06d}"
    img = Image.fromarray(np.ascontiguousarray(frame.depth, dtype=np.uint16))
    img.save(directory / f"{stem}.png")
    meta = {
        "frame": frame.frame_id,
        "timestamp": frame.timestamp,
        "camera_pose": np.asarray(frame.camera_pose).tolist(),
        "intrinsics": CAMERA_FILE,
    }
    (directory / f"{stem}.json").write_text(json.dumps(meta) + "\n")
    return directory / f"{stem}.png"


def read_frame_meta(path) -> dict:
    return json.loads(Path(path).read_text())


def read_frame(png_path) -> DepthFrame:
    png_path = Path(png_path)
    meta = read_frame_meta(png_path.with_suffix(".json"))
    with Image.open(png_path) as img:
        depth = np.asarray(img, dtype=np.uint16)
    return DepthFrame(
        depth=depth,
        timestamp=float(meta["timestamp"]),
        camera_pose=np.asarray(meta["camera_pose"], dtype=float),
        frame_id=int(meta["frame"]),
    )


def frame_paths(directory) -> list[Path]:
    return sorted(p for p in Path(directory).glob("[0-9]*.png"))


def iter_frames(directory) -> Iterator[DepthFrame]:
    for p in frame_paths(directory):
        yield read_frame(p)


def read_frame_index(directory) -> dict[int, dict]:
    """Sidecar metadata of every frame keyed by frame id (no pixel data)."""
    out = {}
    for p in sorted(Path(directory).glob("[0-9]*.json")):
        meta = read_frame_meta(p)
        out[int(meta["frame"])] = meta
    return out
