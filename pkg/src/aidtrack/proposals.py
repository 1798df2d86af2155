"""Region proposals: local sliding templates around point cloud segments,
plus the dense multi-scale sliding-window baseline."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraModel, DepthFrame, PixelBox, depth_to_cloud, metric_box
from .errors import ConfigurationError, DegenerateProjectionError, NoPlaneFoundError
from .segmentation import (
    Segment,
    SegmentationConfig,
    euclidean_cluster,
    fit_ground_plane,
    remove_plane,
)


@dataclass(frozen=True)
class TemplateSet:
    person_width: float = 0.4
    person_height: float = 1.75

    def __post_init__(self):
        if self.person_width <= 0 or self.person_height <= 0:
            raise ConfigurationError("template dimensions must be positive")

    @property
    def templates(self) -> tuple[tuple[float, float], ...]:
        """(width_m, height_m) of T1..T5."""
        w, h = self.person_width, self.person_height
        return (
            (w, h),
            (w * 5 / 3, h),
            (w * 7 / 3, h),
            (w, h * 3 / 4),
            (w * 5 / 3, h * 3 / 4),
        )

    def __len__(self):
        return 5


@dataclass(frozen=True)
class ProposalConfig:
    l: int = 5
    stride_px: int = 20
    templates: TemplateSet = field(default_factory=TemplateSet)

    def __post_init__(self):
        if self.l < 1 or self.l % 2 == 0:
            raise ConfigurationError("l must be a positive odd number")
        if self.stride_px < 1:
            raise ConfigurationError("stride must be at least one pixel")

    @property
    def offsets(self) -> list[int]:
        half = (self.l - 1) // 2
        return [k * self.stride_px for k in range(-half, half + 1)]


@dataclass(frozen=True)
class Proposal:
    box: PixelBox
    segment_id: int
    template_id: int  # 1..5
    offset_px: int


def segment_proposals(segment: Segment, cam: CameraModel, cfg: ProposalConfig, segment_id: int = 0) -> list[Proposal]:
    """Project the five templates at the segment centroid and slide each
    horizontally to ``l`` positions.  Boxes clipped away entirely are dropped."""
    out = []
    for t, (w, h) in enumerate(cfg.templates.templates, start=1):
        base = metric_box(segment.centroid, w, h, cam)
        for off in cfg.offsets:
            box = base.shifted(du=off).clamped(cam)
            if box is not None:
                out.append(Proposal(box, segment_id, t, off))
    return out


DEFAULT_DENSE_SCALES = (0.6, 0.8, 1.0, 1.3, 1.7)


def template_pixel_sizes(cam: CameraModel, templates: TemplateSet, scales, reference_depth: float = 2.0):
    """Integer pixel (w, h) of every template at every scale, scale-major order."""
    sizes = []
    for s in scales:
        for w, h in templates.templates:
            sizes.append((int(round(w * cam.fx / reference_depth * s)), int(round(h * cam.fy / reference_depth * s))))
    return sizes


def dense_proposal_array(cam: CameraModel, templates: TemplateSet | None = None, scales=DEFAULT_DENSE_SCALES,
                         stride_px: int = 10, reference_depth: float = 2.0) -> np.ndarray:
    """All dense sliding-window boxes as an (N, 4) array of [u0, v0, u1, v1]."""
    if len(scales) == 0:
        raise ConfigurationError("dense proposals need at least one scale")
    templates = templates or TemplateSet()
    chunks = []
    for w, h in template_pixel_sizes(cam, templates, scales, reference_depth):
        if w < 1 or h < 1 or w > cam.width or h > cam.height:
            continue
        us = np.arange(0, cam.width - w + 1, stride_px)
        vs = np.arange(0, cam.height - h + 1, stride_px)
        vv, uu = np.meshgrid(vs, us, indexing="ij")
        uu, vv = uu.ravel(), vv.ravel()
        chunks.append(np.column_stack([uu, vv, uu + w, vv + h]))
    if not chunks:
        return np.zeros((0, 4))
    return np.concatenate(chunks).astype(float)


def dense_proposals(cam: CameraModel, templates: TemplateSet | None = None, scales=DEFAULT_DENSE_SCALES,
                    stride_px: int = 10, reference_depth: float = 2.0) -> list[PixelBox]:
    arr = dense_proposal_array(cam, templates, scales, stride_px, reference_depth)
    return [PixelBox(*row) for row in arr.tolist()]


@dataclass
class FrameProposals:
    proposals: list[Proposal]
    segments: list[Segment]
    stats: dict


def frame_proposals(frame: DepthFrame, cam: CameraModel, cfg: ProposalConfig | None = None,
                    seg: SegmentationConfig | None = None) -> FrameProposals:
    """Depth frame -> cloud -> ground removal -> clusters -> sliding templates."""
    cfg = cfg or ProposalConfig()
    seg = seg or SegmentationConfig()
    t0 = time.perf_counter()
    stats = {"points": 0, "plane_found": False, "segments": 0, "skipped_segments": 0, "proposals": 0}

    pts = depth_to_cloud(frame, cam, stride=seg.cloud_stride)
    stats["points"] = int(len(pts))
    t1 = time.perf_counter()
    if len(pts) >= 3:
        try:
            plane = fit_ground_plane(pts, seg.ransac_iterations, seg.inlier_dist, seg.seed, seg.ransac_sample)
            pts = remove_plane(pts, plane, seg.remove_dist)
            stats["plane_found"] = True
        except NoPlaneFoundError:
            pass
    t2 = time.perf_counter()
    segments = euclidean_cluster(pts, seg.link_dist, seg.min_cluster_size, seg.max_cluster_size)
    t3 = time.perf_counter()

    kept, proposals = [], []
    for s in segments:
        try:
            props = segment_proposals(s, cam, cfg, segment_id=len(kept))
        except DegenerateProjectionError:
            stats["skipped_segments"] += 1
            continue
        if not props:
            stats["skipped_segments"] += 1
            continue
        kept.append(s)
        proposals.extend(props)
    t4 = time.perf_counter()
    stats.update(
        segments=len(kept),
        proposals=len(proposals),
        t_cloud=t1 - t0,
        t_plane=t2 - t1,
        t_cluster=t3 - t2,
        t_project=t4 - t3,
        t_total=t4 - t0,
    )
    return FrameProposals(proposals, kept, stats)
