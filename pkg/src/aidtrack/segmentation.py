"""Ground plane removal (RANSAC) and Euclidean clustering of point clouds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import InsufficientDataError, NoPlaneFoundError


@dataclass(frozen=True)
class PlaneModel:
    normal: tuple[float, float, float]
    offset: float
    inlier_count: int

    def distance(self, points) -> np.ndarray:
        """Signed distance; the camera origin is on the positive side."""
        return np.asarray(points, dtype=float) @ np.asarray(self.normal) + self.offset


@dataclass(frozen=True)
class Segment:
    indices: np.ndarray
    centroid: np.ndarray
    points: np.ndarray

    @property
    def count(self) -> int:
        return int(len(self.indices))


@dataclass(frozen=True)
class SegmentationConfig:
    ransac_iterations: int = 200
    inlier_dist: float = 0.03
    remove_dist: float = 0.03
    link_dist: float = 0.15
    min_cluster_size: int = 200
    max_cluster_size: int | None = None
    # pixel decimation applied before building the cloud
    cloud_stride: int = 4
    # candidate planes are scored on a subsample of at most this many points
    ransac_sample: int = 3000
    seed: int = 0


def _plane_through(p0, p1, p2):
    n = np.cross(p1 - p0, p2 - p0)
    norm = np.linalg.norm(n, axis=-1)
    return n, norm


def fit_ground_plane(
    points,
    iterations: int = 200,
    inlier_dist: float = 0.03,
    seed: int = 0,
    score_sample: int | None = 3000,
    min_inlier_ratio: float = 0.1,
) -> PlaneModel:
    """Fit the dominant plane with RANSAC, then refine it on its inliers.

    Hypotheses are scored on a random subsample of ``score_sample`` points
    (all points when None or when the cloud is smaller); the winner is
    refit by least squares on its full inlier set.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n < 3:
        raise InsufficientDataError("RANSAC needs at least 3 points")
    rng = np.random.default_rng(seed)

    idx = np.stack([rng.choice(n, size=3, replace=False) for _ in range(iterations)])
    normals, norms = _plane_through(pts[idx[:, 0]], pts[idx[:, 1]], pts[idx[:, 2]])
    ok = norms > 1e-12
    if not ok.any():
        raise NoPlaneFoundError("all minimal samples were degenerate")
    normals = normals[ok] / norms[ok, None]
    offsets = -np.einsum("ij,ij->i", normals, pts[idx[ok, 0]])

    if score_sample is not None and n > score_sample:
        eval_pts = pts[rng.choice(n, size=score_sample, replace=False)]
    else:
        eval_pts = pts
    counts = (np.abs(eval_pts @ normals.T + offsets) <= inlier_dist).sum(axis=0)
    best = int(np.argmax(counts))
    normal, offset = normals[best], offsets[best]

    inliers = np.abs(pts @ normal + offset) <= inlier_dist
    if inliers.sum() >= 3:
        sel = pts[inliers]
        c = sel.mean(axis=0)
        _, _, vt = np.linalg.svd(sel - c, full_matrices=False)
        refined = vt[-1]
        if refined @ normal < 0:
            refined = -refined
        r_off = -refined @ c
        r_in = np.abs(pts @ refined + r_off) <= inlier_dist
        if r_in.sum() >= inliers.sum():
            normal, offset, inliers = refined, r_off, r_in

    count = int(inliers.sum())
    if count < 3 or count < min_inlier_ratio * n:
        raise NoPlaneFoundError(f"best plane has only {count}/{n} inliers")
    if offset < 0:
        normal, offset = -normal, -offset
    return PlaneModel(tuple(float(x) for x in normal), float(offset), count)


def remove_plane(points, plane: PlaneModel, dist_m: float, return_mask: bool = False):
    """Keep the points farther than ``dist_m`` from the plane."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    keep = np.abs(plane.distance(pts)) > dist_m
    if return_mask:
        return pts[keep], keep
    return pts[keep]


def euclidean_cluster(points, link_dist: float = 0.15, min_size: int = 200, max_size: int | None = None) -> list[Segment]:
    """Connected components of the graph joining points at most ``link_dist`` apart.

    Segments outside ``[min_size, max_size]`` are dropped.  Output is sorted by
    descending size, ties broken by the smallest member index.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    if n == 0:
        return []
    tree = cKDTree(pts)
    pairs = tree.query_pairs(link_dist, output_type="ndarray")
    graph = coo_matrix(
        (np.ones(len(pairs), dtype=np.int8), (pairs[:, 0], pairs[:, 1])), shape=(n, n)
    )
    _, labels = connected_components(graph, directed=False)
    order = np.argsort(labels, kind="stable")
    bounds = np.flatnonzero(np.diff(labels[order])) + 1
    segments = []
    for members in np.split(order, bounds):
        size = len(members)
        if size < min_size or (max_size is not None and size > max_size):
            continue
        members = np.sort(members)
        mpts = pts[members]
        segments.append(Segment(indices=members, centroid=mpts.mean(axis=0), points=mpts))
    segments.sort(key=lambda s: (-s.count, int(s.indices[0])))
    return segments
