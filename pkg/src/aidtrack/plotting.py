"""Report figures written to files (non-interactive backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .classes import CLASS_NAMES, FOREGROUND, M  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_pr_curves(curves: dict, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    for cls in FOREGROUND:
        c = curves.get(cls)
        if c is None or c.ap is None:
            continue
        ax.step(np.concatenate([[0], c.recall]), np.concatenate([[1], c.precision]), where="post",
                label=f"{cls.label} (AP {c.ap:.2f})")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=7, loc="lower left")
    return _save(fig, path)


def plot_confusion(counts, path) -> Path:
    counts = np.asarray(counts, dtype=float)
    rows = counts.sum(axis=1, keepdims=True)
    norm = np.divide(counts, rows, out=np.zeros_like(counts), where=rows > 0)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    im = ax.imshow(norm, vmin=0, vmax=1, cmap="Blues")
    ax.set_xticks(range(M + 1), [*CLASS_NAMES[:M], "missed"], rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(M), CLASS_NAMES[:M], fontsize=8)
    for i in range(M):
        for j in range(M + 1):
            ax.text(j, i, f"{norm[i, j]:.2f}", ha="center", va="center", fontsize=7,
                    color="white" if norm[i, j] > 0.5 else "black")
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    fig.colorbar(im, ax=ax)
    return _save(fig, path)


def plot_trajectories(track_log, path, ground_truth=None) -> Path:
    fig, ax = plt.subplots(figsize=(6, 5))
    if ground_truth:
        people: dict[int, list] = {}
        for fid in sorted(ground_truth):
            for o in ground_truth[fid].objects:
                people.setdefault(o.person_id, []).append(o.position_world)
        for pid, pts in people.items():
            p = np.asarray(pts)
            ax.plot(p[:, 0], p[:, 1], "k--", lw=1, alpha=0.5)
    tracks: dict[int, list] = {}
    for r in track_log:
        tracks.setdefault(r["track_id"], []).append((r["x"], r["y"]))
    for tid, pts in sorted(tracks.items()):
        p = np.asarray(pts)
        ax.plot(p[:, 0], p[:, 1], lw=1.5, label=f"track {tid}")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    if tracks:
        ax.legend(fontsize=7)
    return _save(fig, path)


def plot_beliefs(track_log, path, max_tracks: int = 6) -> Path:
    tracks: dict[int, list] = {}
    for r in track_log:
        tracks.setdefault(r["track_id"], []).append((r["frame"], r["belief"]))
    ids = sorted(tracks)[:max_tracks]
    fig, axes = plt.subplots(max(len(ids), 1), 1, figsize=(7, 1.8 * max(len(ids), 1)), squeeze=False)
    for ax, tid in zip(axes[:, 0], ids):
        frames = np.array([f for f, _ in tracks[tid]])
        b = np.array([x for _, x in tracks[tid]])
        ax.stackplot(frames, b.T, labels=CLASS_NAMES[: b.shape[1]])
        ax.set_ylim(0, 1)
        ax.set_ylabel(f"track {tid}")
    axes[0, 0].legend(fontsize=6, ncol=3, loc="upper right")
    axes[-1, 0].set_xlabel("frame")
    return _save(fig, path)
