"""Command-line interface.

Every subcommand reads the pipeline configuration from ``--config`` (JSON)
with ``--set section.key=value`` overrides.  Anything random takes an
explicit ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import frames as framesio
from . import logs
from .belief import estimate_model, save_model
from .camera import PixelBox
from .classes import ClassId
from .detection import detect_frame, iou_matrix
from .errors import AidTrackError, ConfigurationError
from .pipeline import (
    GuidanceMonitor,
    PipelineConfig,
    build_scorer,
    detection_record,
    evaluate_logs,
    replay_guidance,
    run,
    track_frames,
)
from .proposals import dense_proposal_array, frame_proposals
from .simulation import Scenario, guidance_scenarios, render_sequence, standard_scenarios
from .tracking import assign

log = logging.getLogger("aidtrack")


# -- helpers -------------------------------------------------------------------

def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path=None, overrides=()) -> PipelineConfig:
    cfg = PipelineConfig()
    if path:
        cfg = PipelineConfig.from_dict(json.loads(Path(path).read_text()))
    pairs = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} must look like key=value")
        k, v = item.split("=", 1)
        pairs[k.strip()] = _parse_value(v)
    return cfg.with_overrides(pairs) if pairs else cfg


def _config(args, seed: int | None = None) -> PipelineConfig:
    cfg = load_config(args.config, args.set or [])
    if seed is not None:
        cfg = cfg.with_overrides({"scorer.seed": seed, "detection.segmentation.seed": seed})
    return cfg


def _section(title: str, body: str) -> None:
    print(f"===== {title} =====")
    print(body.rstrip())
    print(f"===== end {title} =====")


def _scenario(name_or_path: str) -> Scenario:
    known = standard_scenarios()
    known.update({s.name: s for s in guidance_scenarios()})
    if name_or_path in known:
        return known[name_or_path]
    p = Path(name_or_path)
    if p.exists():
        return Scenario.load(p)
    raise ConfigurationError(f"unknown scenario {name_or_path!r}; choose from {sorted(known)} or a JSON file")


def _frame_meta(frames_dir) -> list[dict]:
    index = framesio.read_frame_index(frames_dir)
    return [{"frame": k, "timestamp": v["timestamp"], "camera_pose": v["camera_pose"]} for k, v in sorted(index.items())]


# -- subcommands -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _config(args)
    scenario = dataclasses.replace(_scenario(args.scenario), seed=args.seed)
    out = Path(args.out)
    framesio.write_camera(out, cfg.camera)
    gts = []
    for frame, gt in render_sequence(scenario, cfg.camera):
        framesio.write_frame(out, frame)
        gts.append(gt)
    logs.write_ground_truth(out / "ground_truth.jsonl", gts)
    scenario.save(out / "scenario.json")
    n_obj = sum(len(g.objects) for g in gts)
    _section("simulate", f"scenario {scenario.name}\nframes {len(gts)}\nground truth objects {n_obj}\nout {out}")
    return 0


def cmd_propose(args) -> int:
    cfg = _config(args, args.seed)
    cam = framesio.read_camera(args.frames)
    records, counts, times = [], [], []
    for frame in framesio.iter_frames(args.frames):
        t0 = time.perf_counter()
        fp = frame_proposals(frame, cam, cfg.detection.proposals, cfg.detection.segmentation)
        times.append(time.perf_counter() - t0)
        counts.append(len(fp.proposals))
        records.extend(logs.proposal_record(frame.frame_id, p) for p in fp.proposals)
    if args.out:
        logs.write_jsonl(args.out, records)
    dense = len(dense_proposal_array(cam))
    mean = float(np.mean(counts)) if counts else 0.0
    lines = [
        f"frames {len(counts)}",
        f"mean proposals {mean:.1f}",
        f"max proposals {max(counts) if counts else 0}",
        f"dense baseline {dense}",
        f"reduction {dense / mean:.1f}x" if mean else "reduction n/a",
        f"median time {1000 * float(np.median(times)) if times else 0.0:.1f} ms",
    ]
    _section("propose", "\n".join(lines))
    return 0


def cmd_detect(args) -> int:
    cfg = _config(args, args.seed)
    cam = framesio.read_camera(args.frames)
    gt = logs.read_ground_truth(args.gt) if args.gt else None
    scorer = build_scorer(cfg, gt)
    records = []
    for frame in framesio.iter_frames(args.frames):
        res = detect_frame(frame, cam, cfg.detection, scorer)
        records.extend(detection_record(d) for d in res.detections)
    logs.write_jsonl(args.out, records)
    _section("detect", f"detections {len(records)}\nout {args.out}")
    return 0


def cmd_track(args) -> int:
    cfg = _config(args)
    per_frame = logs.detections_by_frame(logs.read_jsonl(args.detections))
    meta = _frame_meta(args.frames)
    records, tracker = track_frames(per_frame, cfg, meta)
    logs.write_jsonl(args.out, records)
    ids = sorted({r["track_id"] for r in records})
    _section("track", f"frames {len(meta)}\ntracks {len(ids)}\ndeleted {len(tracker.deleted)}\nout {args.out}")
    return 0


def write_report(report_dir, detections, tracks, gt, cfg: PipelineConfig, frame_meta=None,
                 include_occluded: bool = True, figures: bool = True):
    from .plotting import plot_beliefs, plot_confusion, plot_pr_curves, plot_trajectories

    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    report, ap = evaluate_logs(detections, tracks, gt, cfg, frame_meta, include_occluded)
    (report_dir / "report.txt").write_text(report.to_text() + "\n")
    (report_dir / "report.json").write_text(report.to_json() + "\n")
    write_pr_csv(report_dir / "pr_curves.csv", ap["curves"])
    if figures:
        plot_pr_curves(ap["curves"], report_dir / "pr_curves.png")
        plot_confusion(report.confusion, report_dir / "confusion.png")
        if tracks is not None:
            plot_trajectories(tracks, report_dir / "trajectories.png", gt)
            plot_beliefs(tracks, report_dir / "beliefs.png")
    return report


def write_pr_csv(path, curves) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class", "rank", "score", "precision", "recall"])
        for cls, c in curves.items():
            for k, (s, p, r) in enumerate(zip(c.scores, c.precision, c.recall)):
                w.writerow([cls.label, k, f"{s:.6f}", f"{p:.6f}", f"{r:.6f}"])


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    gt = logs.read_ground_truth(args.gt)
    dets = list(logs.read_jsonl(args.detections))
    tracks = list(logs.read_jsonl(args.tracks)) if args.tracks else None
    meta = _frame_meta(args.frames) if args.frames else None
    report = write_report(args.report_dir, dets, tracks, gt, cfg, meta, not args.exclude_occluded,
                          figures=not args.no_figures)
    _section("report", report.to_text())
    return 0


def labeled_pairs(detections, gt, iou_thresh: float = 0.5) -> list[dict]:
    """Per-frame (true, observed) class of every ground-truth person; unmatched
    people observe background."""
    by_frame: dict[int, list] = {}
    for d in detections:
        by_frame.setdefault(int(d["frame"]), []).append(d)
    out = []
    for fid in sorted(gt):
        objs = gt[fid].objects
        dets = by_frame.get(fid, [])
        observed = {o.person_id: ClassId.BACKGROUND for o in objs}
        if objs and dets:
            ious = iou_matrix([o.box for o in objs], [PixelBox.from_list(d["box"]) for d in dets])
            for i, j in assign(-ious):
                if ious[i, j] >= iou_thresh:
                    observed[objs[i].person_id] = ClassId.parse(dets[j]["class"])
        for o in objs:
            out.append({"sequence": o.person_id, "frame": fid, "true": o.class_id.label,
                        "observed": observed[o.person_id].label})
    return out


def cmd_run(args) -> int:
    cfg = _config(args, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.scenario:
        scenario = dataclasses.replace(_scenario(args.scenario), seed=args.seed)
        rendered = list(render_sequence(scenario, cfg.camera))
        frames = [f for f, _ in rendered]
        gt = {g.frame_id: g for _, g in rendered}
        logs.write_ground_truth(out / "ground_truth.jsonl", gt.values())
    else:
        if not args.frames:
            raise ConfigurationError("give --scenario or --frames")
        cfg = dataclasses.replace(cfg, camera=framesio.read_camera(args.frames))
        frames = framesio.iter_frames(args.frames)
        gt = logs.read_ground_truth(args.gt) if args.gt else None
    result = run(frames, cfg, build_scorer(cfg, gt))
    logs.write_jsonl(out / "detections.jsonl", result.detections)
    logs.write_jsonl(out / "tracks.jsonl", result.tracks)
    logs.write_jsonl(out / "frames.jsonl", result.frames)
    (out / "stats.json").write_text(json.dumps(result.stats, indent=2, sort_keys=True) + "\n")
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    if gt is not None:
        logs.write_jsonl(out / "labeled.jsonl", labeled_pairs(result.detections, gt))
    s = result.stats
    decision, at = replay_guidance(result, GuidanceMonitor(cfg.area))
    guidance = decision.action if at is None else (
        f"{decision.action} at t={at:.2f} s ({decision.class_id.label}, track {decision.track_id})")
    _section("run", "\n".join([
        f"frames {s['frames']} (skipped {len(s['skipped_frames'])})",
        f"detections {len(result.detections)}",
        f"tracks {len({r['track_id'] for r in result.tracks})}",
        f"mean proposals {s['mean_proposals']:.1f}",
        f"guidance {guidance}",
        f"median detect {1000 * s['median_detect_s']:.1f} ms  median track {1000 * s['median_track_s']:.2f} ms",
        f"out {out}",
    ]))
    if args.report and gt is not None:
        report = write_report(out / "report", result.detections, result.tracks, gt, cfg, result.frames,
                              figures=not args.no_figures)
        _section("report", report.to_text())
    return 0


def cmd_estimate_hmm(args) -> int:
    seqs: dict = {}
    for r in logs.read_jsonl(args.labeled):
        seqs.setdefault(r.get("sequence", 0), []).append(
            (int(ClassId.parse(r["true"])), int(ClassId.parse(r["observed"]))))
    model = estimate_model(seqs.values(), dirichlet_alpha=args.alpha)
    save_model(model, args.out)
    n = sum(len(s) for s in seqs.values())
    _section("estimate-hmm", f"sequences {len(seqs)}\npairs {n}\nout {args.out}\n\n" + Path(args.out).read_text())
    return 0


# -- argument parsing -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aidtrack", description="Depth-only people detection and tracking.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed: bool | str = False):
        sp.add_argument("--config", help="pipeline configuration (JSON)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry, repeatable")
        if seed:
            sp.add_argument("--seed", type=int, required=seed == "required",
                            help="seed for every random draw")

    sp = sub.add_parser("simulate", help="render a scenario to depth frames and ground truth")
    common(sp, "required")
    sp.add_argument("--scenario", required=True, help="scenario name or JSON file")
    sp.add_argument("--out", required=True, help="output frame directory")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("propose", help="region proposals for a frame directory")
    common(sp, "required")
    sp.add_argument("--frames", required=True)
    sp.add_argument("--out", help="proposal log (JSONL)")
    sp.set_defaults(func=cmd_propose)

    sp = sub.add_parser("detect", help="detections for a frame directory")
    common(sp, "required")
    sp.add_argument("--frames", required=True)
    sp.add_argument("--gt", help="ground truth log, needed by the oracle scorer")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("track", help="tracks from a detection log")
    common(sp)
    sp.add_argument("--detections", required=True)
    sp.add_argument("--frames", required=True, help="frame directory (timestamps and camera poses)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_track)

    sp = sub.add_parser("evaluate", help="metrics and figures from logs")
    common(sp)
    sp.add_argument("--detections", required=True)
    sp.add_argument("--tracks")
    sp.add_argument("--gt", required=True)
    sp.add_argument("--frames", help="frame directory; enables the field-of-view filter for tracks")
    sp.add_argument("--report-dir", required=True)
    sp.add_argument("--exclude-occluded", action="store_true")
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("run", help="end-to-end detection and tracking")
    common(sp, "required")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="render this scenario first")
    src.add_argument("--frames", help="existing frame directory")
    sp.add_argument("--gt", help="ground truth log for --frames")
    sp.add_argument("--out", required=True)
    sp.add_argument("--report", action="store_true", help="also evaluate and render figures")
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("estimate-hmm", help="estimate the class-belief model from a labelled log")
    sp.add_argument("--labeled", required=True, help="JSONL with sequence, true and observed per line")
    sp.add_argument("--alpha", type=float, default=1.0, help="additive smoothing pseudo-count")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_estimate_hmm)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (AidTrackError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
