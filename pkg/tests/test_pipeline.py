import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aidtrack import logs
from aidtrack.camera import DepthFrame
from aidtrack.classes import ClassId
from aidtrack.detection import DetectionConfig, MockScorer
from aidtrack.errors import ConfigurationError, PipelineError
from aidtrack.pipeline import (
    GuidanceMonitor,
    PipelineConfig,
    belief_argmax,
    build_scorer,
    class_argmax,
    evaluate_logs,
    guidance_decision,
    replay_guidance,
    run,
)
from aidtrack.simulation import render_sequence, single_walker
from conftest import run_scenario_frames

CROSSING_OCCLUDED = 2  # person id of the crutches user who walks behind


def confident(c, p):
    b = np.full(6, (1 - p) / 5)
    b[c] = p
    return b


def test_empty_sequence_gives_empty_logs():
    result = run([], PipelineConfig(), MockScorer())
    assert result.detections == [] and result.tracks == [] and result.frames == []
    assert result.stats["frames"] == 0


@pytest.fixture(scope="module")
def walker_run():
    rendered = list(render_sequence(single_walker()))
    frames = [f for f, _ in rendered]
    gt = {g.frame_id: g for _, g in rendered}
    return frames, gt, run_scenario_frames(frames, gt)[0]


def test_single_walker_one_track_walker_belief(walker_run):
    _, _, result = walker_run
    assert {r["track_id"] for r in result.tracks} == {1}
    last = max(result.tracks, key=lambda r: r["frame"])
    assert belief_argmax(last["belief"]) == ClassId.WALKER
    assert class_argmax(last["belief"]) == ClassId.WALKER


def test_stats_report_timing_and_proposals(walker_run):
    frames, _, result = walker_run
    s = result.stats
    assert s["frames"] == len(frames) and s["skipped_frames"] == []
    assert s["mean_proposals"] > 0 and s["median_detect_s"] > 0 and s["median_track_s"] > 0


def track_for_person(result, gt, person_id):
    votes = {}
    for r in result.tracks:
        g = gt[r["frame"]].by_person().get(person_id)
        if g is not None and math.dist((r["x"], r["y"]), g.position_world) < 0.5:
            votes[r["track_id"]] = votes.get(r["track_id"], 0) + 1
    return max(votes, key=votes.get)


def test_occluded_track_survives(crossing_identity_run, crossing_rendered):
    result, _, _ = crossing_identity_run
    _, gt = crossing_rendered
    assert result.stats["deleted_tracks"] == []
    tid = track_for_person(result, gt, CROSSING_OCCLUDED)
    frames = sorted(r["frame"] for r in result.tracks if r["track_id"] == tid)
    assert frames == list(range(len(gt)))


def test_belief_recovers_after_reacquisition(crossing_confused_run, crossing_rendered):
    result, _, _ = crossing_confused_run
    _, gt = crossing_rendered
    tid = track_for_person(result, gt, CROSSING_OCCLUDED)
    beliefs = {r["frame"]: np.array(r["belief"]) for r in result.tracks if r["track_id"] == tid}
    hidden = [k for k, g in gt.items() if g.by_person()[CROSSING_OCCLUDED].occluded]
    reacquired = hidden[-1] + 1
    # clutter mass builds up while unseen and drains once detections return
    assert beliefs[reacquired][ClassId.BACKGROUND] > beliefs[hidden[0]][ClassId.BACKGROUND]
    assert beliefs[reacquired + 15][ClassId.BACKGROUND] < beliefs[reacquired][ClassId.BACKGROUND]
    assert belief_argmax(beliefs[max(beliefs)]) == ClassId.CRUTCHES


def test_too_many_failed_frames_abort():
    class Failing:
        def scores(self, frame, boxes):
            raise RuntimeError("scorer down")

    rendered = list(render_sequence(single_walker()))[:10]
    with pytest.raises(PipelineError):
        run([f for f, _ in rendered], PipelineConfig(), Failing())


def test_single_failed_frame_skipped():
    rendered = list(render_sequence(single_walker()))[:20]
    frames = [f for f, _ in rendered]
    # a wrong-shaped frame fails detection; 1 of 20 is under the 10 % budget
    bad = DepthFrame(np.zeros((4, 4), np.uint16), frames[5].timestamp, frames[5].camera_pose, frames[5].frame_id)
    frames[5] = bad
    cfg = PipelineConfig()
    result = run(frames, cfg, build_scorer(cfg, {g.frame_id: g for _, g in rendered}))
    assert result.stats["skipped_frames"] == [5]
    assert 5 not in {r["frame"] for r in result.frames}


def test_frames_must_be_time_ordered():
    rendered = list(render_sequence(single_walker()))[:3]
    frames = [rendered[1][0], rendered[0][0]]
    with pytest.raises(PipelineError):
        run(frames, PipelineConfig(), MockScorer())


def test_run_deterministic(walker_run):
    frames, gt, first = walker_run
    again = run_scenario_frames(frames, gt)[0]
    assert [logs.dumps(r) for r in again.detections] == [logs.dumps(r) for r in first.detections]
    assert [logs.dumps(r) for r in again.tracks] == [logs.dumps(r) for r in first.tracks]


def test_logs_replay_to_identical_report(crossing_confused_run, crossing_rendered, tmp_path):
    result, cfg, _ = crossing_confused_run
    _, gt = crossing_rendered
    direct, _ = evaluate_logs(result.detections, result.tracks, gt, cfg, result.frames)
    logs.write_jsonl(tmp_path / "d.jsonl", result.detections)
    logs.write_jsonl(tmp_path / "t.jsonl", result.tracks)
    logs.write_jsonl(tmp_path / "f.jsonl", result.frames)
    logs.write_ground_truth(tmp_path / "gt.jsonl", gt.values())
    replayed, _ = evaluate_logs(list(logs.read_jsonl(tmp_path / "d.jsonl")), list(logs.read_jsonl(tmp_path / "t.jsonl")),
                                logs.read_ground_truth(tmp_path / "gt.jsonl"), cfg,
                                list(logs.read_jsonl(tmp_path / "f.jsonl")))
    assert replayed == direct
    assert replayed.to_json() == direct.to_json()


# -- configuration ---------------------------------------------------------------

def test_config_round_trip_through_json():
    cfg = PipelineConfig().with_overrides({"tracker.gate": 12.0, "scorer.confusion_diagonal": 0.7})
    back = PipelineConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg
    assert back.tracker.gate == 12.0


def test_nested_override():
    cfg = PipelineConfig().with_overrides({"detection.nms_threshold": 0.5, "tracker.noise.q": 1.0})
    assert cfg.detection.nms_threshold == 0.5 and cfg.tracker.noise.q == 1.0
    assert cfg.detection == DetectionConfig(nms_threshold=0.5)


@pytest.mark.parametrize("key", ["tracker.nonsense", "nonsense.gate", "tracker.gate.deeper"])
def test_unknown_override_rejected(key):
    with pytest.raises(ConfigurationError):
        PipelineConfig().with_overrides({key: 1.0})


def test_unknown_key_in_file_rejected():
    d = PipelineConfig().to_dict()
    d["tracker"]["typo"] = 1
    with pytest.raises(ConfigurationError):
        PipelineConfig.from_dict(d)


def test_fov_defaults_to_camera_frustum():
    cfg = PipelineConfig()
    fov = cfg.field_of_view
    assert fov.max_range == cfg.camera.max_depth
    assert fov.half_angle == pytest.approx(math.atan(cfg.camera.cx / cfg.camera.fx))


def test_oracle_scorer_needs_ground_truth():
    with pytest.raises(ConfigurationError):
        build_scorer(PipelineConfig())


# -- guidance --------------------------------------------------------------------

def test_no_track_in_area_waits():
    assert guidance_decision({}, 10.0).action == "wait"
    outside = {1: [(t, False, confident(ClassId.PEDESTRIAN, 0.99)) for t in np.arange(0, 6, 0.1)]}
    assert guidance_decision(outside, 5.9).action == "wait"


def test_pedestrian_goes_to_stairs():
    hist = {1: [(0.0, True, confident(ClassId.PEDESTRIAN, 0.95)), (4.1, True, confident(ClassId.PEDESTRIAN, 0.95))]}
    d = guidance_decision(hist, 4.1)
    assert d.action == "stairs" and d.class_id == ClassId.PEDESTRIAN and d.dwell == pytest.approx(4.1)


def test_wheelchair_goes_to_elevator():
    hist = {3: [(1.0, True, confident(ClassId.WHEELCHAIR, 0.92)), (6.0, True, confident(ClassId.WHEELCHAIR, 0.92))]}
    d = guidance_decision(hist, 6.0)
    assert d.action == "elevator" and d.class_id == ClassId.WHEELCHAIR and d.track_id == 3


def test_leaving_area_restarts_dwell():
    b = confident(ClassId.WALKER, 0.99)
    hist = {1: [(0.0, True, b), (2.0, False, b), (2.1, True, b), (6.0, True, b)]}
    assert guidance_decision(hist, 6.0).action == "wait"  # only 3.9 s since re-entry
    hist[1].append((6.1, True, b))
    assert guidance_decision(hist, 6.1).action == "elevator"


def test_stale_track_ignored():
    b = confident(ClassId.PEDESTRIAN, 0.99)
    hist = {1: [(0.0, True, b), (5.0, True, b)]}
    assert guidance_decision(hist, 5.0).action == "stairs"
    assert guidance_decision(hist, 5.5).action == "wait"  # no state at this step


@settings(max_examples=200)
@given(st.lists(st.tuples(st.floats(0.01, 0.5), st.booleans(), st.integers(0, 5), st.floats(0.0, 1.0)),
                min_size=1, max_size=60))
def test_never_routes_before_dwell(steps):
    t, hist, start = 0.0, [], None
    for dt, inside, c, p in steps:
        t += dt
        hist.append((t, inside, confident(c, p)))
        start = (start if start is not None else t) if inside else None
        d = guidance_decision({1: hist}, t)
        if d.action != "wait":
            assert start is not None and t - start >= 4.0 - 1e-9
            assert d.class_id != ClassId.BACKGROUND
            assert (d.action == "stairs") == (d.class_id == ClassId.PEDESTRIAN)


def test_walker_passing_beyond_area_never_routed(walker_run):
    # the walker crosses at 3.5 m, outside the 3 m guidance area
    _, _, result = walker_run
    assert all(r["y"] > 3.0 for r in result.tracks)
    assert replay_guidance(result, GuidanceMonitor()) == (guidance_decision({}, 0.0), None)
