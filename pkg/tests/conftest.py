import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from aidtrack.simulation import crossing_with_occlusion, render_sequence  # noqa: E402

# criterion title -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def crossing_rendered():
    """Frames and ground truth of the crossing-with-occlusion scenario."""
    rendered = list(render_sequence(crossing_with_occlusion()))
    frames = [f for f, _ in rendered]
    gt = {g.frame_id: g for _, g in rendered}
    return frames, gt


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for title, (ok, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {title}: {detail}")


def run_scenario_frames(frames, gt, diagonal=1.0, seed=0, **overrides):
    """Pipeline run with the oracle scorer; returns (RunResult, config, seconds)."""
    import time

    from aidtrack.pipeline import PipelineConfig, build_scorer, run

    cfg = PipelineConfig().with_overrides({"scorer.confusion_diagonal": diagonal, "scorer.seed": seed, **overrides})
    t0 = time.perf_counter()
    result = run(frames, cfg, build_scorer(cfg, gt))
    return result, cfg, time.perf_counter() - t0


@pytest.fixture(scope="session")
def crossing_identity_run(crossing_rendered):
    frames, gt = crossing_rendered
    return run_scenario_frames(frames, gt)


@pytest.fixture(scope="session")
def crossing_confused_run(crossing_rendered):
    frames, gt = crossing_rendered
    return run_scenario_frames(frames, gt, diagonal=0.7, seed=0)
