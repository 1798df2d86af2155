"""Depth-only detection, tracking and class estimation of people with mobility aids."""

from .belief import HmmModel, estimate_model, forward_update
from .camera import CameraModel, DepthFrame, PixelBox, camera_pose
from .classes import ClassId
from .detection import Detection, MockScorer, OracleScorer, detect_frame
from .evaluation import MetricReport, average_precision, clear_mot, confusion_matrix, iou
from .pipeline import GuidanceDecision, PipelineConfig, guidance_decision, run
from .proposals import dense_proposals, frame_proposals
from .simulation import Scenario, render_frame, render_sequence, standard_scenarios
from .tracking import Tracker

__version__ = "0.1.0"

__all__ = [
    "CameraModel", "ClassId", "Detection", "DepthFrame", "GuidanceDecision", "HmmModel", "MetricReport",
    "MockScorer", "OracleScorer", "PipelineConfig", "PixelBox", "Scenario", "Tracker",
    "average_precision", "camera_pose", "clear_mot", "confusion_matrix", "dense_proposals", "detect_frame",
    "estimate_model", "forward_update", "frame_proposals", "guidance_decision", "iou", "render_frame",
    "render_sequence", "run", "standard_scenarios",
]
