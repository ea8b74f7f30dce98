"""LiDAR person tracking-by-detection with an evaluation harness."""

__version__ = "0.1.0"

from .geometry import Box3D, OverlapScores, giou3d, iou3d, mciou, overlap_scores
from .filters import FilterConfig, FilterState, TrackState
from .assoc import AssocConfig, AssocResult, feature_similarity, pair_score
from .lifecycle import LifecycleConfig, EgoPose, Tracker, Tracklet
from .io import Detection3D, FrameInput, RunConfig, default_config, read_config
from .metrics import EvalReport, evaluate_sequences
from .simgen import ScenarioSpec, generate

__all__ = [
    "__version__",
    "Box3D", "OverlapScores", "giou3d", "iou3d", "mciou", "overlap_scores",
    "FilterConfig", "FilterState", "TrackState",
    "AssocConfig", "AssocResult", "feature_similarity", "pair_score",
    "LifecycleConfig", "EgoPose", "Tracker", "Tracklet",
    "Detection3D", "FrameInput", "RunConfig", "default_config", "read_config",
    "EvalReport", "evaluate_sequences",
    "ScenarioSpec", "generate",
]
