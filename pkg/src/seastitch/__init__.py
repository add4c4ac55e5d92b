"""Offline tracklet stitching for UAV maritime multi-object tracking.

Detections are placed on the sea plane with the drone's GPS, altitude and
gimbal angles; fragmented tracklets are then relinked by gated assignment
on world distance, with constant-velocity extrapolation for targets that
left the view.
"""

from .assignment import Matching, solve_gated, solve_min_cost
from .estimators import (AreaNMS, FovCalibrator, GapSplitter, MetadataGuidedStitcher, TrackInterpolator,
                         TwoStageTracker, make_stitch_pipeline, metadata_params)
from .geometry import (CameraIntrinsics, FrameMetadata, ReferenceOrigin, WorldPoint, calibrate_fov,
                       forward_project, gps_to_local, intrinsics_matrix, project_detection)
from .metrics import EvalResult, evaluate
from .reid import ReidConfig, stitch

__version__ = "0.1.0"

__all__ = [
    "AreaNMS", "CameraIntrinsics", "EvalResult", "FovCalibrator", "FrameMetadata", "GapSplitter", "Matching",
    "MetadataGuidedStitcher", "ReferenceOrigin", "ReidConfig", "TrackInterpolator", "TwoStageTracker",
    "WorldPoint", "calibrate_fov", "evaluate", "forward_project", "gps_to_local", "intrinsics_matrix",
    "make_stitch_pipeline", "metadata_params", "project_detection", "solve_gated", "solve_min_cost", "stitch",
]
