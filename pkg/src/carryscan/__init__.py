"""mmWave radar + camera pipeline for detecting objects carried by people.

Simulates FMCW TDM-MIMO intermediate-frequency returns and camera detections
for walking subjects, localizes them (Kalman tracking + homography), images
them in range-azimuth-elevation, classifies carried objects per frame, and
fuses the per-frame evidence along each trajectory.
"""

from carryscan.calib import (
    OccupancyRegion,
    OffsetState,
    estimate_homography,
    leave_one_out_errors,
    load_correspondences,
    occupancy_region,
    plane_to_image_homography,
    refine_center,
    region_polar,
)
from carryscan.cfar import Cluster, DetectionPoint, ca_cfar_2d, cfar_mask, cluster, nonstatic_filter
from carryscan.classify import (
    ClassProbabilities,
    OracleParams,
    decide,
    decide_all,
    energy_ratio,
    energy_template_predict,
    oracle_predict,
)
from carryscan.config import C, DerivedSpecs, RadarConfig, default_config, derive_specs, load_config, save_config, validate
from carryscan.cubeio import read_cube, write_cube
from carryscan.fusion import FusionConfig, KnwlTrfState, epsilon_policy, fuse_stream, knwltrf_step, res_vote
from carryscan.imaging import (
    CROP_SHAPE,
    CroppedCube,
    RadarCube3D,
    VirtualArray,
    crop_and_pad,
    form_virtual_array,
    image_3d,
    image_axes,
    range_compensate,
)
from carryscan.metrics import (
    ClassifierReport,
    DetectionMetrics,
    StreamRecord,
    SweepRow,
    TrackingMetrics,
    accuracy_at_length,
    confusion_counts,
    decide_stream,
    detection_metrics,
    length_sweep,
    metrics_at_length,
    tracking_metrics,
)
from carryscan.pipeline import (
    ArmComparison,
    PipelineRunConfig,
    StageError,
    TrendResult,
    compare_arms,
    evaluate_stage,
    fuse_stage,
    fusion_trend_experiment,
    image_stage,
    run,
    simulate_stage,
    track_stage,
)
from carryscan.scene import (
    CLASSES,
    CameraModel,
    GroundTruth,
    Scenario,
    Subject,
    Waypoint,
    ground_truth,
    load_scenario,
    make_demo_scenario,
    make_ghost_scenario,
    save_scenario,
    synth_camera_detections,
    synth_if_frame,
)
from carryscan.tracker import Detection, Tracker, TrackerConfig, Tracklet, iou, jv_assign

__version__ = "0.1.0"

__all__ = [
    "ArmComparison",
    "C",
    "CLASSES",
    "CROP_SHAPE",
    "CameraModel",
    "ClassProbabilities",
    "ClassifierReport",
    "Cluster",
    "CroppedCube",
    "DerivedSpecs",
    "Detection",
    "DetectionMetrics",
    "DetectionPoint",
    "FusionConfig",
    "GroundTruth",
    "KnwlTrfState",
    "OccupancyRegion",
    "OffsetState",
    "OracleParams",
    "PipelineRunConfig",
    "RadarConfig",
    "RadarCube3D",
    "Scenario",
    "StageError",
    "StreamRecord",
    "Subject",
    "SweepRow",
    "Tracker",
    "TrackerConfig",
    "TrackingMetrics",
    "Tracklet",
    "TrendResult",
    "VirtualArray",
    "Waypoint",
    "accuracy_at_length",
    "ca_cfar_2d",
    "cfar_mask",
    "cluster",
    "compare_arms",
    "confusion_counts",
    "crop_and_pad",
    "decide",
    "decide_all",
    "decide_stream",
    "default_config",
    "derive_specs",
    "detection_metrics",
    "energy_ratio",
    "energy_template_predict",
    "epsilon_policy",
    "estimate_homography",
    "evaluate_stage",
    "form_virtual_array",
    "fuse_stage",
    "fuse_stream",
    "fusion_trend_experiment",
    "ground_truth",
    "image_3d",
    "image_axes",
    "image_stage",
    "iou",
    "jv_assign",
    "knwltrf_step",
    "leave_one_out_errors",
    "length_sweep",
    "load_config",
    "load_correspondences",
    "load_scenario",
    "make_demo_scenario",
    "make_ghost_scenario",
    "metrics_at_length",
    "nonstatic_filter",
    "occupancy_region",
    "oracle_predict",
    "plane_to_image_homography",
    "range_compensate",
    "read_cube",
    "refine_center",
    "region_polar",
    "res_vote",
    "run",
    "save_config",
    "save_scenario",
    "simulate_stage",
    "synth_camera_detections",
    "synth_if_frame",
    "track_stage",
    "tracking_metrics",
    "write_cube",
    "__version__",
]
