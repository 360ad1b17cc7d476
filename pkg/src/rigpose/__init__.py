"""Multi-camera rig calibration and multi-view object pose estimation."""

from .calib import (
    CalibReport,
    CameraReport,
    MobileSyncResult,
    RigCalibration,
    StaticCalibResult,
    SyncSolveConfig,
    calibrate_rig,
    calibrate_static_camera,
    estimate_mobile_offset,
    evaluate_calibration,
    solve_extrinsics_fixed_offset,
)
from .errors import (
    BehindCamera,
    ConfigError,
    Degenerate,
    EmptyInput,
    EmptyTrack,
    FailedTriangulation,
    LowIdentifiability,
    NoOverlap,
    NoSolution,
    NotEnoughInliers,
    OutOfRange,
    RigposeError,
    SchemaError,
    UnknownCamera,
)
from .geometry import (
    CameraIntrinsics,
    CameraModel,
    RigidTransform,
    compose,
    geodesic_distance,
    invert,
    perturb,
    project,
    project_points,
    quat_conjugate,
    quat_from_matrix,
    quat_from_rotvec,
    quat_multiply,
    quat_normalize,
    quat_rotate,
    quat_slerp,
    quat_to_matrix,
    quat_to_rotvec,
    random_quaternion,
)
from .metrics import (
    AblationReport,
    AblationRow,
    PoseErrorRecord,
    RecallCurve,
    ablation_report,
    aggregate_records,
    failure_record,
    pose_errors,
    recall_curve,
)
from .mvpose import (
    CorrespondenceDistribution,
    DepthRefineResult,
    MultiViewParams,
    ObjectModel,
    PoseEstimate,
    backproject_depth,
    build_3d3d,
    estimate_multi_view,
    estimate_single_view,
    rasterize_silhouette,
    refine_on_depth,
    score_hypothesis,
    triangulate_pair,
)
from .robust import (
    Correspondences2D3D,
    Correspondences3D3D,
    RansacParams,
    RansacResult,
    RefineResult,
    kabsch,
    ransac_kabsch,
    ransac_pnp,
    refine_pose_multiview,
    refine_pose_reprojection,
    solve_p3p,
)
from .sim import (
    BoardSimulation,
    ObjectSimulation,
    RigSpec,
    RigTruth,
    SceneSpec,
    make_object_model,
    make_rig,
    simulate_board,
    simulate_object,
)
from .trajectory import (
    CalibrationBoard,
    CornerFrame,
    CornerObservationSequence,
    PoseTrack,
    TimedPose,
)

__version__ = "0.1.0"

__all__ = [
    "AblationReport",
    "AblationRow",
    "BehindCamera",
    "BoardSimulation",
    "CalibReport",
    "CalibrationBoard",
    "CameraIntrinsics",
    "CameraModel",
    "CameraReport",
    "ConfigError",
    "CornerFrame",
    "CornerObservationSequence",
    "CorrespondenceDistribution",
    "Correspondences2D3D",
    "Correspondences3D3D",
    "Degenerate",
    "DepthRefineResult",
    "EmptyInput",
    "EmptyTrack",
    "FailedTriangulation",
    "LowIdentifiability",
    "MobileSyncResult",
    "MultiViewParams",
    "NoOverlap",
    "NoSolution",
    "NotEnoughInliers",
    "ObjectModel",
    "ObjectSimulation",
    "OutOfRange",
    "PoseErrorRecord",
    "PoseEstimate",
    "PoseTrack",
    "RansacParams",
    "RansacResult",
    "RecallCurve",
    "RefineResult",
    "RigCalibration",
    "RigSpec",
    "RigTruth",
    "RigidTransform",
    "SceneSpec",
    "SchemaError",
    "StaticCalibResult",
    "SyncSolveConfig",
    "TimedPose",
    "UnknownCamera",
    "ablation_report",
    "aggregate_records",
    "backproject_depth",
    "build_3d3d",
    "calibrate_rig",
    "calibrate_static_camera",
    "compose",
    "estimate_mobile_offset",
    "estimate_multi_view",
    "estimate_single_view",
    "evaluate_calibration",
    "failure_record",
    "geodesic_distance",
    "invert",
    "kabsch",
    "make_object_model",
    "make_rig",
    "perturb",
    "pose_errors",
    "project",
    "project_points",
    "quat_conjugate",
    "quat_from_matrix",
    "quat_from_rotvec",
    "quat_multiply",
    "quat_normalize",
    "quat_rotate",
    "quat_slerp",
    "quat_to_matrix",
    "quat_to_rotvec",
    "random_quaternion",
    "ransac_kabsch",
    "ransac_pnp",
    "rasterize_silhouette",
    "recall_curve",
    "refine_on_depth",
    "refine_pose_multiview",
    "refine_pose_reprojection",
    "score_hypothesis",
    "simulate_board",
    "simulate_object",
    "solve_extrinsics_fixed_offset",
    "solve_p3p",
    "triangulate_pair",
]
