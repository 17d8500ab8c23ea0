"""Extrinsic calibration of kaleidoscopic (multi-mirror) imaging systems.

The core estimator recovers the normals and camera distances of three
planar mirrors linearly from the 2D projections of a single 3D point of
unknown position: chamber-pair coplanarity constraints give the normals,
a joint null-space solve over the collinearity constraints gives the
distances and the point (up to the d1 = 1 gauge), and an optional bundle
adjustment polishes all six mirror parameters against reprojection error.
Reference-object methods and a Monte-Carlo harness support evaluation.
"""

from .baselines import (
    Pose,
    ReferenceObject,
    baseline_calibrate,
    estimate_pose,
    pose_chambers,
    takahashi_calibrate,
)
from .errors import (
    BehindCameraError,
    CalibrationError,
    DegenerateConfigurationError,
    DegenerateSequenceError,
    GenerationError,
    GeometryError,
    IllPosedTriangulationError,
    InconsistentGeometryError,
    InvalidPlaneError,
    KaleidoscopeError,
    MissingChambersError,
    PoseEstimationError,
)
from .geometry import (
    DEFAULT_SEQUENCES,
    CameraIntrinsics,
    MirrorPlane,
    ReflectionSequence,
    ReflectionTransform,
    canonical_order,
    chamber_key,
    compose,
    householder,
    normalize,
    parse_chamber_key,
    project,
    reflect,
    reflection_transform,
    validate_sequence,
)
from .harness import (
    MethodConfig,
    SweepRow,
    SweepSpec,
    TrialResult,
    default_count_sweep,
    default_methods,
    default_noise_sweep,
    error_distance,
    error_normal,
    error_reprojection,
    run_sweep,
    run_trial,
    sweep_csv,
)
from .linear import (
    DistanceSystem,
    LinearCalibration,
    SolveDiagnostics,
    build_distance_system,
    calibrate_linear,
    coplanarity_row,
    estimate_distances,
    estimate_normal_single_mirror,
    estimate_normals,
    triangulate,
)
from .refine import MirrorParams, RefinementReport, bundle_adjust, residual, residual_jacobian
from .synth import (
    GroundTruth,
    Observation,
    PointSpec,
    SceneConfig,
    default_rig,
    generate,
    planar_landmarks,
    scene_points,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
