"""Symmetry-aware 6-DoF pose evaluation: ADD, ADD-S, MeanSSD, MSSD and ADD-H,
with detection-rate curves, precision/recall tables and calibration helpers."""

__version__ = "0.1.0"

from .assignment import Assignment, brute_force_lap, solve_lap  # noqa: E402
from .evaluation import (  # noqa: E402
    EvalReport,
    GroundTruthInstance,
    MatchSet,
    Prediction,
    build_report,
    dataset_stats,
    detection_curve,
    match_instances,
)
from .exceptions import *  # noqa: E402,F401,F403
from .fieldcal import (  # noqa: E402
    cross_view_validate,
    fit_depth_scale,
    fit_nakagami,
    refine_depth_ls,
)
from .geometry import (  # noqa: E402
    PinholeCamera,
    Pose,
    compose,
    inverse,
    kabsch,
    project,
    random_rotation,
    robust_procrustes,
    rotation_angle,
    transform_points,
    unproject,
)
from .metrics import (  # noqa: E402
    MetricKind,
    add,
    add_h,
    add_s,
    correspondence_map,
    mean_ssd,
    mssd,
    pose_error,
)
from .models import SampledModel, subsample  # noqa: E402
from .simulation import RotationMode, simulate_metric_comparison  # noqa: E402
from .symmetry import SymmetryClass, SymmetrySet, generate_symmetries  # noqa: E402
