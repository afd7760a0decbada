"""Planar metric measurement from camera geometry.

Three ranging strategies over a common ground plane: monocular localization
from pitch, height, and intrinsics; global mosaicking of many views with
bundle adjustment; and two-camera ranging by the law of sines. A synthetic
scene harness quantifies the accuracy of each under configurable noise.
"""

__version__ = "0.1.0"

from .geometry import (
    CameraIntrinsics,
    CameraPose,
    PixelPoint,
    PlanePoint,
    deg_to_rad,
    normalize_angle,
    rad_to_deg,
)
from .homography import Homography, RansacConfig, bev_from_camera, estimate_dlt, metric_rectify
from .mono import (
    CalibrationCorrection,
    MonoRangingModel,
    fit_calibration,
    locate,
    project_to_pixel,
    sensitivity_sweep,
)
from .mosaic import CorrespondenceGraph, initialize, solve
from .optim import LmConfig
from .sim import ErrorReport, NoiseModel, SceneSpec, evaluate_mono, evaluate_stereo
from .stereo import StereoRig, pixel_yaw, range_target, solve_triangle, total_yaw

__all__ = [
    "CameraIntrinsics", "CameraPose", "PixelPoint", "PlanePoint",
    "deg_to_rad", "rad_to_deg", "normalize_angle",
    "Homography", "RansacConfig", "estimate_dlt", "metric_rectify", "bev_from_camera",
    "MonoRangingModel", "CalibrationCorrection", "locate", "project_to_pixel",
    "sensitivity_sweep", "fit_calibration",
    "CorrespondenceGraph", "initialize", "solve", "LmConfig",
    "StereoRig", "pixel_yaw", "total_yaw", "solve_triangle", "range_target",
    "NoiseModel", "SceneSpec", "ErrorReport", "evaluate_mono", "evaluate_stereo",
]
