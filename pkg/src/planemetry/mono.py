"""Monocular ground-plane localization.

Forward model: a camera at height H, pitched down by alpha, observes a plane
point through pixel (u, v). The depression angle of the pixel ray is
beta = alpha - arctan((v - v0)/f_y), the longitudinal distance is
Y = H / tan(beta), and the lateral offset follows from the similar-triangles
relation X = (u - u0) * H / (sqrt(f_x^2 + (v - v0)^2 * aspect^2) * sin(beta)).

``project_to_pixel`` is the closed-form inverse of that model and serves as
the oracle for every round-trip test in the package.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    BehindCamera,
    DegenerateGeometry,
    InsufficientPoints,
    InvalidConfig,
    InvalidRange,
    NoConvergence,
    OffImagePlane,
    RayAboveHorizon,
    RayTooShallowWarning,
)
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    PixelPoint,
    PlanePoint,
    rad_to_deg,
    rotate_cam_to_world,
    rotate_world_to_cam,
)
from .optim import LmConfig, levenberg_marquardt

SHALLOW_RAY_DEFAULT = math.radians(0.5)


@dataclass(frozen=True)
class CalibrationCorrection:
    """Additive corrections to pitch and principal point (and optionally height)."""

    delta_pitch: float = 0.0
    delta_u0: float = 0.0
    delta_v0: float = 0.0
    delta_height: float = 0.0

    def __post_init__(self) -> None:
        vals = (self.delta_pitch, self.delta_u0, self.delta_v0, self.delta_height)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidConfig("calibration corrections must be finite")
        if abs(self.delta_pitch) >= math.pi / 4:
            raise InvalidConfig(f"|delta_pitch| must stay below pi/4, got {self.delta_pitch}")


@dataclass(frozen=True)
class MonoRangingModel:
    intrinsics: CameraIntrinsics
    pose: CameraPose
    correction: CalibrationCorrection | None = None
    shallow_threshold: float = SHALLOW_RAY_DEFAULT

    def effective(self) -> tuple[float, float, float, float]:
        """Corrected (pitch, u0, v0, height)."""
        c = self.correction or CalibrationCorrection()
        return (
            self.pose.pitch + c.delta_pitch,
            self.intrinsics.u0 + c.delta_u0,
            self.intrinsics.v0 + c.delta_v0,
            self.pose.height + c.delta_height,
        )


def _depression_angle(model: MonoRangingModel, p: PixelPoint, check_shallow: bool = True) -> float:
    alpha, _, v0, _ = model.effective()
    if not 0.0 < alpha < math.pi / 2:
        raise RayAboveHorizon(f"effective pitch {alpha:.6f} rad outside (0, pi/2)")
    beta = alpha - math.atan((p.v - v0) / model.intrinsics.f_y)
    if beta <= 0.0:
        raise RayAboveHorizon(
            f"pixel ray depression angle {rad_to_deg(beta):.4f} deg does not reach the ground"
        )
    if check_shallow and beta < model.shallow_threshold:
        warnings.warn(
            f"depression angle {rad_to_deg(beta):.4f} deg is inside the instability regime",
            RayTooShallowWarning,
            stacklevel=3,
        )
    return beta


def longitudinal_distance(model: MonoRangingModel, p: PixelPoint) -> float:
    """Distance Y along the ground from the camera foot point to the pixel ray."""
    beta = _depression_angle(model, p)
    _, _, _, height = model.effective()
    return height / math.tan(beta)


def lateral_coordinate(model: MonoRangingModel, p: PixelPoint) -> float:
    """Lateral offset X of the pixel ray's ground intersection."""
    beta = _depression_angle(model, p)
    _, u0, v0, height = model.effective()
    intr = model.intrinsics
    denom = math.hypot(intr.f_x, (p.v - v0) * intr.pixel_aspect)
    return (p.u - u0) * height / (denom * math.sin(beta))


def locate(model: MonoRangingModel, p: PixelPoint) -> PlanePoint:
    """Ground intersection of the pixel ray, in world coordinates."""
    beta = _depression_angle(model, p)
    _, u0, v0, height = model.effective()
    intr = model.intrinsics
    y = height / math.tan(beta)
    denom = math.hypot(intr.f_x, (p.v - v0) * intr.pixel_aspect)
    x = (p.u - u0) * height / (denom * math.sin(beta))
    wx, wy = rotate_cam_to_world(x, y, model.pose.yaw)
    px, py = model.pose.position
    return PlanePoint(wx + px, wy + py)


def project_to_pixel(model: MonoRangingModel, q: PlanePoint) -> PixelPoint:
    """Closed-form inverse of :func:`locate`; the round-trip oracle."""
    alpha, u0, v0, height = model.effective()
    px, py = model.pose.position
    x, y = rotate_world_to_cam(q.x - px, q.y - py, model.pose.yaw)
    if y <= 0.0:
        raise BehindCamera(f"plane point projects behind the camera (Y'={y:.6f})")
    beta = math.atan(height / y)
    gamma = alpha - beta
    if gamma >= math.pi / 2:
        raise OffImagePlane("plane point maps outside the image half-space")
    v = v0 + model.intrinsics.f_y * math.tan(gamma)
    denom = math.hypot(model.intrinsics.f_x, (v - v0) * model.intrinsics.pixel_aspect)
    u = u0 + x * denom * math.sin(beta) / height
    return PixelPoint(u, v)


@dataclass(frozen=True)
class SensitivityCurve:
    """Image-center distance Y = H/tan(alpha) sampled over a pitch sweep."""

    samples: tuple[tuple[float, float], ...]  # (pitch_rad, Y_m), pitch increasing
    height: float

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["alpha_deg", "Y_m"])
            for pitch, y in self.samples:
                writer.writerow([f"{rad_to_deg(pitch):.6f}", f"{y:.6f}"])


def sensitivity_sweep(height: float, pitch_min: float, pitch_max: float, step: float) -> SensitivityCurve:
    """Sweep Y = H/tan(alpha) over [pitch_min, pitch_max] inclusive."""
    if not (0.0 < pitch_min < pitch_max < math.pi / 2):
        raise InvalidRange("pitch sweep bounds must satisfy 0 < min < max < pi/2")
    if step <= 0.0:
        raise InvalidRange("sweep step must be positive")
    if height <= 0.0:
        raise InvalidRange("height must be positive")
    count = int(math.floor((pitch_max - pitch_min) / step + 1e-9)) + 1
    samples = []
    for k in range(count):
        pitch = pitch_min + k * step
        samples.append((pitch, height / math.tan(pitch)))
    return SensitivityCurve(samples=tuple(samples), height=height)


@dataclass(frozen=True)
class CalibrationResult:
    correction: CalibrationCorrection
    rms: float  # residual RMS in meters per observation
    iterations: int
    converged: bool


def _calibration_residuals(
    intrinsics: CameraIntrinsics,
    pose: CameraPose,
    observations: list[tuple[PixelPoint, PlanePoint]],
    x: np.ndarray,
    fit_height: bool,
) -> np.ndarray:
    dh = x[3] if fit_height else 0.0
    try:
        corr = CalibrationCorrection(x[0], x[1], x[2], dh)
        model = MonoRangingModel(intrinsics, pose, corr)
        out = np.empty(2 * len(observations))
        for i, (p, q) in enumerate(observations):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RayTooShallowWarning)
                est = locate(model, p)
            out[2 * i] = est.x - q.x
            out[2 * i + 1] = est.y - q.y
        return out
    except (RayAboveHorizon, InvalidConfig):
        # Trial step left the valid domain: report a huge finite cost so the
        # solver rejects the step and raises damping.
        return np.full(2 * len(observations), 1e12)


def _calibration_jacobian(
    intrinsics: CameraIntrinsics,
    pose: CameraPose,
    observations: list[tuple[PixelPoint, PlanePoint]],
    x: np.ndarray,
    fit_height: bool,
) -> np.ndarray:
    n_params = 4 if fit_height else 3
    J = np.zeros((2 * len(observations), n_params))
    alpha = pose.pitch + x[0]
    u0 = intrinsics.u0 + x[1]
    v0 = intrinsics.v0 + x[2]
    height = pose.height + (x[3] if fit_height else 0.0)
    fx, fy, aspect = intrinsics.f_x, intrinsics.f_y, intrinsics.pixel_aspect
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    for i, (p, _) in enumerate(observations):
        t = (p.v - v0) / fy
        beta = alpha - math.atan(t)
        sin_b, cos_b = math.sin(beta), math.cos(beta)
        D = math.hypot(fx, (p.v - v0) * aspect)
        X = (p.u - u0) * height / (D * sin_b)
        dbeta_dv0 = 1.0 / (fy * (1.0 + t * t))
        dY_dbeta = -height / (sin_b * sin_b)
        dX_dbeta = -X * cos_b / sin_b
        dD_dv0 = -(p.v - v0) * aspect * aspect / D
        # columns: [d_pitch, d_u0, d_v0, (d_height)] for camera-frame (X, Y)
        dX = np.array([dX_dbeta, -height / (D * sin_b),
                       -X * dD_dv0 / D + dX_dbeta * dbeta_dv0])
        dY = np.array([dY_dbeta, 0.0, dY_dbeta * dbeta_dv0])
        if fit_height:
            dX = np.append(dX, X / height)
            dY = np.append(dY, (1.0 / math.tan(beta)))
        # world frame: wx = X c + Y s, wy = -X s + Y c
        J[2 * i] = c * dX + s * dY
        J[2 * i + 1] = -s * dX + c * dY
    return J


def fit_calibration(
    intrinsics: CameraIntrinsics,
    pose: CameraPose,
    observations: list[tuple[PixelPoint, PlanePoint]],
    fit_height: bool = False,
    config: LmConfig | None = None,
) -> CalibrationResult:
    """Fit (delta_pitch, delta_u0, delta_v0[, delta_height]) to known ground points.

    Minimizes the sum of squared world-coordinate residuals between located
    and surveyed positions via damped nonlinear least squares.
    """
    min_points = 4 if fit_height else 3
    if len(observations) < min_points:
        raise InsufficientPoints(
            f"calibration needs at least {min_points} observations, got {len(observations)}"
        )
    n_params = 4 if fit_height else 3
    x0 = np.zeros(n_params)

    res = lambda x: _calibration_residuals(intrinsics, pose, observations, x, fit_height)
    jac = lambda x: _calibration_jacobian(intrinsics, pose, observations, x, fit_height)

    J0 = jac(x0)
    jtj = J0.T @ J0
    if np.linalg.cond(jtj) > 1e12:
        raise DegenerateGeometry("observation geometry does not constrain the calibration fit")

    result = levenberg_marquardt(res, jac, x0, config or LmConfig())
    if not result.converged:
        raise NoConvergence(f"calibration fit did not converge in {result.iterations} iterations")
    x = result.state
    corr = CalibrationCorrection(x[0], x[1], x[2], x[3] if fit_height else 0.0)
    rms = math.sqrt(result.final_cost / len(observations))
    return CalibrationResult(correction=corr, rms=rms, iterations=result.iterations,
                             converged=result.converged)


def load_control_points(path: str) -> list[tuple[PixelPoint, PlanePoint]]:
    """Read a `u,v,X,Y` CSV of pixel/world control-point pairs."""
    out: list[tuple[PixelPoint, PlanePoint]] = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"u", "v", "X", "Y"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise InvalidConfig(f"control-point CSV must have header u,v,X,Y: {path}")
        for row in reader:
            out.append((
                PixelPoint(float(row["u"]), float(row["v"])),
                PlanePoint(float(row["X"]), float(row["Y"])),
            ))
    return out
