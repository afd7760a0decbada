"""Two-camera ranging by the law of sines under bird's-eye geometry.

Each camera contributes a world bearing to the target: its own yaw plus the
pixel-level yaw arctan((u - u0)/f_x). The two bearings and the RTK-measured
baseline form a triangle solved by the law of sines; camera pitch never
enters, which is what makes this method insensitive to pitch error.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import BearingBehindBaseline, DegenerateTriangle, InvalidConfig
from .geometry import (
    AngleRad,
    CameraIntrinsics,
    CameraPose,
    PixelPoint,
    PlanePoint,
    camera_from_dict,
    deg_to_rad,
    load_camera_config,
    normalize_angle,
)

DEGENERACY_EPS = math.radians(0.01)  # near-parallel-ray guard on alpha + beta


@dataclass(frozen=True)
class StereoRig:
    cam_a: tuple[CameraIntrinsics, CameraPose]
    cam_b: tuple[CameraIntrinsics, CameraPose]
    baseline: float
    baseline_azimuth: float  # world bearing from camera A to camera B

    def __post_init__(self) -> None:
        if not self.baseline > 0:
            raise InvalidConfig(f"baseline must be positive, got {self.baseline}")
        pa = self.cam_a[1].position
        pb = self.cam_b[1].position
        if pa != pb:
            dist = math.hypot(pb[0] - pa[0], pb[1] - pa[1])
            if abs(dist - self.baseline) > 1e-6 * self.baseline:
                raise InvalidConfig(
                    f"camera positions are {dist:.6f} m apart but baseline is {self.baseline} m"
                )
        elif pa == pb and self.cam_a[1] is not self.cam_b[1]:
            # Identical default positions just mean positions were not given.
            pass


@dataclass(frozen=True)
class TriangleSolution:
    alpha: float   # interior angle at camera A, radians
    beta: float    # interior angle at camera B
    gamma: float   # apex angle at the target
    dist_a: float  # camera A to target, meters
    dist_b: float  # camera B to target
    target: PlanePoint

    def __post_init__(self) -> None:
        assert abs(self.alpha + self.beta + self.gamma - math.pi) < 1e-12
        assert all(0 < a < math.pi for a in (self.alpha, self.beta, self.gamma))
        d_ratio = self.dist_a / math.sin(self.beta)
        assert abs(self.dist_b / math.sin(self.alpha) - d_ratio) < 1e-9 * abs(d_ratio)


def pixel_yaw(intrinsics: CameraIntrinsics, p: PixelPoint) -> AngleRad:
    """Yaw offset of a pixel from the optical axis: arctan((u - u0)/f_x)."""
    return AngleRad(math.atan((p.u - intrinsics.u0) / intrinsics.f_x))


def total_yaw(pose: CameraPose, intrinsics: CameraIntrinsics, p: PixelPoint) -> AngleRad:
    """World bearing of the pixel ray: camera yaw plus pixel-level yaw.

    With the package's compass yaw convention (clockwise from +y), a pixel
    right of the principal point bears further clockwise, so the composition
    is a plain sum.
    """
    return normalize_angle(AngleRad(pose.yaw + pixel_yaw(intrinsics, p)))


def solve_triangle(d: float, alpha: float, beta: float,
                   origin: PlanePoint = PlanePoint(0.0, 0.0),
                   baseline_azimuth: float = math.pi / 2,
                   target_side: float = 1.0) -> TriangleSolution:
    """Solve the baseline triangle from its two base angles.

    ``d`` is the baseline, alpha and beta the interior angles at cameras A
    and B. By default camera A sits at the origin with the baseline along +x
    and the target on the +y side; ``origin``, ``baseline_azimuth`` and
    ``target_side`` (+1 counterclockwise of the A-to-B direction, -1
    clockwise) place the solution in an arbitrary world frame.
    """
    if not (0 < alpha < math.pi and 0 < beta < math.pi):
        raise DegenerateTriangle(f"interior angles must lie in (0, pi), got {alpha}, {beta}")
    if alpha + beta >= math.pi - DEGENERACY_EPS:
        raise DegenerateTriangle(
            f"rays are near-parallel: alpha + beta = {math.degrees(alpha + beta):.4f} deg"
        )
    gamma = math.pi - alpha - beta
    sin_gamma = math.sin(gamma)
    dist_a = d * math.sin(beta) / sin_gamma
    dist_b = d * math.sin(alpha) / sin_gamma
    # Bearing of the A-to-target ray: rotate the baseline bearing by alpha,
    # counterclockwise (negative) for the +1 side under the compass convention.
    ray_bearing = baseline_azimuth - target_side * alpha
    target = PlanePoint(
        origin.x + dist_a * math.sin(ray_bearing),
        origin.y + dist_a * math.cos(ray_bearing),
    )
    return TriangleSolution(alpha=alpha, beta=beta, gamma=gamma,
                            dist_a=dist_a, dist_b=dist_b, target=target)


def range_target(rig: StereoRig, p_a: PixelPoint, p_b: PixelPoint) -> TriangleSolution:
    """Range a target observed by both cameras of the rig."""
    intr_a, pose_a = rig.cam_a
    intr_b, pose_b = rig.cam_b
    theta_a = total_yaw(pose_a, intr_a, p_a)
    theta_b = total_yaw(pose_b, intr_b, p_b)
    az = rig.baseline_azimuth

    # Signed bearing offsets from the baseline direction (A->B) and its
    # reverse (B->A); a valid intersection puts them on opposite signs.
    delta_a = normalize_angle(AngleRad(theta_a - az))
    delta_b = normalize_angle(AngleRad(theta_b - az - math.pi))
    if delta_a == 0.0 or delta_b == 0.0 or delta_a * delta_b > 0:
        raise BearingBehindBaseline(
            f"camera bearings do not intersect off the baseline "
            f"(offsets {math.degrees(delta_a):.4f} deg, {math.degrees(delta_b):.4f} deg)"
        )
    alpha = abs(delta_a)
    beta = abs(delta_b)
    origin = PlanePoint(*pose_a.position)
    # target_side: +1 when the A ray veers counterclockwise (negative offset).
    side = 1.0 if delta_a < 0 else -1.0
    return solve_triangle(rig.baseline, alpha, beta,
                          origin=origin, baseline_azimuth=az, target_side=side)


def load_rig(path: str) -> StereoRig:
    """Read a stereo-rig JSON file (camera configs inline or by path)."""
    import os

    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))

    def camera(entry):
        if isinstance(entry, str):
            p = entry if os.path.isabs(entry) else os.path.join(base, entry)
            return load_camera_config(p)
        return camera_from_dict(entry)

    try:
        return StereoRig(
            cam_a=camera(data["camera_a"]),
            cam_b=camera(data["camera_b"]),
            baseline=float(data["baseline_m"]),
            baseline_azimuth=deg_to_rad(float(data["baseline_azimuth_deg"])),
        )
    except KeyError as exc:
        raise InvalidConfig(f"rig file {path} is missing field {exc}") from exc
