"""Shared numeric types, angle conventions, and coordinate frames.

Conventions used throughout the package:

* Pixel axes: u grows rightward, v grows downward (standard image layout).
* Pitch is positive looking downward from horizontal; roll is assumed zero.
* Yaw is a compass-style bearing: the direction of the optical axis projected
  onto the ground, measured clockwise (viewed from above) from the world +y
  axis. With this convention the bearing of a world offset (dx, dy) is
  atan2(dx, dy), and a pixel right of the principal point adds a positive
  pixel-level yaw to the camera yaw.
* World frame: camera foot point at ``pose.position``; at yaw = 0 the ground
  projection of the optical axis points along +y.
* All internal angles are radians; degrees appear only at I/O boundaries.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple, NewType

from .errors import InvalidConfig, UnknownConfigField

AngleDeg = NewType("AngleDeg", float)
AngleRad = NewType("AngleRad", float)

TWO_PI = 2.0 * math.pi


def deg_to_rad(a: AngleDeg) -> AngleRad:
    return AngleRad(math.radians(a))


def rad_to_deg(a: AngleRad) -> AngleDeg:
    return AngleDeg(math.degrees(a))


def normalize_angle(a: AngleRad) -> AngleRad:
    """Wrap an angle into (-pi, pi]."""
    r = math.remainder(a, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    return AngleRad(r)


def bearing(dx: float, dy: float) -> AngleRad:
    """Compass bearing of a world offset: 0 along +y, clockwise positive."""
    return AngleRad(math.atan2(dx, dy))


class PixelPoint(NamedTuple):
    u: float
    v: float


class PlanePoint(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixel units.

    pixel_aspect is the ratio d_y/d_x of the physical pixel spacings; 1 for
    square pixels, in which case f_x and f_y may still differ only through
    calibration error.
    """

    f_x: float
    f_y: float
    u0: float
    v0: float
    pixel_aspect: float = 1.0

    def __post_init__(self) -> None:
        if not (self.f_x > 0 and self.f_y > 0):
            raise InvalidConfig(f"focal lengths must be positive, got f_x={self.f_x}, f_y={self.f_y}")
        if not self.pixel_aspect > 0:
            raise InvalidConfig(f"pixel_aspect must be positive, got {self.pixel_aspect}")


@dataclass(frozen=True)
class CameraPose:
    """Installation pose over the ground plane.

    height is meters above the plane, pitch is radians positive downward,
    yaw is the compass bearing of the optical axis (see module docstring),
    position is the 2D world location of the camera foot point.
    """

    height: float
    pitch: float
    yaw: float = 0.0
    position: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if not self.height > 0:
            raise InvalidConfig(f"camera height must be positive, got {self.height}")


_CAMERA_FIELDS = {"fx", "fy", "u0", "v0", "pixel_aspect",
                  "height_m", "pitch_deg", "yaw_deg", "position_m"}
_REQUIRED_CAMERA_FIELDS = {"fx", "fy", "u0", "v0", "height_m", "pitch_deg"}


def camera_from_dict(cfg: dict) -> tuple[CameraIntrinsics, CameraPose]:
    """Build intrinsics and pose from a camera-config mapping.

    Unknown fields are rejected so typos never silently default.
    """
    unknown = set(cfg) - _CAMERA_FIELDS
    if unknown:
        raise UnknownConfigField(f"unknown camera config fields: {sorted(unknown)}")
    missing = _REQUIRED_CAMERA_FIELDS - set(cfg)
    if missing:
        raise InvalidConfig(f"missing camera config fields: {sorted(missing)}")
    intr = CameraIntrinsics(
        f_x=float(cfg["fx"]),
        f_y=float(cfg["fy"]),
        u0=float(cfg["u0"]),
        v0=float(cfg["v0"]),
        pixel_aspect=float(cfg.get("pixel_aspect", 1.0)),
    )
    position = cfg.get("position_m", (0.0, 0.0))
    if len(position) != 2:
        raise InvalidConfig(f"position_m must be a 2-array, got {position!r}")
    pose = CameraPose(
        height=float(cfg["height_m"]),
        pitch=deg_to_rad(float(cfg["pitch_deg"])),
        yaw=deg_to_rad(float(cfg.get("yaw_deg", 0.0))),
        position=(float(position[0]), float(position[1])),
    )
    return intr, pose


def load_camera_config(path: str) -> tuple[CameraIntrinsics, CameraPose]:
    """Read a JSON camera configuration file."""
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise InvalidConfig(f"camera config must be a JSON object: {path}")
    return camera_from_dict(cfg)


def camera_to_dict(intr: CameraIntrinsics, pose: CameraPose) -> dict:
    return {
        "fx": intr.f_x,
        "fy": intr.f_y,
        "u0": intr.u0,
        "v0": intr.v0,
        "pixel_aspect": intr.pixel_aspect,
        "height_m": pose.height,
        "pitch_deg": rad_to_deg(AngleRad(pose.pitch)),
        "yaw_deg": rad_to_deg(AngleRad(pose.yaw)),
        "position_m": list(pose.position),
    }


def rotate_cam_to_world(x: float, y: float, yaw: float) -> tuple[float, float]:
    """Map a camera-frame ground offset (x right, y forward) to a world offset."""
    c, s = math.cos(yaw), math.sin(yaw)
    return (x * c + y * s, -x * s + y * c)


def rotate_world_to_cam(dx: float, dy: float, yaw: float) -> tuple[float, float]:
    """Inverse of :func:`rotate_cam_to_world`."""
    c, s = math.cos(yaw), math.sin(yaw)
    return (dx * c - dy * s, dx * s + dy * c)
