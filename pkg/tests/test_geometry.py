import json
import math

import pytest

from planemetry.errors import InvalidConfig, UnknownConfigField
from planemetry.geometry import (
    CameraIntrinsics,
    CameraPose,
    bearing,
    camera_from_dict,
    camera_to_dict,
    deg_to_rad,
    load_camera_config,
    normalize_angle,
    rad_to_deg,
    rotate_cam_to_world,
    rotate_world_to_cam,
)


class TestAngles:
    def test_deg_to_rad_definition(self):
        assert deg_to_rad(180.0) == math.pi
        assert deg_to_rad(0.0) == 0.0
        assert deg_to_rad(30.0) == pytest.approx(0.5235987755982988, abs=0.0)

    def test_deg_rad_round_trip(self):
        for a in [0.1, 1.0, 17.3, 89.9, -123.4, 359.0]:
            assert rad_to_deg(deg_to_rad(a)) == pytest.approx(a, rel=1e-15)

    def test_normalize_examples(self):
        assert normalize_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2, abs=1e-15)
        assert normalize_angle(0.0) == 0.0
        # Boundary lands on +pi by convention.
        assert normalize_angle(-3 * math.pi) == pytest.approx(math.pi, abs=1e-15)
        assert normalize_angle(-math.pi) == pytest.approx(math.pi, abs=1e-15)

    def test_normalize_periodicity(self):
        for a in [0.0, 0.7, -2.5, 3.0, -3.1]:
            base = normalize_angle(a)
            for k in range(-10, 11):
                assert normalize_angle(a + 2 * math.pi * k) == pytest.approx(base, abs=1e-12)

    def test_normalize_range(self):
        for a in [x * 0.377 for x in range(-100, 100)]:
            r = normalize_angle(a)
            assert -math.pi < r <= math.pi

    def test_bearing_convention(self):
        # Compass: 0 along +y, clockwise positive.
        assert bearing(0.0, 1.0) == 0.0
        assert bearing(1.0, 0.0) == pytest.approx(math.pi / 2)
        assert bearing(-1.0, 0.0) == pytest.approx(-math.pi / 2)


class TestRotations:
    def test_round_trip(self):
        for yaw in [0.0, 0.3, -1.2, 2.9]:
            x, y = rotate_cam_to_world(3.0, 7.0, yaw)
            assert rotate_world_to_cam(x, y, yaw) == pytest.approx((3.0, 7.0), abs=1e-12)

    def test_yaw_zero_is_identity(self):
        assert rotate_cam_to_world(2.0, 5.0, 0.0) == (2.0, 5.0)


class TestTypes:
    def test_intrinsics_invariants(self):
        with pytest.raises(InvalidConfig):
            CameraIntrinsics(-1.0, 1000.0, 0.0, 0.0)
        with pytest.raises(InvalidConfig):
            CameraIntrinsics(1000.0, 1000.0, 0.0, 0.0, pixel_aspect=0.0)

    def test_pose_invariants(self):
        with pytest.raises(InvalidConfig):
            CameraPose(height=0.0, pitch=0.5)


class TestCameraConfig:
    def test_round_trip(self, tmp_path):
        cfg = {
            "fx": 1200.0, "fy": 1150.0, "u0": 960.0, "v0": 540.0,
            "height_m": 8.24, "pitch_deg": 30.0, "yaw_deg": 15.0,
            "position_m": [1.0, -2.0],
        }
        path = tmp_path / "camera.json"
        path.write_text(json.dumps(cfg))
        intr, pose = load_camera_config(str(path))
        assert intr.f_x == 1200.0
        assert pose.pitch == pytest.approx(math.radians(30.0))
        assert pose.position == (1.0, -2.0)
        back = camera_to_dict(intr, pose)
        intr2, pose2 = camera_from_dict(back)
        assert intr2 == intr
        assert pose2.pitch == pytest.approx(pose.pitch)

    def test_unknown_field_rejected(self):
        with pytest.raises(UnknownConfigField):
            camera_from_dict({"fx": 1, "fy": 1, "u0": 0, "v0": 0,
                              "height_m": 5, "pitch_deg": 30, "focal": 3})

    def test_missing_field_rejected(self):
        with pytest.raises(InvalidConfig):
            camera_from_dict({"fx": 1, "fy": 1})

    def test_pixel_aspect_defaults_to_one(self):
        intr, _ = camera_from_dict({"fx": 1, "fy": 1, "u0": 0, "v0": 0,
                                    "height_m": 5, "pitch_deg": 30})
        assert intr.pixel_aspect == 1.0
