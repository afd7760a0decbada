import math
import warnings

import numpy as np
import pytest

from conftest import random_camera
from planemetry.errors import (
    DegenerateGeometry,
    InsufficientPoints,
    InvalidRange,
    NoConvergence,
    RayAboveHorizon,
    RayTooShallowWarning,
)
from planemetry.geometry import CameraIntrinsics, CameraPose, PixelPoint, PlanePoint
from planemetry.mono import (
    CalibrationCorrection,
    MonoRangingModel,
    _calibration_jacobian,
    _calibration_residuals,
    fit_calibration,
    lateral_coordinate,
    load_control_points,
    locate,
    longitudinal_distance,
    project_to_pixel,
    sensitivity_sweep,
)
from planemetry.optim import LmConfig


def model_at(pitch_deg, height=8.24, f=1000.0, yaw=0.0, position=(0.0, 0.0)):
    intr = CameraIntrinsics(f, f, 0.0, 0.0)
    pose = CameraPose(height=height, pitch=math.radians(pitch_deg), yaw=yaw, position=position)
    return MonoRangingModel(intr, pose)


class TestLongitudinalDistance:
    def test_measurement_example_surge(self):
        # Depression angle 1.679 deg at H = 8.24 m.
        y = longitudinal_distance(model_at(1.679), PixelPoint(0.0, 0.0))
        assert y == pytest.approx(281.11, abs=0.05)

    def test_image_center_ray(self):
        assert longitudinal_distance(model_at(45.0), PixelPoint(0.0, 0.0)) == pytest.approx(8.24)

    def test_off_center_pixel(self):
        # gamma = arctan(0.1), beta = 30 deg - gamma, Y = H / tan(beta);
        # frozen from a 50-digit evaluation.
        y = longitudinal_distance(model_at(30.0), PixelPoint(0.0, 100.0))
        assert y == pytest.approx(18.258576949393015, rel=1e-12)

    def test_monotone_in_v(self):
        # Larger v pulls the ray toward the horizon, so distance grows.
        m = model_at(30.0)
        ys = [longitudinal_distance(m, PixelPoint(0.0, v)) for v in np.linspace(-400, 500, 40)]
        assert all(a < b for a, b in zip(ys, ys[1:]))

    def test_ray_above_horizon(self):
        with pytest.raises(RayAboveHorizon):
            longitudinal_distance(model_at(5.0), PixelPoint(0.0, 200.0))

    def test_beta_zero_is_error_not_infinity(self):
        m = model_at(5.0)
        v = 1000.0 * math.tan(math.radians(5.0))  # exactly beta = 0
        with pytest.raises(RayAboveHorizon):
            longitudinal_distance(m, PixelPoint(0.0, v))

    def test_shallow_ray_warns(self):
        m = model_at(1.0)  # beta = 0.3 deg < default 0.5 deg threshold
        with pytest.warns(RayTooShallowWarning):
            longitudinal_distance(m, PixelPoint(0.0, 1000.0 * math.tan(math.radians(0.7))))


class TestLateralCoordinate:
    def test_on_axis(self):
        assert lateral_coordinate(model_at(30.0), PixelPoint(0.0, 50.0)) == 0.0

    def test_sign_symmetry(self):
        m = model_at(30.0)
        left = lateral_coordinate(m, PixelPoint(-120.0, 50.0))
        right = lateral_coordinate(m, PixelPoint(120.0, 50.0))
        assert left == pytest.approx(-right, rel=1e-15)

    def test_round_trip_against_forward_oracle(self):
        m = model_at(30.0)
        q = PlanePoint(5.0, 20.0)
        p = project_to_pixel(m, q)
        assert lateral_coordinate(m, p) == pytest.approx(5.0, abs=1e-9)
        assert longitudinal_distance(m, p) == pytest.approx(20.0, abs=1e-9)


class TestLocate:
    def test_identity_frame_matches_components(self):
        m = model_at(30.0)
        p = PixelPoint(37.0, 81.0)
        q = locate(m, p)
        assert q.x == pytest.approx(lateral_coordinate(m, p))
        assert q.y == pytest.approx(longitudinal_distance(m, p))

    def test_yaw_rotation_preserves_norm(self):
        m = model_at(30.0, yaw=math.radians(90.0))
        # Camera-frame point (0, 10): pixel on the center column at Y = 10.
        p = project_to_pixel(model_at(30.0), PlanePoint(0.0, 10.0))
        q = locate(m, p)
        assert math.hypot(q.x, q.y) == pytest.approx(10.0, abs=1e-12)
        assert q.x == pytest.approx(10.0, abs=1e-12)  # rotated onto the lateral axis

    def test_randomized_round_trip(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            intr, pose = random_camera(rng)
            m = MonoRangingModel(intr, pose)
            # Camera-frame target, then into the world frame for projection.
            y_cam = rng.uniform(2.0 * pose.height, 50.0 * pose.height)
            x_cam = rng.uniform(-0.5, 0.5) * y_cam
            c, s = math.cos(pose.yaw), math.sin(pose.yaw)
            q = PlanePoint(x_cam * c + y_cam * s + pose.position[0],
                           -x_cam * s + y_cam * c + pose.position[1])
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RayTooShallowWarning)
                back = locate(m, project_to_pixel(m, q))
            assert math.hypot(back.x - q.x, back.y - q.y) < 1e-9


class TestProjectToPixel:
    def test_principal_ray(self):
        m = model_at(40.0)
        y0 = 8.24 / math.tan(math.radians(40.0))
        p = project_to_pixel(m, PlanePoint(0.0, y0))
        assert p.u == pytest.approx(0.0, abs=1e-12)
        assert p.v == pytest.approx(0.0, abs=1e-9)

    def test_on_axis_point(self):
        m = model_at(40.0)
        for y in [5.0, 12.0, 60.0]:
            assert project_to_pixel(m, PlanePoint(0.0, y)).u == pytest.approx(0.0, abs=1e-12)


class TestSensitivitySweep:
    def test_paper_anchor_on_curve(self):
        curve = sensitivity_sweep(8.24, math.radians(1.679), math.radians(2.0), math.radians(0.1))
        assert curve.samples[0][1] == pytest.approx(281.11, abs=0.05)

    def test_tan_45(self):
        curve = sensitivity_sweep(8.24, math.radians(45.0), math.radians(45.1), math.radians(1.0))
        assert curve.samples[0][1] == pytest.approx(8.24, rel=1e-12)

    def test_lower_endpoint(self):
        # 8.24 / tan(0.5 deg), frozen from a 50-digit evaluation.
        curve = sensitivity_sweep(8.24, math.radians(0.5), math.radians(1.0), math.radians(0.25))
        assert curve.samples[0][1] == pytest.approx(944.2104770655112, rel=1e-12)

    def test_product_identity_and_shape(self):
        curve = sensitivity_sweep(8.24, math.radians(0.5), math.radians(30.0), math.radians(0.1))
        ys = [y for _, y in curve.samples]
        for pitch, y in curve.samples:
            assert y * math.tan(pitch) == pytest.approx(8.24, rel=1e-12)
        assert all(a > b for a, b in zip(ys, ys[1:]))  # strictly decreasing
        second = np.diff(ys, 2)
        assert np.all(second > 0)  # convex

    def test_inclusive_count(self):
        curve = sensitivity_sweep(1.0, 0.1, 0.2, 0.02)
        assert len(curve.samples) == 6

    def test_invalid_range(self):
        with pytest.raises(InvalidRange):
            sensitivity_sweep(8.24, 0.5, 0.1, 0.01)
        with pytest.raises(InvalidRange):
            sensitivity_sweep(8.24, 0.1, 0.5, -0.01)

    def test_instability_magnitude(self):
        # |dY/dalpha| = H / sin^2(alpha); the exact ratio between 1.679 deg
        # and 30 deg is about 291.
        ratio = math.sin(math.radians(30.0)) ** 2 / math.sin(math.radians(1.679)) ** 2
        assert ratio > 250

    def test_csv_output(self, tmp_path):
        curve = sensitivity_sweep(8.24, math.radians(1.0), math.radians(2.0), math.radians(0.5))
        path = tmp_path / "sweep.csv"
        curve.write_csv(str(path))
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "alpha_deg,Y_m"
        assert len(lines) == 1 + len(curve.samples)
        alpha, y = lines[1].split(",")
        assert float(alpha) == pytest.approx(1.0, abs=1e-6)
        assert float(y) == pytest.approx(8.24 / math.tan(math.radians(1.0)), abs=1e-5)


def make_observations(intr, pose, correction, points, pixel_noise=0.0, rng=None):
    """Project points through a camera with injected corrections."""
    true_model = MonoRangingModel(intr, pose, correction)
    obs = []
    for q in points:
        p = project_to_pixel(true_model, q)
        if pixel_noise > 0:
            p = PixelPoint(p.u + rng.normal(0, pixel_noise), p.v + rng.normal(0, pixel_noise))
        obs.append((p, q))
    return obs


GRID_POINTS = [PlanePoint(x, y) for x in (-8.0, 0.0, 8.0) for y in (10.0, 16.0, 25.0)]


class TestFitCalibration:
    def setup_method(self):
        self.intr = CameraIntrinsics(1000.0, 1000.0, 0.0, 0.0)
        self.pose = CameraPose(height=8.24, pitch=math.radians(35.0))

    def test_zero_error_fixed_point(self):
        obs = make_observations(self.intr, self.pose, None, GRID_POINTS[:6])
        result = fit_calibration(self.intr, self.pose, obs)
        assert abs(result.correction.delta_pitch) < 1e-8
        assert abs(result.correction.delta_u0) < 1e-8
        assert abs(result.correction.delta_v0) < 1e-8
        assert result.rms < 1e-8

    def test_injected_corrections_recovered(self):
        injected = CalibrationCorrection(delta_pitch=math.radians(0.3), delta_v0=5.0)
        obs = make_observations(self.intr, self.pose, injected, GRID_POINTS[:6])
        result = fit_calibration(self.intr, self.pose, obs)
        assert result.correction.delta_pitch == pytest.approx(injected.delta_pitch, abs=1e-6)
        assert result.correction.delta_u0 == pytest.approx(0.0, abs=1e-6)
        assert result.correction.delta_v0 == pytest.approx(5.0, abs=1e-6)

    def test_noisy_recovery_monte_carlo(self):
        # A long focal length and a depth range spanning steep to shallow rays
        # keep the pitch offset separable from the principal point offset.
        intr = CameraIntrinsics(2000.0, 2000.0, 0.0, 0.0)
        pose = CameraPose(height=8.24, pitch=math.radians(45.0))
        injected = CalibrationCorrection(delta_pitch=math.radians(0.3), delta_v0=5.0)
        points = [PlanePoint(x, y) for y in (2.0, 3.0, 5.0, 8.24, 30.0)
                  for x in (-8.0, 8.0)]
        pitch_errors = []
        for seed in range(100):
            rng = np.random.default_rng(seed)
            obs = make_observations(intr, pose, injected, points,
                                    pixel_noise=0.5, rng=rng)
            result = fit_calibration(intr, pose, obs)
            pitch_errors.append(abs(result.correction.delta_pitch - injected.delta_pitch))
        assert np.median(pitch_errors) < math.radians(0.03)

    def test_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        obs = make_observations(self.intr, self.pose, None, GRID_POINTS)
        for _ in range(20):
            x = np.array([rng.uniform(-0.01, 0.01), rng.uniform(-3, 3), rng.uniform(-3, 3)])
            J = _calibration_jacobian(self.intr, self.pose, obs, x, False)
            for k in range(3):
                scale = max(abs(x[k]), 1.0)
                h = 1e-6 * scale
                e = np.zeros(3)
                e[k] = h
                fd = (_calibration_residuals(self.intr, self.pose, obs, x + e, False)
                      - _calibration_residuals(self.intr, self.pose, obs, x - e, False)) / (2 * h)
                denom = np.maximum(np.abs(fd), 1e-6)
                assert np.max(np.abs(J[:, k] - fd) / denom) < 1e-5

    def test_insufficient_points(self):
        obs = make_observations(self.intr, self.pose, None, GRID_POINTS[:2])
        with pytest.raises(InsufficientPoints):
            fit_calibration(self.intr, self.pose, obs)

    def test_degenerate_geometry(self):
        # All observations at the same pixel cannot separate the parameters.
        q = PlanePoint(0.0, 12.0)
        p = project_to_pixel(MonoRangingModel(self.intr, self.pose), q)
        obs = [(p, q)] * 5
        with pytest.raises(DegenerateGeometry):
            fit_calibration(self.intr, self.pose, obs)

    def test_no_convergence_raises(self):
        rng = np.random.default_rng(3)
        obs = make_observations(self.intr, self.pose, None, GRID_POINTS,
                                pixel_noise=2.0, rng=rng)
        config = LmConfig(max_iterations=1, cost_tolerance=1e-30, param_tolerance=1e-30)
        with pytest.raises(NoConvergence):
            fit_calibration(self.intr, self.pose, obs, config=config)

    def test_fit_height_optional(self):
        injected = CalibrationCorrection(delta_pitch=math.radians(0.2), delta_height=0.15)
        obs = make_observations(self.intr, self.pose, injected, GRID_POINTS[:8])
        result = fit_calibration(self.intr, self.pose, obs, fit_height=True)
        assert result.correction.delta_height == pytest.approx(0.15, abs=1e-5)
        assert result.correction.delta_pitch == pytest.approx(injected.delta_pitch, abs=1e-6)


class TestControlPointCsv:
    def test_load(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("u,v,X,Y\n10.5,20.25,1.0,15.0\n-3,7,-2.5,9.0\n")
        obs = load_control_points(str(path))
        assert obs[0][0] == PixelPoint(10.5, 20.25)
        assert obs[1][1] == PlanePoint(-2.5, 9.0)
