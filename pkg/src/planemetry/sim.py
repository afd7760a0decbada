"""Synthetic scenes and Monte-Carlo error evaluation.

Generation is fully deterministic under the noise-model seed: each trial
draws from its own child of a master ``SeedSequence``, so results do not
depend on evaluation order. Noise is composed in a fixed order: pose
perturbation per trial, then pixel-space Gaussian noise per observation,
then outlier replacement.

For stereo evaluation pixels are generated from the bearing model
u = u0 + f_x * tan(bearing - yaw), the exact inverse of the pixel-yaw
formula the estimator uses. This keeps the zero-noise round trip exact and
makes the estimator's pitch invariance literal: perturbing pitch changes
neither generation nor estimation.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BehindCamera,
    InvalidConfig,
    NoOverlap,
    OffImagePlane,
    RayAboveHorizon,
    RayTooShallowWarning,
    UnknownConfigField,
)
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    PixelPoint,
    PlanePoint,
    bearing,
    camera_from_dict,
    deg_to_rad,
    normalize_angle,
)
from .mono import MonoRangingModel, locate, project_to_pixel
from .mosaic import Control, CorrespondenceGraph, Edge, ImageNode
from .stereo import StereoRig, range_target


@dataclass(frozen=True)
class NoiseModel:
    pixel_sigma: float = 0.0       # px
    pitch_sigma: float = 0.0       # radians
    yaw_sigma: float = 0.0         # radians
    height_sigma: float = 0.0      # meters
    outlier_fraction: float = 0.0
    outlier_scale: float = 0.0     # px
    seed: int = 0

    def __post_init__(self) -> None:
        sigmas = (self.pixel_sigma, self.pitch_sigma, self.yaw_sigma,
                  self.height_sigma, self.outlier_scale)
        if any(s < 0 for s in sigmas):
            raise InvalidConfig("noise sigmas must be non-negative")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise InvalidConfig("outlier_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class SceneSpec:
    cameras: list[tuple[CameraIntrinsics, CameraPose]]
    plane_extent: tuple[float, float] = (220.0, 300.0)
    layout: str = "grid"  # "grid" or "random"
    point_count: int = 100
    control_point_count: int = 8
    image_size: tuple[int, int] = (1920, 1080)
    points: tuple[PlanePoint, ...] | None = None  # explicit override of the layout

    def __post_init__(self) -> None:
        if self.plane_extent[0] <= 0 or self.plane_extent[1] <= 0:
            raise InvalidConfig("plane extent must be positive")
        if not self.cameras:
            raise InvalidConfig("scene needs at least one camera")
        if self.layout not in ("grid", "random"):
            raise InvalidConfig(f"unknown point layout {self.layout!r}")


def scene_points(spec: SceneSpec, rng: np.random.Generator) -> list[PlanePoint]:
    """Ground-truth plane points: x spans the lateral extent symmetrically,
    y runs from just in front of the camera line to the far edge."""
    if spec.points is not None:
        return list(spec.points)
    ex, ey = spec.plane_extent
    if spec.layout == "grid":
        nx = max(2, int(round(math.sqrt(spec.point_count * ex / ey))))
        ny = max(2, int(math.ceil(spec.point_count / nx)))
        xs = np.linspace(-ex / 2, ex / 2, nx)
        ys = np.linspace(0.5, ey, ny)
        return [PlanePoint(float(x), float(y)) for y in ys for x in xs]
    xs = rng.uniform(-ex / 2, ex / 2, spec.point_count)
    ys = rng.uniform(0.5, ey, spec.point_count)
    return [PlanePoint(float(x), float(y)) for x, y in zip(xs, ys)]


def perturb_pose(pose: CameraPose, noise: NoiseModel, rng: np.random.Generator) -> CameraPose:
    """Draw one per-trial pose perturbation (always draws, for determinism)."""
    d_pitch, d_yaw, d_height = rng.normal(0.0, 1.0, 3)
    return CameraPose(
        height=pose.height + d_height * noise.height_sigma,
        pitch=pose.pitch + d_pitch * noise.pitch_sigma,
        yaw=pose.yaw + d_yaw * noise.yaw_sigma,
        position=pose.position,
    )


def _visible(p: PixelPoint, intr: CameraIntrinsics, image_size: tuple[int, int]) -> bool:
    w, h = image_size
    return abs(p.u - intr.u0) <= w / 2 and abs(p.v - intr.v0) <= h / 2


def _noisy_pixel(p: PixelPoint, noise: NoiseModel, rng: np.random.Generator) -> PixelPoint:
    du, dv = rng.normal(0.0, 1.0, 2)
    u = p.u + du * noise.pixel_sigma
    v = p.v + dv * noise.pixel_sigma
    if noise.outlier_fraction > 0 and rng.uniform() < noise.outlier_fraction:
        ou, ov = rng.uniform(-1.0, 1.0, 2)
        u = p.u + ou * noise.outlier_scale
        v = p.v + ov * noise.outlier_scale
    return PixelPoint(float(u), float(v))


@dataclass
class CameraObservations:
    camera_index: int
    true_pose: CameraPose
    samples: list[tuple[PlanePoint, PixelPoint]]


@dataclass
class Observations:
    per_camera: list[CameraObservations]
    not_visible: int


def generate_observations(spec: SceneSpec, noise: NoiseModel,
                          seed=None) -> Observations:
    """Forward-project the scene through each (perturbed) camera."""
    rng = np.random.default_rng(noise.seed if seed is None else seed)
    points = scene_points(spec, rng)
    per_camera: list[CameraObservations] = []
    skipped = 0
    for idx, (intr, pose) in enumerate(spec.cameras):
        true_pose = perturb_pose(pose, noise, rng)
        model = MonoRangingModel(intr, true_pose)
        samples: list[tuple[PlanePoint, PixelPoint]] = []
        for q in points:
            try:
                pix = project_to_pixel(model, q)
            except (BehindCamera, OffImagePlane):
                skipped += 1
                continue
            if not _visible(pix, intr, spec.image_size):
                skipped += 1
                continue
            samples.append((q, _noisy_pixel(pix, noise, rng)))
        per_camera.append(CameraObservations(idx, true_pose, samples))
    return Observations(per_camera=per_camera, not_visible=skipped)


@dataclass(frozen=True)
class ErrorReport:
    errors: np.ndarray     # absolute world error per evaluated point, meters
    relative: np.ndarray   # absolute error / true range, pointwise
    trials: int
    failed: int = 0        # observations the estimator rejected

    @property
    def median(self) -> float:
        return float(np.median(self.errors))

    def summary(self) -> dict:
        if len(self.errors) == 0:
            return {"count": 0, "trials": self.trials, "failed": self.failed}
        return {
            "count": int(len(self.errors)),
            "trials": self.trials,
            "failed": self.failed,
            "mean": float(np.mean(self.errors)),
            "median": float(np.median(self.errors)),
            "p95": float(np.percentile(self.errors, 95)),
            "max": float(np.max(self.errors)),
            "median_relative": float(np.median(self.relative)),
        }

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["abs_error_m", "relative_error"])
            for e, r in zip(self.errors, self.relative):
                writer.writerow([f"{e:.9f}", f"{r:.9e}"])


def _trial_seeds(master_seed: int, trials: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(master_seed).spawn(trials)


def evaluate_mono(spec: SceneSpec, noise: NoiseModel, trials: int) -> ErrorReport:
    """Monte-Carlo error of monocular localization under the noise model.

    Each trial projects the truth through a perturbed camera and estimates
    with the nominal (unperturbed) model, mimicking a camera whose reported
    pose is slightly wrong.
    """
    errors: list[float] = []
    relative: list[float] = []
    failed = 0
    nominal_models = [MonoRangingModel(intr, pose) for intr, pose in spec.cameras]
    for child in _trial_seeds(noise.seed, trials):
        obs = generate_observations(spec, noise, seed=child)
        for cam_obs in obs.per_camera:
            model = nominal_models[cam_obs.camera_index]
            pos = model.pose.position
            for truth, pix in cam_obs.samples:
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", RayTooShallowWarning)
                        est = locate(model, pix)
                except RayAboveHorizon:
                    failed += 1
                    continue
                err = math.hypot(est.x - truth.x, est.y - truth.y)
                rng_true = math.hypot(truth.x - pos[0], truth.y - pos[1])
                errors.append(err)
                relative.append(err / rng_true)
    return ErrorReport(np.asarray(errors), np.asarray(relative), trials, failed)


def rig_from_scene(spec: SceneSpec) -> StereoRig:
    if len(spec.cameras) != 2:
        raise InvalidConfig("stereo evaluation needs exactly two cameras")
    (ia, pa), (ib, pb) = spec.cameras
    dx = pb.position[0] - pa.position[0]
    dy = pb.position[1] - pa.position[1]
    d = math.hypot(dx, dy)
    if d <= 0:
        raise InvalidConfig("stereo cameras must sit at distinct positions")
    return StereoRig(cam_a=(ia, pa), cam_b=(ib, pb), baseline=d,
                     baseline_azimuth=bearing(dx, dy))


def bearing_to_pixel(intr: CameraIntrinsics, yaw: float, target_bearing: float) -> PixelPoint | None:
    """Pixel column at which a world bearing appears; None outside the
    half-space the pixel-yaw model covers."""
    offset = normalize_angle(target_bearing - yaw)
    if abs(offset) >= math.pi / 2:
        return None
    return PixelPoint(intr.u0 + intr.f_x * math.tan(offset), intr.v0)


def evaluate_stereo(spec: SceneSpec, noise: NoiseModel, trials: int) -> ErrorReport:
    """Monte-Carlo error of two-camera law-of-sines ranging.

    Yaw noise perturbs the true camera heading while the estimator keeps the
    nominal (SDK-reported) yaw; pitch noise is drawn but cannot affect the
    result since neither generation nor estimation uses pitch.
    """
    rig = rig_from_scene(spec)
    errors: list[float] = []
    relative: list[float] = []
    failed = 0
    pos_a = rig.cam_a[1].position
    for child in _trial_seeds(noise.seed, trials):
        rng = np.random.default_rng(child)
        points = scene_points(spec, rng)
        true_poses = [perturb_pose(pose, noise, rng) for _, pose in spec.cameras]
        for q in points:
            pixels = []
            for (intr, pose), true_pose in zip(spec.cameras, true_poses):
                theta = bearing(q.x - pose.position[0], q.y - pose.position[1])
                pix = bearing_to_pixel(intr, true_pose.yaw, theta)
                if pix is not None:
                    pix = _noisy_pixel(pix, noise, rng)
                pixels.append(pix)
            if pixels[0] is None or pixels[1] is None:
                failed += 1
                continue
            try:
                sol = range_target(rig, pixels[0], pixels[1])
            except Exception:
                failed += 1
                continue
            err = math.hypot(sol.target.x - q.x, sol.target.y - q.y)
            rng_true = math.hypot(q.x - pos_a[0], q.y - pos_a[1])
            errors.append(err)
            relative.append(err / rng_true)
    return ErrorReport(np.asarray(errors), np.asarray(relative), trials, failed)


def generate_ba_graph(spec: SceneSpec, noise: NoiseModel,
                      matches_per_edge: int = 30,
                      min_shared: int = 8) -> CorrespondenceGraph:
    """Build a correspondence graph from co-visible ground points.

    Cameras keep their true (nominal) poses for projection; the graph's
    image nodes carry pose-perturbed copies, standing in for inaccurate
    SDK-reported parameters that the bundle adjustment must overcome.
    Control points (world-exact, pixel-noisy) go to the first camera to fix
    the gauge, with any remainder spread over the other cameras.
    """
    rng = np.random.default_rng(noise.seed)
    points = scene_points(spec, rng)
    reported_poses = [perturb_pose(pose, noise, rng) for _, pose in spec.cameras]

    visible: list[dict[int, PixelPoint]] = []
    for intr, pose in spec.cameras:
        model = MonoRangingModel(intr, pose)
        seen: dict[int, PixelPoint] = {}
        for k, q in enumerate(points):
            try:
                pix = project_to_pixel(model, q)
            except (BehindCamera, OffImagePlane):
                continue
            if _visible(pix, intr, spec.image_size):
                seen[k] = pix
        visible.append(seen)

    n = len(spec.cameras)
    ids = [f"img{idx}" for idx in range(n)]
    edges: list[Edge] = []
    for i in range(n):
        for j in range(i + 1, n):
            shared = sorted(set(visible[i]) & set(visible[j]))
            if len(shared) < max(4, min_shared):
                continue
            if len(shared) > matches_per_edge:
                shared = [shared[k] for k in
                          rng.choice(len(shared), matches_per_edge, replace=False)]
            rows = []
            for k in shared:
                pa = _noisy_pixel(visible[i][k], noise, rng)
                pb = _noisy_pixel(visible[j][k], noise, rng)
                rows.append([pa.u, pa.v, pb.u, pb.v])
            edges.append(Edge(ids[i], ids[j], np.asarray(rows)))

    controls: list[Control] = []
    gauge_candidates = sorted(visible[0])
    if len(gauge_candidates) < 4:
        raise NoOverlap("first camera sees fewer than 4 points; cannot fix the gauge")
    n_gauge = min(max(4, spec.control_point_count // 2), spec.control_point_count)
    picks = [gauge_candidates[k] for k in
             rng.choice(len(gauge_candidates), min(n_gauge, len(gauge_candidates)), replace=False)]
    for k in picks:
        controls.append(Control(ids[0], _noisy_pixel(visible[0][k], noise, rng), points[k]))
    attempts = 0
    cam = 1 % n
    while len(controls) < spec.control_point_count and n > 1 and attempts < 4 * n:
        attempts += 1
        candidates = sorted(visible[cam])
        if candidates:
            k = int(rng.choice(candidates))
            controls.append(Control(ids[cam], _noisy_pixel(visible[cam][k], noise, rng), points[k]))
        cam = cam % (n - 1) + 1

    images = [ImageNode(ids[i], spec.cameras[i][0], reported_poses[i]) for i in range(n)]
    graph = CorrespondenceGraph(images=images, edges=edges, controls=controls)
    try:
        graph.validate()
    except Exception as exc:
        raise NoOverlap(f"generated graph is unusable: {exc}") from exc
    return graph


# --- JSON I/O for scene and noise specs -------------------------------------

_NOISE_FIELDS = {"pixel_sigma", "pitch_sigma_deg", "yaw_sigma_deg", "height_sigma",
                 "outlier_fraction", "outlier_scale", "seed"}


def noise_from_dict(cfg: dict) -> NoiseModel:
    unknown = set(cfg) - _NOISE_FIELDS
    if unknown:
        raise UnknownConfigField(f"unknown noise fields: {sorted(unknown)}")
    return NoiseModel(
        pixel_sigma=float(cfg.get("pixel_sigma", 0.0)),
        pitch_sigma=deg_to_rad(float(cfg.get("pitch_sigma_deg", 0.0))),
        yaw_sigma=deg_to_rad(float(cfg.get("yaw_sigma_deg", 0.0))),
        height_sigma=float(cfg.get("height_sigma", 0.0)),
        outlier_fraction=float(cfg.get("outlier_fraction", 0.0)),
        outlier_scale=float(cfg.get("outlier_scale", 0.0)),
        seed=int(cfg.get("seed", 0)),
    )


def load_noise(path: str) -> NoiseModel:
    with open(path, "r", encoding="utf-8") as fh:
        return noise_from_dict(json.load(fh))


_SCENE_FIELDS = {"plane_extent", "layout", "point_count", "control_point_count",
                 "image_size", "cameras", "points"}


def scene_from_dict(cfg: dict) -> SceneSpec:
    unknown = set(cfg) - _SCENE_FIELDS
    if unknown:
        raise UnknownConfigField(f"unknown scene fields: {sorted(unknown)}")
    if "cameras" not in cfg or not cfg["cameras"]:
        raise InvalidConfig("scene spec needs a non-empty cameras list")
    cameras = [camera_from_dict(c) for c in cfg["cameras"]]
    points = None
    if cfg.get("points") is not None:
        points = tuple(PlanePoint(float(p[0]), float(p[1])) for p in cfg["points"])
    return SceneSpec(
        cameras=cameras,
        plane_extent=tuple(cfg.get("plane_extent", (220.0, 300.0))),
        layout=cfg.get("layout", "grid"),
        point_count=int(cfg.get("point_count", 100)),
        control_point_count=int(cfg.get("control_point_count", 8)),
        image_size=tuple(cfg.get("image_size", (1920, 1080))),
        points=points,
    )


def load_scene(path: str) -> SceneSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return scene_from_dict(json.load(fh))
