"""Planar projective maps: DLT estimation, RANSAC, camera-geometry BEV,
metric rectification, composition, and raster warping.

Homographies are stored normalized to unit Frobenius norm with the sign
chosen so the (3,3) entry is positive when it is meaningfully nonzero. That
keeps the representation stable when the (3,3) entry passes through zero
under optimizer updates, where the usual m33 = 1 scaling blows up.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateConfiguration,
    EmptyBounds,
    InsufficientPoints,
    InvalidPitch,
    NoConsensus,
    NotInvertible,
    PointAtInfinity,
)
from .geometry import CameraIntrinsics, CameraPose

_SIGN_EPS = 1e-9
_DET_EPS = 1e-12
_INFINITY_EPS = 1e-12


def _normalized(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"homography matrix must be 3x3, got {m.shape}")
    norm = np.linalg.norm(m)
    if not norm > 0 or not np.all(np.isfinite(m)):
        raise NotInvertible("homography matrix is zero or non-finite")
    m = m / norm
    anchor = m[2, 2] if abs(m[2, 2]) > _SIGN_EPS else m.flat[np.argmax(np.abs(m))]
    if anchor < 0:
        m = -m
    return m


class Homography:
    """Invertible 3x3 projective map, unit-Frobenius normalized."""

    __slots__ = ("m",)

    def __init__(self, m: np.ndarray):
        m = _normalized(m)
        if abs(np.linalg.det(m)) <= _DET_EPS:
            raise NotInvertible("homography matrix is singular")
        self.m = m
        self.m.setflags(write=False)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def apply(self, p) -> tuple[float, float]:
        """Apply the map to a 2D point with perspective division."""
        x, y = float(p[0]), float(p[1])
        h = self.m
        w = h[2, 0] * x + h[2, 1] * y + h[2, 2]
        if abs(w) < _INFINITY_EPS:
            raise PointAtInfinity(f"point ({x}, {y}) maps to infinity")
        return (
            (h[0, 0] * x + h[0, 1] * y + h[0, 2]) / w,
            (h[1, 0] * x + h[1, 1] * y + h[1, 2]) / w,
        )

    def apply_many(self, pts: np.ndarray) -> np.ndarray:
        """Vectorized apply for an (N, 2) array."""
        pts = np.asarray(pts, dtype=float)
        hom = np.column_stack([pts, np.ones(len(pts))]) @ self.m.T
        w = hom[:, 2]
        if np.any(np.abs(w) < _INFINITY_EPS):
            raise PointAtInfinity("one or more points map to infinity")
        return hom[:, :2] / w[:, None]

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.m))

    def __matmul__(self, other: "Homography") -> "Homography":
        return Homography(self.m @ other.m)

    def __repr__(self) -> str:
        return f"Homography({self.m.tolist()})"

    def allclose(self, other: "Homography", atol: float = 1e-12) -> bool:
        """Frobenius comparison after sign alignment."""
        a, b = self.m, other.m
        if float(np.sum(a * b)) < 0:
            b = -b
        return bool(np.linalg.norm(a - b) <= atol)

    def to_dict(self, frame_src: str = "", frame_dst: str = "") -> dict:
        return {"h": self.m.ravel().tolist(), "frame_src": frame_src, "frame_dst": frame_dst}

    @classmethod
    def from_dict(cls, d: dict) -> "Homography":
        return cls(np.asarray(d["h"], dtype=float).reshape(3, 3))

    def save(self, path: str, frame_src: str = "", frame_dst: str = "") -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(frame_src, frame_dst), fh, indent=2)

    @classmethod
    def load(cls, path: str) -> "Homography":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class EstimationReport:
    inlier_count: int
    rms_error: float  # pixels, or meters for metric targets
    condition_warning: bool = False


@dataclass(frozen=True)
class RansacConfig:
    threshold: float = 3.0  # target-frame units
    confidence: float = 0.999
    max_iterations: int = 2000
    seed: int | None = None


def _hartley_normalization(pts: np.ndarray) -> np.ndarray:
    """Similarity T moving the centroid to the origin and the mean distance to sqrt(2)."""
    centroid = pts.mean(axis=0)
    dists = np.linalg.norm(pts - centroid, axis=1)
    mean_dist = dists.mean()
    scale = math.sqrt(2.0) / mean_dist if mean_dist > 0 else 1.0
    return np.array([
        [scale, 0.0, -scale * centroid[0]],
        [0.0, scale, -scale * centroid[1]],
        [0.0, 0.0, 1.0],
    ])


def _dlt(src: np.ndarray, dst: np.ndarray) -> Homography:
    """Hartley-normalized direct linear transform."""
    T_src = _hartley_normalization(src)
    T_dst = _hartley_normalization(dst)
    s = np.column_stack([src, np.ones(len(src))]) @ T_src.T
    d = np.column_stack([dst, np.ones(len(dst))]) @ T_dst.T

    n = len(src)
    A = np.zeros((2 * n, 9))
    A[0::2, 0:3] = s
    A[0::2, 6:9] = -d[:, 0:1] * s
    A[1::2, 3:6] = s
    A[1::2, 6:9] = -d[:, 1:2] * s

    _, sv, vt = np.linalg.svd(A)
    # A minimal 8x9 system always has a 1-dim nullspace; a second vanishing
    # singular value means the solution is ambiguous. For n > 4 the smallest
    # singular value is the fit residual and ambiguity shows in the second
    # smallest instead.
    if len(sv) == 8:
        ambiguous = sv[-1] <= 1e-10 * sv[0]
    else:
        ambiguous = sv[-2] <= 1e-10 * sv[0] or (sv[-2] - sv[-1]) <= 1e-10 * sv[-2]
    if ambiguous:
        raise DegenerateConfiguration(
            "correspondences admit multiple homographies (rank-deficient DLT system)"
        )
    H_hat = vt[-1].reshape(3, 3)
    return Homography(np.linalg.inv(T_dst) @ H_hat @ T_src)


def _transfer_errors(h: Homography, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    return np.linalg.norm(h.apply_many(src) - dst, axis=1)


def estimate_dlt(
    src_points,
    dst_points,
    robust: RansacConfig | None = None,
) -> tuple[Homography, EstimationReport]:
    """Estimate the homography mapping src points onto dst points.

    With a RANSAC config, minimal 4-point models are sampled, scored by
    transfer error in the destination frame, and the final model is refit on
    the consensus set; without one, all correspondences are used directly.
    """
    src = np.asarray(src_points, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst_points, dtype=float).reshape(-1, 2)
    if len(src) != len(dst):
        raise ValueError("src and dst must have the same length")
    if len(src) < 4:
        raise InsufficientPoints(f"homography estimation needs >= 4 correspondences, got {len(src)}")

    if robust is None:
        h = _dlt(src, dst)
        errs = _transfer_errors(h, src, dst)
        return h, EstimationReport(inlier_count=len(src), rms_error=float(np.sqrt(np.mean(errs**2))))

    rng = np.random.default_rng(robust.seed)
    n = len(src)
    best_inliers: np.ndarray | None = None
    best_count = 0
    max_iter = robust.max_iterations
    it = 0
    while it < max_iter:
        it += 1
        idx = rng.choice(n, size=4, replace=False)
        try:
            h = _dlt(src[idx], dst[idx])
        except (DegenerateConfiguration, NotInvertible):
            continue
        try:
            errs = _transfer_errors(h, src, dst)
        except PointAtInfinity:
            continue
        inliers = errs < robust.threshold
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers
            # Adaptive iteration bound from the current inlier ratio.
            ratio = count / n
            if ratio > 0:
                denom = math.log(max(1.0 - ratio**4, 1e-15))
                needed = math.log(1.0 - robust.confidence) / denom
                max_iter = min(robust.max_iterations, max(int(math.ceil(needed)), it))
    if best_inliers is None or best_count < 4:
        raise NoConsensus(f"RANSAC found only {best_count} inliers (need >= 4)")

    h = _dlt(src[best_inliers], dst[best_inliers])
    errs = _transfer_errors(h, src[best_inliers], dst[best_inliers])
    return h, EstimationReport(inlier_count=best_count, rms_error=float(np.sqrt(np.mean(errs**2))))


def metric_rectify(
    pixel_points,
    world_points,
    robust: RansacConfig | None = None,
) -> tuple[Homography, EstimationReport]:
    """Homography from image pixels to surveyed world coordinates (meters)."""
    return estimate_dlt(pixel_points, world_points, robust)


def bev_from_camera(intrinsics: CameraIntrinsics, pose: CameraPose, ground_scale: float = 1.0) -> Homography:
    """Image-to-overhead homography from camera geometry.

    Maps pixel (u, v) to ground_scale * world coordinates of the pixel ray's
    ground intersection, matching ``mono.locate`` for the same camera. Exact
    when f_x = f_y * pixel_aspect (true for physically consistent intrinsics,
    where both reduce to f over the pixel pitches).
    """
    if not (0.0 < pose.pitch < math.pi / 2 + 1e-12):
        raise InvalidPitch(f"pitch must lie in (0, pi/2], got {pose.pitch}")
    if ground_scale <= 0:
        raise ValueError("ground_scale must be positive")
    fx, fy = intrinsics.f_x, intrinsics.f_y
    u0, v0 = intrinsics.u0, intrinsics.v0
    H = pose.height
    sa, ca = math.sin(pose.pitch), math.cos(pose.pitch)
    # Camera-frame map: [X, Y, 1] ~ M [u, v, 1] with shared denominator
    # w = f_y sin(a) - (v - v0) cos(a).
    M = np.array([
        [H * fy / fx, 0.0, -H * fy * u0 / fx],
        [0.0, H * sa, H * (fy * ca - v0 * sa)],
        [0.0, -ca, fy * sa + v0 * ca],
    ])
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    px, py = pose.position
    world = np.array([
        [c, s, px],
        [-s, c, py],
        [0.0, 0.0, 1.0],
    ])
    scale = np.diag([ground_scale, ground_scale, 1.0])
    return Homography(scale @ world @ M)


def warp_raster(
    h: Homography,
    src: np.ndarray,
    out_bounds: tuple[int, int, int, int],
    interp: str = "bilinear",
    fill: float = 0,
) -> np.ndarray:
    """Inverse-mapping warp of a raster through ``h`` (src pixel -> dst frame).

    ``out_bounds`` is (x0, y0, width, height) in the destination frame; the
    output raster's pixel (col, row) samples destination coordinates
    (x0 + col, y0 + row). Samples outside the source are set to ``fill``.
    """
    x0, y0, width, height = out_bounds
    if width <= 0 or height <= 0:
        raise EmptyBounds(f"output bounds {out_bounds} contain no pixels")
    if interp not in ("nearest", "bilinear"):
        raise ValueError(f"unknown interpolation {interp!r}")

    hinv = np.linalg.inv(h.m)
    cols, rows = np.meshgrid(np.arange(width) + x0, np.arange(height) + y0)
    ones = np.ones_like(cols, dtype=float)
    dst_h = np.stack([cols.astype(float), rows.astype(float), ones])
    src_h = np.tensordot(hinv, dst_h, axes=1)
    w = src_h[2]
    valid = np.abs(w) > _INFINITY_EPS
    w_safe = np.where(valid, w, 1.0)
    sx = src_h[0] / w_safe
    sy = src_h[1] / w_safe

    sh, sw = src.shape[:2]
    out_shape = (height, width) + src.shape[2:]
    out = np.full(out_shape, fill, dtype=src.dtype)

    if interp == "nearest":
        xi = np.round(sx).astype(int)
        yi = np.round(sy).astype(int)
        inside = valid & (xi >= 0) & (xi < sw) & (yi >= 0) & (yi < sh)
        out[inside] = src[yi[inside], xi[inside]]
        return out

    inside = valid & (sx >= 0) & (sx <= sw - 1) & (sy >= 0) & (sy <= sh - 1)
    # Clamp the base cell so exact right/bottom edges still sample in-range.
    xi = np.clip(np.floor(sx[inside]), 0, sw - 2).astype(int)
    yi = np.clip(np.floor(sy[inside]), 0, sh - 2).astype(int)
    ax = (sx[inside] - xi)
    ay = (sy[inside] - yi)
    if src.ndim == 3:
        ax = ax[:, None]
        ay = ay[:, None]
    vals = (
        src[yi, xi].astype(float) * (1 - ax) * (1 - ay)
        + src[yi, xi + 1].astype(float) * ax * (1 - ay)
        + src[yi + 1, xi].astype(float) * (1 - ax) * ay
        + src[yi + 1, xi + 1].astype(float) * ax * ay
    )
    if np.issubdtype(src.dtype, np.integer):
        vals = np.rint(vals)
    out[inside] = vals.astype(src.dtype)
    return out


def load_raster(path: str) -> np.ndarray:
    """Read an 8-bit grayscale or RGB image (PNG, PGM, PPM, ...)."""
    from PIL import Image

    img = Image.open(path)
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB")
    return np.asarray(img)


def save_raster(path: str, data: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(np.asarray(data, dtype=np.uint8)).save(path)
