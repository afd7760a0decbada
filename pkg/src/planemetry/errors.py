"""Typed error hierarchy shared by all planemetry modules."""


class PlanemetryError(Exception):
    """Base class for all domain errors raised by this package."""


# --- configuration / I/O ---

class UnknownConfigField(PlanemetryError):
    """A configuration file contains a field this package does not define."""


class InvalidConfig(PlanemetryError):
    """A configuration file is missing fields or holds out-of-range values."""


# --- monocular ranging ---

class RayAboveHorizon(PlanemetryError):
    """The pixel ray never intersects the ground plane in front of the camera."""


class BehindCamera(PlanemetryError):
    """The requested plane point lies behind the camera."""


class OffImagePlane(PlanemetryError):
    """The plane point projects outside the valid image half-space."""


class InvalidRange(PlanemetryError):
    """Sweep bounds or step are out of the supported range."""


class InsufficientPoints(PlanemetryError):
    """Fewer observations than the minimum the estimator requires."""


class DegenerateGeometry(PlanemetryError):
    """Observation geometry does not constrain the fit (near-singular normal equations)."""


class NoConvergence(PlanemetryError):
    """Iterative solver hit the iteration cap before meeting its tolerances."""


class RayTooShallowWarning(UserWarning):
    """Depression angle is inside the instability regime; result is unreliable."""


# --- homography ---

class PointAtInfinity(PlanemetryError):
    """Projective application sent the point to (or near) the plane at infinity."""


class DegenerateConfiguration(PlanemetryError):
    """Correspondences admit an ambiguous homography (rank-deficient system)."""


class NoConsensus(PlanemetryError):
    """RANSAC could not find a minimal consensus set."""


class InvalidPitch(PlanemetryError):
    """Camera pitch outside (0, pi/2); no ground-plane homography exists."""


class EmptyBounds(PlanemetryError):
    """Requested output rectangle has no pixels."""


class NotInvertible(PlanemetryError):
    """Matrix is singular beyond the invertibility tolerance."""


# --- mosaic / bundle adjustment ---

class SolveDisconnected(PlanemetryError):
    """Correspondence graph is not connected; no joint solution exists."""


class NoGauge(PlanemetryError):
    """Neither an anchor image nor enough control points fix the plane frame."""


class NumericalFailure(PlanemetryError):
    """Non-finite cost or parameters encountered during optimization."""


class UnknownImage(PlanemetryError):
    """Referenced image id is not part of the graph or solution."""


# --- stereo ranging ---

class DegenerateTriangle(PlanemetryError):
    """Rays are near-parallel; the baseline triangle does not close."""


class BearingBehindBaseline(PlanemetryError):
    """Camera bearings do not intersect on a common side of the baseline."""


# --- simulation ---

class NoOverlap(PlanemetryError):
    """Camera footprints do not overlap enough to connect the graph."""
