import math

import numpy as np
import pytest

from planemetry.geometry import CameraIntrinsics, CameraPose


@pytest.fixture
def simple_intrinsics():
    return CameraIntrinsics(f_x=1000.0, f_y=1000.0, u0=0.0, v0=0.0)


@pytest.fixture
def reservoir_pose():
    # Height from the measurement example; pitch in the stable regime.
    return CameraPose(height=8.24, pitch=math.radians(30.0))


def random_camera(rng: np.random.Generator):
    """A random but well-behaved camera for round-trip property tests."""
    f = rng.uniform(500.0, 2000.0)
    intr = CameraIntrinsics(
        f_x=f,
        f_y=f * rng.uniform(0.95, 1.05),
        u0=rng.uniform(-100.0, 100.0),
        v0=rng.uniform(-100.0, 100.0),
        pixel_aspect=rng.uniform(0.8, 1.25),
    )
    pose = CameraPose(
        height=rng.uniform(2.0, 50.0),
        pitch=rng.uniform(math.radians(5.0), math.radians(60.0)),
        yaw=rng.uniform(-math.pi, math.pi),
        position=(rng.uniform(-100.0, 100.0), rng.uniform(-100.0, 100.0)),
    )
    return intr, pose
