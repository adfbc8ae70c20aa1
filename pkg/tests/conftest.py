import numpy as np
import pytest

from worldtraj.geometry import CameraPose, Extrinsics, Intrinsics, random_rotation


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_pose(rng, max_offset: float = 2.0) -> Extrinsics:
    r = random_rotation(rng)
    t = rng.uniform(-max_offset, max_offset, size=3)
    return Extrinsics(r, t)


def default_k(width: int = 100, height: int = 100) -> Intrinsics:
    return Intrinsics(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=width, height=height)


def identity_cam(k: Intrinsics) -> CameraPose:
    return CameraPose(k, Extrinsics.identity())
