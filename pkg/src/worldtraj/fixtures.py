"""Synthetic scenes and camera paths used by the demo command, the
evaluation harness, and the test suite.

Every fixture starts its camera script at the identity pose, so the world
frame coincides with the first camera frame and the sketch plane of a
centered object is exactly its square's plane.
"""

from __future__ import annotations

import numpy as np

from .geometry import CameraPose, Extrinsics, Intrinsics, project, rot_y
from .trajectory import UserTrajectory
from .worldsim import SceneObject, SyntheticScene


def default_intrinsics(width: int = 256, height: int = 256) -> Intrinsics:
    f = 0.9 * min(width, height)
    return Intrinsics(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0, width=width, height=height)


def look_at(center: np.ndarray, target: np.ndarray) -> Extrinsics:
    """World-to-camera pose with the optical axis through target.

    Keeps the camera's x axis level with the world x-z plane; degenerate when
    the view direction is parallel to world y.
    """
    center = np.asarray(center, dtype=float)
    target = np.asarray(target, dtype=float)
    fwd = target - center
    fwd = fwd / np.linalg.norm(fwd)
    down = np.array([0.0, 1.0, 0.0])
    right = np.cross(down, fwd)
    n = np.linalg.norm(right)
    if n < 1e-9:
        raise ValueError("look_at degenerate: view direction parallel to world y")
    right = right / n
    down = np.cross(fwd, right)
    r = np.stack([right, down, fwd])
    return Extrinsics(r, -r @ center)


def static_path(k: Intrinsics, frames: int, pose: Extrinsics | None = None) -> list[CameraPose]:
    pose = pose or Extrinsics.identity()
    return [CameraPose(k, pose)] * frames


def yaw_schedule_path(k: Intrinsics, yaw_deg: list[float]) -> list[CameraPose]:
    """Camera rotating in place (center fixed at the origin) by per-frame yaw."""
    poses = []
    for deg in yaw_deg:
        r = rot_y(np.radians(deg)).T  # world-to-camera of a camera yawed by deg
        poses.append(CameraPose(k, Extrinsics(r, np.zeros(3))))
    return poses


def orbit_path(
    k: Intrinsics, target: np.ndarray, radius: float, total_deg: float, frames: int
) -> list[CameraPose]:
    """Camera centers on a horizontal arc around target, always looking at it.

    Accumulated camera rotation over the path equals total_deg.
    """
    target = np.asarray(target, dtype=float)
    poses = []
    for i in range(frames):
        phi = np.radians(total_deg) * (i / max(frames - 1, 1))
        center = target + radius * np.array([-np.sin(phi), 0.0, -np.cos(phi)])
        poses.append(CameraPose(k, look_at(center, target)))
    return poses


def single_object_scene(
    width: int = 256,
    height: int = 256,
    depth: float = 4.0,
    half_extent: float = 0.35,
    object_id: str = "obj",
) -> SyntheticScene:
    """One square centered on the optical axis of the identity camera."""
    return SyntheticScene(
        objects=[
            SceneObject(
                id=object_id,
                position=np.array([0.0, 0.0, depth]),
                half_extent=half_extent,
                texture_seed=7,
            )
        ],
        width=width,
        height=height,
    )


def straight_sketch(
    k: Intrinsics, frames: int, dx_px: float, dy_px: float = 0.0, track_id: str = "t0"
) -> UserTrajectory:
    """Per-frame sketch from the principal point moving (dx_px, dy_px) total."""
    pts = []
    for t in range(frames):
        a = t / max(frames - 1, 1)
        pts.append((t, np.array([k.cx + a * dx_px, k.cy + a * dy_px])))
    return UserTrajectory(track_id=track_id, click=np.array([k.cx, k.cy]), points=tuple(pts))


def orbit_fixture(bucket: str, width: int = 256, height: int = 256, frames: int = 97):
    """Scene + arcing cameras + sketch, with camera rotation in the bucket.

    The cameras orbit a pivot offset from (and behind) the object, so the
    camera both translates and rotates while the object drifts across the
    frame: raw-pixel conditioning is visibly wrong here while world-space
    conditioning compensates exactly. Returns (scene, trajectory, cameras,
    true anchor depth, total rotation in degrees).
    """
    total_deg = {"small": 10.0, "mid": 30.0, "large": 60.0}[bucket]
    k = default_intrinsics(width, height)
    scene = single_object_scene(width, height, depth=4.0, half_extent=0.10)
    pivot = np.array([1.0, 0.0, 6.0])
    cameras = orbit_path(k, pivot, radius=float(np.linalg.norm(pivot)), total_deg=total_deg, frames=frames)
    c0 = project(cameras[0].k, cameras[0].e, scene.objects[0].position).pixel
    d_true = float(cameras[0].e.apply(scene.objects[0].position)[2])
    pts = tuple((t, c0 + np.array([26.0, 12.0]) * t / max(frames - 1, 1)) for t in range(frames))
    traj = UserTrajectory(track_id="t0", click=c0, points=pts)
    return scene, traj, cameras, d_true, total_deg


def pan_away_fixture(width: int = 256, height: int = 256):
    """Camera pans away from a moving object, then cuts back to the start pose.

    Timeline (horizon 32, chunk 8): frames 0-7 static, 8-9 turning (object
    still visible), 10-23 turned away (object off-screen), 24-31 back at the
    start pose. The sketch holds the object still through frame 10, then
    displaces it while it is hidden. Returns (scene, trajectory, cameras,
    config kwargs, expected re-entry frame).
    """
    k = default_intrinsics(width, height)
    scene = single_object_scene(width, height, depth=4.0)
    yaw = [0.0] * 8 + [8.0, 20.0] + [45.0, 60.0] + [60.0] * 12 + [0.0] * 8
    cameras = yaw_schedule_path(k, yaw)

    dx_px = 46.0
    pts = (
        (0, np.array([k.cx, k.cy])),
        (10, np.array([k.cx, k.cy])),
        (20, np.array([k.cx + dx_px, k.cy])),
    )
    traj = UserTrajectory(track_id="t0", click=np.array([k.cx, k.cy]), points=pts)
    cfg_kwargs = dict(horizon=32, chunk_size=8, tau=0.9, preexit_k=2, memory_capacity=64)
    return scene, traj, cameras, cfg_kwargs, 24


def projected_center(scene: SyntheticScene, cam: CameraPose, object_id: str) -> np.ndarray:
    proj = project(cam.k, cam.e, scene.object_by_id(object_id).position)
    return proj.pixel
