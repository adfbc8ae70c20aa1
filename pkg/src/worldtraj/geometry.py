"""Projective camera geometry and rigid/similarity transforms.

Conventions used throughout the package:

  World frame   right-handed, arbitrary origin.
  Camera frame  right-handed, x right, y down, +z forward (optical axis).
  Extrinsics    world-to-camera: X_cam = R @ X_world + t.
  Pixels        continuous coordinates; pixel (ix, iy) covers
                [ix, ix+1) x [iy, iy+1), its center is (ix+0.5, iy+0.5).
  Depth         z-coordinate in the camera frame (not ray length).

All matrices are stored row-major as float64 numpy arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class GeometryError(ValueError):
    """Invalid geometric input (bad pose, non-positive depth, ...)."""


class DegenerateGeometryError(GeometryError):
    """Point configuration too degenerate for the requested estimate."""


_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics plus the frame size they apply to."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError(f"focal lengths must be positive, got ({self.fx}, {self.fy})")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError(
                f"principal point ({self.cx}, {self.cy}) outside frame "
                f"{self.width}x{self.height}"
            )

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @classmethod
    def from_matrix(cls, k: np.ndarray, width: int, height: int) -> "Intrinsics":
        k = np.asarray(k, dtype=float).reshape(3, 3)
        return cls(fx=k[0, 0], fy=k[1, 1], cx=k[0, 2], cy=k[1, 2], width=width, height=height)

    def contains(self, pixel: np.ndarray) -> bool:
        x, y = float(pixel[0]), float(pixel[1])
        return 0.0 <= x < self.width and 0.0 <= y < self.height


@dataclass(frozen=True)
class Extrinsics:
    """World-to-camera rigid transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(t)):
            raise GeometryError("pose contains non-finite entries")
        if np.max(np.abs(r.T @ r - np.eye(3))) > _ORTHO_TOL:
            raise GeometryError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise GeometryError("rotation determinant is not +1 (reflection?)")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Extrinsics":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Extrinsics":
        m = np.asarray(m, dtype=float).reshape(4, 4)
        return cls(m[:3, :3], m[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, p_world: np.ndarray) -> np.ndarray:
        """Map world coordinates to camera coordinates."""
        return self.rotation @ np.asarray(p_world, dtype=float) + self.translation

    def inverse(self) -> "Extrinsics":
        rt = self.rotation.T
        return Extrinsics(rt, -rt @ self.translation)

    def compose(self, other: "Extrinsics") -> "Extrinsics":
        """self after other: (self o other)(x) = self(other(x))."""
        return Extrinsics(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    @property
    def camera_center(self) -> np.ndarray:
        """Camera optical center in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def forward_axis(self) -> np.ndarray:
        """Camera +z axis expressed in world coordinates."""
        return self.rotation[2, :].copy()


@dataclass(frozen=True)
class Sim3:
    """Similarity transform x -> scale * R @ x + t."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        if not self.scale > 0:
            raise GeometryError(f"similarity scale must be positive, got {self.scale}")
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-8 or np.linalg.det(r) < 0:
            raise GeometryError("similarity rotation is not a proper rotation")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return self.scale * pts @ self.rotation.T + self.translation


class Projection(NamedTuple):
    """Result of projecting a world point: screen pixel, camera depth, behind flag."""

    pixel: np.ndarray
    depth: float
    behind: bool


def project(k: Intrinsics, e: Extrinsics, p_world: np.ndarray) -> Projection:
    """Perspective-project a 3D world point into screen space.

    Behind-camera points (depth <= 0) are flagged, not rejected; callers that
    track off-screen trajectories need the flag.
    """
    p_world = np.asarray(p_world, dtype=float)
    if not np.all(np.isfinite(p_world)):
        raise GeometryError("cannot project non-finite point")
    pc = e.apply(p_world)
    z = float(pc[2])
    if z <= 0.0:
        return Projection(np.array([np.nan, np.nan]), z, True)
    pixel = np.array([k.fx * pc[0] / z + k.cx, k.fy * pc[1] / z + k.cy])
    return Projection(pixel, z, False)


def lift(q: np.ndarray, depth: float) -> np.ndarray:
    """Place a normalized image-plane coordinate on the plane z = depth.

    Returns the 3D point (depth*q_x, depth*q_y, depth) in the anchor camera
    frame.
    """
    if not depth > 0:
        raise GeometryError(f"lift requires positive depth, got {depth}")
    q = np.asarray(q, dtype=float)
    return np.array([depth * q[0], depth * q[1], depth])


def back_project(k: Intrinsics, e: Extrinsics, pixel: np.ndarray, depth: float) -> np.ndarray:
    """Invert projection: recover the world point at the given camera depth."""
    if not depth > 0:
        raise GeometryError(f"back_project requires positive depth, got {depth}")
    pixel = np.asarray(pixel, dtype=float)
    pc = np.array(
        [(pixel[0] - k.cx) / k.fx * depth, (pixel[1] - k.cy) / k.fy * depth, depth]
    )
    return e.rotation.T @ (pc - e.translation)


def relative_pose(e_t: Extrinsics, e_0: Extrinsics) -> Extrinsics:
    """Camera-relative transform e_t o e_0^-1 (maps camera-0 coords to camera-t)."""
    return e_t.compose(e_0.inverse())


def rotation_angle(r: np.ndarray) -> float:
    """Geodesic angle of a rotation matrix, in radians.

    Uses atan2 of the skew part against the trace: unlike arccos of the
    trace, this stays accurate (O(eps), not O(sqrt(eps))) near identity.
    """
    sin_vec = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    cos_part = (float(np.trace(r)) - 1.0) / 2.0
    return float(np.arctan2(np.linalg.norm(sin_vec), cos_part))


def umeyama_sim3(src: np.ndarray, dst: np.ndarray) -> Sim3:
    """Least-squares similarity aligning src points onto dst points.

    Standard SVD construction with determinant-sign correction; minimizes
    sum ||dst_i - (s R src_i + t)||^2.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 3)
    dst = np.asarray(dst, dtype=float).reshape(-1, 3)
    if src.shape != dst.shape:
        raise GeometryError(f"point sets differ in size: {src.shape} vs {dst.shape}")
    n = src.shape[0]
    if n < 3:
        raise DegenerateGeometryError(f"need >= 3 point pairs, got {n}")

    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    src_c = src - mu_s
    dst_c = dst - mu_d

    cov = dst_c.T @ src_c / n
    var_s = float((src_c**2).sum()) / n

    u, d, vt = np.linalg.svd(cov)
    # Collinear sources leave the rotation about the line unconstrained.
    src_sv = np.linalg.svd(src_c, compute_uv=False)
    if var_s <= 0 or src_sv[1] <= 1e-12 * max(src_sv[0], 1.0):
        raise DegenerateGeometryError("source points are collinear or coincident")

    s_fix = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s_fix[2, 2] = -1.0
    rot = u @ s_fix @ vt
    scale = float(np.trace(np.diag(d) @ s_fix)) / var_s
    trans = mu_d - scale * rot @ mu_s
    return Sim3(scale, rot, trans)


def fov_similarity(v_f: Extrinsics, v_cur: Extrinsics, sigma_c: float = 1.0) -> float:
    """Viewpoint-overlap score in [0, 1] between two camera poses.

    max(0, cos(angle between forward axes)) * exp(-|center distance| / sigma_c).
    Identical poses score exactly 1; opposed or distant viewpoints decay to 0.
    """
    if not sigma_c > 0:
        raise GeometryError(f"sigma_c must be positive, got {sigma_c}")
    cos_fwd = float(np.dot(v_f.forward_axis, v_cur.forward_axis))
    dist = float(np.linalg.norm(v_f.camera_center - v_cur.camera_center))
    return max(0.0, cos_fwd) * float(np.exp(-dist / sigma_c))


class CameraPose(NamedTuple):
    """Per-frame intrinsics + world-to-camera extrinsics."""

    k: Intrinsics
    e: Extrinsics


# ---------------------------------------------------------------------------
# Camera-script file format: JSON array of per-frame records
#   {"frame": t, "K": [9 row-major numbers], "E": [16 row-major numbers]}
# ---------------------------------------------------------------------------


def load_camera_script(path, width: int, height: int) -> list[CameraPose]:
    with open(path) as f:
        records = json.load(f)
    return camera_script_from_records(records, width, height)


def camera_script_from_records(records: Sequence[dict], width: int, height: int) -> list[CameraPose]:
    poses = []
    for i, rec in enumerate(records):
        if int(rec.get("frame", i)) != i:
            raise GeometryError(f"camera script frames must be 0..N-1 in order, bad record {i}")
        k = Intrinsics.from_matrix(np.array(rec["K"], dtype=float).reshape(3, 3), width, height)
        e = Extrinsics.from_matrix(np.array(rec["E"], dtype=float).reshape(4, 4))
        poses.append(CameraPose(k, e))
    return poses


def camera_script_to_records(poses: Sequence[CameraPose]) -> list[dict]:
    return [
        {
            "frame": i,
            "K": [float(v) for v in pose.k.matrix.reshape(-1)],
            "E": [float(v) for v in pose.e.matrix.reshape(-1)],
        }
        for i, pose in enumerate(poses)
    ]


def save_camera_script(path, poses: Sequence[CameraPose]) -> None:
    with open(path, "w") as f:
        json.dump(camera_script_to_records(poses), f, indent=1)


# Rotation constructors used by fixtures, camera-path builders, and tests.

def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation from QR of a Gaussian matrix."""
    m = rng.standard_normal((3, 3))
    q, r = np.linalg.qr(m)
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 2] = -q[:, 2]
    return q
