"""Quantitative evaluation: trajectory error, aligned relative pose errors,
pixel fidelity, and motion-regime statistics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from .geometry import Extrinsics, Sim3, rotation_angle, umeyama_sim3


class MetricUndefinedError(ValueError):
    """The metric has no value on these inputs (e.g. zero co-visible frames)."""


# Camera/object motion regime thresholds: camera translation in world units,
# object displacement as a fraction of the frame diagonal.
CAMERA_MOTION_THRESHOLD = 0.5
OBJECT_MOTION_THRESHOLD = 0.10

REGIMES = (
    "static-cam/static-obj",
    "static-cam/moving-obj",
    "moving-cam/static-obj",
    "moving-cam/moving-obj",
)


@dataclass
class PoseTrajectory:
    poses: list  # [(frame, Extrinsics), ...] frames strictly increasing
    source: str = "ground_truth"  # or "estimated"

    def __post_init__(self):
        frames = [f for f, _ in self.poses]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("pose trajectory frames must strictly increase")

    @property
    def extrinsics(self) -> list[Extrinsics]:
        return [e for _, e in self.poses]


@dataclass
class MetricReport:
    te: float | None = None
    rpe_rot: float | None = None
    rpe_trans: float | None = None
    rpe_cam: float | None = None
    psnr: float | None = None
    ssim: float | None = None
    frames: int = 0
    covisible: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def trajectory_error(tracked: Sequence, target: Sequence) -> float:
    """Mean L2 pixel distance over co-visible frames.

    Both tracks are sequences of (frame, pixel-or-None); frames where either
    side is missing are excluded pairwise.
    """
    target_by_frame = {int(t): p for t, p in target}
    dists = []
    for t, p in tracked:
        t = int(t)
        if p is None or t not in target_by_frame or target_by_frame[t] is None:
            continue
        dists.append(float(np.linalg.norm(np.asarray(p, float) - np.asarray(target_by_frame[t], float))))
    if not dists:
        raise MetricUndefinedError("no co-visible frames between tracked and target")
    return float(np.mean(dists))


def _relative_motion(e_b: Extrinsics, e_a: Extrinsics) -> Extrinsics:
    """Camera motion from frame a to frame b: e_b o e_a^-1."""
    return e_b.compose(e_a.inverse())


def align_pose_trajectory(est: PoseTrajectory, gt: PoseTrajectory) -> Sim3:
    """Similarity aligning estimated camera centers onto ground-truth centers."""
    src = np.array([e.camera_center for e in est.extrinsics])
    dst = np.array([e.camera_center for e in gt.extrinsics])
    return umeyama_sim3(src, dst)


def rpe(est: PoseTrajectory, gt: PoseTrajectory, stride: int = 1) -> tuple[float, float, float]:
    """Relative pose errors between per-stride camera motions.

    Estimated centers are first aligned to ground truth with a similarity
    (absorbing any global scale/rotation/translation offset); the recovered
    scale is applied to the estimated relative translations. Returns
    (rotation error in radians, translation error in world units, Frobenius
    norm of the 4x4 relative-pose difference), each averaged over steps.
    """
    if len(est.poses) != len(gt.poses):
        raise ValueError("pose trajectories differ in length")
    n = len(gt.poses)
    if n < stride + 1:
        raise ValueError(f"need at least stride+1={stride + 1} poses, got {n}")
    sim = align_pose_trajectory(est, gt)
    s = sim.scale

    rot_errs, trans_errs, cam_errs = [], [], []
    est_e, gt_e = est.extrinsics, gt.extrinsics
    for i in range(n - stride):
        d_est = _relative_motion(est_e[i + stride], est_e[i])
        d_gt = _relative_motion(gt_e[i + stride], gt_e[i])
        rot_errs.append(rotation_angle(d_est.rotation @ d_gt.rotation.T))
        trans_errs.append(float(np.linalg.norm(s * d_est.translation - d_gt.translation)))
        m_est = d_est.matrix
        m_est[:3, 3] *= s
        cam_errs.append(float(np.linalg.norm(m_est - d_gt.matrix)))
    return float(np.mean(rot_errs)), float(np.mean(trans_errs)), float(np.mean(cam_errs))


# ---------------------------------------------------------------------------
# Pixel fidelity
# ---------------------------------------------------------------------------


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR over 8-bit channels, MAX=255; +inf sentinel for identical frames."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable 2D convolution, valid region only."""
    size = kernel.size
    h, w = img.shape
    tmp = np.empty((h, w - size + 1))
    for i, kv in enumerate(kernel):
        contrib = kv * img[:, i : i + w - size + 1]
        tmp = contrib if i == 0 else tmp + contrib
    out = np.empty((h - size + 1, w - size + 1))
    for i, kv in enumerate(kernel):
        contrib = kv * tmp[i : i + h - size + 1, :]
        out = contrib if i == 0 else out + contrib
    return out


def ssim(a: np.ndarray, b: np.ndarray, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), channel-averaged."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    if a.shape[0] < 11 or a.shape[1] < 11:
        raise ValueError("frames must be at least 11x11 for SSIM")
    kernel = _gaussian_kernel()
    c1 = (k1 * 255.0) ** 2
    c2 = (k2 * 255.0) ** 2
    scores = []
    for ch in range(a.shape[2]):
        x, y = a[..., ch], b[..., ch]
        mu_x = _filter_valid(x, kernel)
        mu_y = _filter_valid(y, kernel)
        xx = _filter_valid(x * x, kernel) - mu_x * mu_x
        yy = _filter_valid(y * y, kernel) - mu_y * mu_y
        xy = _filter_valid(x * y, kernel) - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
        den = (mu_x**2 + mu_y**2 + c1) * (xx + yy + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


def psnr_ssim(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    return psnr(a, b), ssim(a, b)


# ---------------------------------------------------------------------------
# Motion regimes and rotation buckets
# ---------------------------------------------------------------------------


def regime_classify(camera_translation: float, object_displacement: float) -> str:
    """Four-way motion regime; both axes use a strict > threshold."""
    if camera_translation < 0 or object_displacement < 0:
        raise ValueError("motion magnitudes must be non-negative")
    cam_moving = camera_translation > CAMERA_MOTION_THRESHOLD
    obj_moving = object_displacement > OBJECT_MOTION_THRESHOLD
    return f"{'moving' if cam_moving else 'static'}-cam/{'moving' if obj_moving else 'static'}-obj"


def rotation_bucket(total_rotation_deg: float) -> str:
    """small < 15, mid [15, 45), large >= 45 degrees of accumulated rotation."""
    if total_rotation_deg < 0:
        raise ValueError("rotation must be non-negative")
    if total_rotation_deg < 15.0:
        return "small"
    if total_rotation_deg < 45.0:
        return "mid"
    return "large"


def total_camera_rotation_deg(poses: Sequence[Extrinsics]) -> float:
    """Accumulated geodesic rotation along a camera path, in degrees."""
    total = 0.0
    for a, b in zip(poses, poses[1:]):
        total += rotation_angle(b.rotation @ a.rotation.T)
    return math.degrees(total)


def total_camera_translation(poses: Sequence[Extrinsics]) -> float:
    """Accumulated camera-center path length in world units."""
    centers = [e.camera_center for e in poses]
    return float(sum(np.linalg.norm(b - a) for a, b in zip(centers, centers[1:])))


CSV_COLUMNS = ["clip_id", "te", "rpe_rot", "rpe_trans", "rpe_cam", "psnr", "ssim", "regime", "rot_bucket"]


def report_csv_row(clip_id: str, report: MetricReport, regime: str = "", rot_bucket_label: str = "") -> str:
    def fmt(v):
        if v is None:
            return ""
        if v == math.inf:
            return "inf"
        return f"{v:.9g}"

    vals = [clip_id, fmt(report.te), fmt(report.rpe_rot), fmt(report.rpe_trans),
            fmt(report.rpe_cam), fmt(report.psnr), fmt(report.ssim), regime, rot_bucket_label]
    return ",".join(vals)
