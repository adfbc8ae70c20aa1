import math

import numpy as np
import pytest

from worldtraj.geometry import Extrinsics, random_rotation, rot_y
from worldtraj.metrics import (
    MetricUndefinedError,
    PoseTrajectory,
    psnr,
    psnr_ssim,
    regime_classify,
    rotation_bucket,
    rpe,
    ssim,
    total_camera_rotation_deg,
    trajectory_error,
)


def track(pixels):
    return [(t, None if p is None else np.array(p, dtype=float)) for t, p in enumerate(pixels)]


class TestTrajectoryError:
    def test_identical(self):
        a = track([(1, 2), (3, 4), (5, 6)])
        assert trajectory_error(a, a) == 0.0

    def test_constant_offset(self):
        a = track([(0, 0), (1, 0), (2, 0)])
        b = track([(3, 0), (4, 0), (5, 0)])
        assert trajectory_error(a, b) == 3.0

    def test_alternating_hypotenuse(self):
        # Offsets (3,4) then (0,0): distances 5 and 0, mean 2.5.
        a = track([(0, 0), (0, 0)])
        b = track([(3, 4), (0, 0)])
        assert trajectory_error(a, b) == 2.5

    def test_offscreen_excluded_pairwise(self):
        a = track([(0, 0), None, (2, 0)])
        b = track([(1, 0), (9, 9), (3, 0)])
        assert trajectory_error(a, b) == 1.0

    def test_no_covisible_frames(self):
        with pytest.raises(MetricUndefinedError):
            trajectory_error(track([None, None]), track([(0, 0), (0, 0)]))

    def test_symmetric(self, rng):
        a = track(rng.uniform(0, 100, size=(8, 2)))
        b = track(rng.uniform(0, 100, size=(8, 2)))
        assert abs(trajectory_error(a, b) - trajectory_error(b, a)) < 1e-12

    def test_common_frame_shift_invariant(self, rng):
        a = track(rng.uniform(0, 100, size=(8, 2)))
        b = track(rng.uniform(0, 100, size=(8, 2)))
        shift = 17
        a2 = [(t + shift, p) for t, p in a]
        b2 = [(t + shift, p) for t, p in b]
        assert trajectory_error(a, b) == trajectory_error(a2, b2)


def circular_trajectory(n=12, radius=3.0):
    poses = []
    for i in range(n):
        phi = 2 * np.pi * i / n * 0.4
        center = np.array([radius * np.cos(phi), 0.3 * np.sin(3 * phi), radius * np.sin(phi)])
        r = rot_y(phi).T
        poses.append((i, Extrinsics(r, -r @ center)))
    return PoseTrajectory(poses, source="ground_truth")


def apply_global_sim3(traj, scale, rot, trans):
    poses = []
    for i, e in traj.poses:
        c = e.camera_center
        c2 = (rot.T @ (c - trans)) / scale
        r2 = e.rotation @ rot
        poses.append((i, Extrinsics(r2, -r2 @ c2)))
    return PoseTrajectory(poses, source="estimated")


class TestRpe:
    def test_identical_zero(self):
        gt = circular_trajectory()
        est = PoseTrajectory(list(gt.poses), source="estimated")
        assert np.allclose(rpe(est, gt), (0.0, 0.0, 0.0), atol=1e-12)

    def test_global_sim3_absorbed(self, rng):
        gt = circular_trajectory()
        est = apply_global_sim3(gt, 2.5, random_rotation(rng), rng.normal(size=3))
        assert np.allclose(rpe(est, gt), (0.0, 0.0, 0.0), atol=1e-9)

    def test_single_pose_yaw_perturbation(self):
        # One mid-trajectory pose yawed by 0.1 rad (center kept) enters two
        # consecutive relative motions: rpe_rot = 2*0.1/(N-1).
        gt = circular_trajectory(n=12)
        poses = list(gt.poses)
        i, e = poses[5]
        c = e.camera_center
        r2 = rot_y(0.1) @ e.rotation
        poses[5] = (i, Extrinsics(r2, -r2 @ c))
        est = PoseTrajectory(poses, source="estimated")
        rot_err, _, _ = rpe(est, gt)
        assert abs(rot_err - 2 * 0.1 / 11) < 1e-9

    def test_length_mismatch(self):
        gt = circular_trajectory(8)
        est = circular_trajectory(9)
        with pytest.raises(ValueError):
            rpe(est, gt)


class TestPsnrSsim:
    def test_identical_frames(self, rng):
        img = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
        p, s = psnr_ssim(img, img)
        assert p == math.inf
        assert s == 1.0

    def test_uniform_offset_closed_form(self):
        # MSE = 100 => PSNR = 20 log10(255/10) = 28.1308 dB.
        a = np.full((16, 16, 3), 100, dtype=np.uint8)
        b = np.full((16, 16, 3), 110, dtype=np.uint8)
        assert abs(psnr(a, b) - 20 * math.log10(255 / 10)) < 1e-9

    def test_inverted_checkerboard_ssim_negative(self):
        yy, xx = np.mgrid[0:32, 0:32]
        a = np.where((xx + yy) % 2 == 0, 228, 28).astype(np.uint8)
        b = (255 - a).astype(np.uint8)
        assert ssim(a, b) < -0.9

    def test_psnr_monotone_in_noise(self, rng):
        base = rng.integers(0, 256, size=(32, 32, 3)).astype(np.float64)
        values = []
        for sigma in (2.0, 8.0, 32.0):
            noisy = np.clip(base + rng.normal(0, sigma, base.shape), 0, 255)
            values.append(psnr(base, noisy))
        assert values[0] > values[1] > values[2]

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4, 3)), np.zeros((5, 4, 3)))


class TestRegimes:
    def test_all_static(self):
        assert regime_classify(0.0, 0.0) == "static-cam/static-obj"

    def test_moving_camera_only(self):
        assert regime_classify(0.6, 0.05) == "moving-cam/static-obj"

    def test_boundary_is_strict(self):
        assert regime_classify(0.5, 0.10) == "static-cam/static-obj"

    def test_partition(self, rng):
        for _ in range(100):
            label = regime_classify(rng.uniform(0, 1), rng.uniform(0, 0.3))
            assert label in (
                "static-cam/static-obj",
                "static-cam/moving-obj",
                "moving-cam/static-obj",
                "moving-cam/moving-obj",
            )

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            regime_classify(-0.1, 0.0)


class TestReportFormats:
    def test_csv_row_column_order(self):
        from worldtraj.metrics import CSV_COLUMNS, MetricReport, report_csv_row

        assert CSV_COLUMNS == [
            "clip_id", "te", "rpe_rot", "rpe_trans", "rpe_cam", "psnr", "ssim", "regime", "rot_bucket",
        ]
        report = MetricReport(te=1.25, psnr=math.inf, ssim=0.5)
        row = report_csv_row("clip7", report, regime="static-cam/moving-obj", rot_bucket_label="mid")
        assert row == "clip7,1.25,,,,inf,0.5,static-cam/moving-obj,mid"

    def test_json_round_trip(self):
        import json

        from worldtraj.metrics import MetricReport

        report = MetricReport(te=2.0, rpe_rot=0.1, frames=8, covisible=8)
        back = json.loads(report.to_json())
        assert back["te"] == 2.0 and back["rpe_rot"] == 0.1


class TestRotationBuckets:
    def test_small(self):
        assert rotation_bucket(10.0) == "small"

    def test_boundary_15_is_mid(self):
        assert rotation_bucket(15.0) == "mid"

    def test_boundary_45_is_large(self):
        assert rotation_bucket(45.0) == "large"

    def test_total_rotation_accumulates(self):
        poses = [Extrinsics(rot_y(np.radians(d)).T, np.zeros(3)) for d in (0, 10, 0, 10, 0)]
        assert abs(total_camera_rotation_deg(poses) - 40.0) < 1e-9
