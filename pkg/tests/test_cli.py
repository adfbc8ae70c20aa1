import csv
import json
import os
import signal
import subprocess
import sys
import time

import numpy as np

from worldtraj import fixtures
from worldtraj.adapter import NamedWeight, save_weights
from worldtraj.cli import main
from worldtraj.curation import encode_rle_mask
from worldtraj.geometry import save_camera_script
from worldtraj.trajectory import save_trajectory
from worldtraj.worldsim import save_scene


def write_static_fixture(tmp_path, frames=24):
    k = fixtures.default_intrinsics(128, 128)
    scene = fixtures.single_object_scene(128, 128, depth=4.0, half_extent=0.2)
    cams = fixtures.static_path(k, frames)
    traj = fixtures.straight_sketch(k, frames, dx_px=16.0)
    save_scene(tmp_path / "scene.json", scene)
    save_camera_script(tmp_path / "camera.json", cams)
    save_trajectory(tmp_path / "traj.json", traj)
    return tmp_path


def write_orbit_fixture(tmp_path, bucket="large", frames=49):
    scene, traj, cams, d_true, deg = fixtures.orbit_fixture(bucket, frames=frames)
    save_scene(tmp_path / "scene.json", scene)
    save_camera_script(tmp_path / "camera.json", cams)
    save_trajectory(tmp_path / "traj.json", traj)
    return tmp_path


class TestEvalTraj:
    def test_static_fixture_te_row(self, tmp_path):
        write_static_fixture(tmp_path)
        out = tmp_path / "out"
        code = main(
            [
                "eval-traj",
                "--scene", str(tmp_path / "scene.json"),
                "--camera", str(tmp_path / "camera.json"),
                "--trajectory", str(tmp_path / "traj.json"),
                "--repr", "world",
                "--out", str(out),
            ]
        )
        assert code == 0
        with open(out / "te.csv") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 1
        assert float(rows[0]["te"]) <= 0.5
        assert rows[0]["rot_bucket"] == "small"
        assert (out / "manifest.json").exists()
        assert (out / "rollout" / "tracks.json").exists()

    def test_pixel_repr_worse_than_world_under_rotation(self, tmp_path):
        write_orbit_fixture(tmp_path, "large")
        tes = {}
        for mode in ("pixel", "world"):
            out = tmp_path / f"out-{mode}"
            code = main(
                [
                    "eval-traj",
                    "--scene", str(tmp_path / "scene.json"),
                    "--camera", str(tmp_path / "camera.json"),
                    "--trajectory", str(tmp_path / "traj.json"),
                    "--repr", mode,
                    "--out", str(out),
                ]
            )
            assert code == 0
            report = json.loads((out / "metrics.json").read_text())
            tes[mode] = report["te"]
            assert report["rot_bucket"] == "large"
        assert tes["pixel"] > tes["world"]

    def test_missing_file_exit_2(self, tmp_path):
        code = main(
            [
                "eval-traj",
                "--scene", str(tmp_path / "nope.json"),
                "--camera", str(tmp_path / "nope.json"),
                "--trajectory", str(tmp_path / "nope.json"),
                "--out", str(tmp_path / "out"),
            ]
        )
        assert code == 2

    def test_global_config_file_applies(self, tmp_path):
        write_static_fixture(tmp_path)
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"tau": 0.8, "preexit_k": 3}))
        out = tmp_path / "out"
        code = main(
            [
                "--config", str(cfg_path),
                "eval-traj",
                "--scene", str(tmp_path / "scene.json"),
                "--camera", str(tmp_path / "camera.json"),
                "--trajectory", str(tmp_path / "traj.json"),
                "--out", str(out),
            ]
        )
        assert code == 0
        echoed = json.loads((out / "rollout" / "config.json").read_text())
        assert echoed["tau"] == 0.8 and echoed["preexit_k"] == 3

    def test_unknown_config_field_exit_2(self, tmp_path):
        write_static_fixture(tmp_path)
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"bogus": 1}))
        code = main(
            [
                "--config", str(cfg_path),
                "eval-traj",
                "--scene", str(tmp_path / "scene.json"),
                "--camera", str(tmp_path / "camera.json"),
                "--trajectory", str(tmp_path / "traj.json"),
                "--out", str(tmp_path / "out"),
            ]
        )
        assert code == 2

    def test_byte_identical_reruns(self, tmp_path):
        write_static_fixture(tmp_path)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(
                [
                    "--seed", "7",
                    "eval-traj",
                    "--scene", str(tmp_path / "scene.json"),
                    "--camera", str(tmp_path / "camera.json"),
                    "--trajectory", str(tmp_path / "traj.json"),
                    "--out", str(out),
                ]
            ) == 0
            outs.append(out)
        for rel in ("te.csv", "metrics.json", "rollout/tracks.json", "rollout/frames/frame_000003.png"):
            assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes()


class TestEvalCamera:
    def _script(self, tmp_path):
        k = fixtures.default_intrinsics(128, 128)
        cams = fixtures.orbit_path(k, np.array([0.0, 0.0, 4.0]), 4.0, 40.0, 20)
        path = tmp_path / "camera.json"
        save_camera_script(path, cams)
        return path

    def test_zero_perturbation_zero_rpe(self, tmp_path):
        script = self._script(tmp_path)
        out = tmp_path / "out"
        assert main(["eval-camera", "--camera", str(script), "--out", str(out)]) == 0
        report = json.loads((out / "rpe.json").read_text())
        assert report["rpe_rot"] < 1e-12 and report["rpe_trans"] < 1e-12

    def test_global_sim3_absorbed(self, tmp_path):
        script = self._script(tmp_path)
        out = tmp_path / "out"
        code = main(
            [
                "eval-camera",
                "--camera", str(script),
                "--sim3-scale", "2.0",
                "--sim3-yaw-deg", "30",
                "--sim3-translate", "1", "-2", "0.5",
                "--out", str(out),
            ]
        )
        assert code == 0
        report = json.loads((out / "rpe.json").read_text())
        assert report["rpe_rot"] < 1e-9
        assert report["rpe_trans"] < 1e-9
        assert report["rpe_cam"] < 1e-9

    def test_noise_monotonic(self, tmp_path):
        script = self._script(tmp_path)
        values = []
        for i, sigma in enumerate(("0.002", "0.01", "0.05")):
            out = tmp_path / f"out{i}"
            assert main(
                ["eval-camera", "--camera", str(script), "--noise-sigma", sigma, "--out", str(out)]
            ) == 0
            values.append(json.loads((out / "rpe.json").read_text())["rpe_rot"])
        assert values[0] < values[1] < values[2]

    def test_drift_rate_grows_rotation_error(self, tmp_path):
        script = self._script(tmp_path)
        values = []
        for i, rate in enumerate(("0.001", "0.01")):
            out = tmp_path / f"drift{i}"
            assert main(
                ["eval-camera", "--camera", str(script), "--drift-rate", rate, "--out", str(out)]
            ) == 0
            report = json.loads((out / "rpe.json").read_text())
            values.append(report["rpe_rot"])
        # Per-frame drift of d radians shows up as ~d mean relative rotation.
        assert abs(values[0] - 0.001) < 2e-4
        assert abs(values[1] - 0.01) < 2e-3
        assert values[0] < values[1]


class TestCurate:
    def _write_clip(self, root, name, step, n_frames=120, camera_translation=0.0):
        clip = root / name
        clip.mkdir(parents=True)
        comps = [
            {"frame": t, "centroid": [20 + step * t, 40.0], "area": 600}
            for t in range(n_frames)
        ]
        (clip / "components.json").write_text(json.dumps(comps))
        masks = {}
        for t in range(n_frames):
            mask = np.zeros((100, 100), dtype=bool)
            x = int(20 + step * t)
            mask[35:45, max(x - 5, 0) : x + 5] = True
            masks[str(t)] = encode_rle_mask(mask)
        (clip / "masks.json").write_text(json.dumps(masks))
        (clip / "meta.json").write_text(
            json.dumps(
                {"frame": [100, 100], "frames": n_frames, "camera_translation": camera_translation}
            )
        )

    def test_planted_object_accepted(self, tmp_path):
        clips = tmp_path / "clips"
        self._write_clip(clips, "clip0", step=0.5)
        out = tmp_path / "out"
        assert main(["curate", "--clips", str(clips), "--out", str(out)]) == 0
        curated = json.loads((out / "curated.json").read_text())
        assert len(curated) == 1
        assert curated[0]["window"]["start"] == 0
        assert len(curated[0]["query_points"]) == 20

    def test_stationary_rejected(self, tmp_path):
        clips = tmp_path / "clips"
        self._write_clip(clips, "clip0", step=0.0)
        out = tmp_path / "out"
        assert main(["curate", "--clips", str(clips), "--out", str(out)]) == 0
        assert json.loads((out / "curated.json").read_text()) == []

    def test_mixture_stats(self, tmp_path):
        clips = tmp_path / "clips"
        self._write_clip(clips, "moving", step=0.5, camera_translation=0.0)
        self._write_clip(clips, "cam_and_obj", step=0.5, camera_translation=1.0)
        out = tmp_path / "out"
        assert main(["curate", "--clips", str(clips), "--out", str(out)]) == 0
        stats = json.loads((out / "stats.json").read_text())
        f = stats["regime_fractions"]
        assert f["static-cam/moving-obj"] == 0.5
        assert f["moving-cam/moving-obj"] == 0.5


class TestAdapterCmd:
    def test_identical_dirs_all_zero(self, tmp_path, rng):
        weights = [NamedWeight(f"blk{i}.prope.W", rng.normal(size=(4, 4))) for i in range(3)]
        save_weights(tmp_path / "base", weights)
        save_weights(tmp_path / "ft", weights)
        out = tmp_path / "out"
        assert main(
            ["adapter", "--base", str(tmp_path / "base"), "--ft", str(tmp_path / "ft"), "--out", str(out)]
        ) == 0
        with open(out / "delta_rel.csv") as f:
            rows = list(csv.DictReader(f))
        assert all(float(r["delta_rel"]) == 0.0 for r in rows)

    def test_planted_pathway_tops_csv(self, tmp_path, rng):
        base, ft = [], []
        for i in range(4):
            for stem, scale in ((f"blk{i}.prope.W", 0.2), (f"blk{i}.attn.q.W", 0.01)):
                m = rng.normal(size=(6, 6))
                base.append(NamedWeight(stem, m))
                ft.append(NamedWeight(stem, m + scale * rng.normal(size=(6, 6))))
        save_weights(tmp_path / "base", base)
        save_weights(tmp_path / "ft", ft)
        out = tmp_path / "out"
        assert main(
            ["adapter", "--base", str(tmp_path / "base"), "--ft", str(tmp_path / "ft"), "--out", str(out)]
        ) == 0
        with open(out / "delta_rel.csv") as f:
            rows = list(csv.DictReader(f))
        assert all(r["category"] == "prope" for r in rows[:4])

    def test_separable_probe_reports_ones(self, tmp_path):
        out = tmp_path / "out"
        assert main(["adapter", "--probe", "separable", "--out", str(out)]) == 0
        report = json.loads((out / "probe.json").read_text())
        assert all(c == 1.0 for c in report["camera_invariance_cosine"])

    def test_missing_args_exit_2(self, tmp_path):
        assert main(["adapter", "--out", str(tmp_path / "out")]) == 2


class TestDemo:
    def test_demo_summary(self, tmp_path):
        out = tmp_path / "demo"
        assert main(["demo", "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["persistent"]["reentry_error_px"] <= 0.5
        assert abs(summary["stale_baseline"]["reentry_error_px"] - 46.0) <= 0.5
        assert summary["persistent"]["excluded_memory_frames"] == [8, 9]
        assert summary["stale_baseline"]["excluded_memory_frames"] == []


class TestServe:
    def test_ephemeral_port_printed_and_sigterm_clean(self, tmp_path):
        proc = subprocess.Popen(
            [sys.executable, "-m", "worldtraj.cli", "serve", "--port", "0",
             "--data-dir", str(tmp_path / "data")],
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            text=True,
        )
        try:
            line = proc.stdout.readline()
            assert "http://127.0.0.1:" in line
            port = int(line.rsplit(":", 1)[1].split()[0].strip())
            assert port > 0
            import urllib.request

            with urllib.request.urlopen(f"http://127.0.0.1:{port}/healthz", timeout=10) as resp:
                assert json.loads(resp.read())["status"] == "ok"
            proc.send_signal(signal.SIGTERM)
            assert proc.wait(timeout=10) == 0
        finally:
            if proc.poll() is None:
                proc.kill()
