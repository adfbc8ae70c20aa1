import numpy as np
import pytest

from worldtraj.geometry import CameraPose, Extrinsics, project, rot_y
from worldtraj.images import decode_png, encode_png, read_depth, write_depth, write_ppm
from worldtraj.trajectory import UserTrajectory, lift_trajectory
from worldtraj.worldsim import (
    SceneError,
    SceneObject,
    SyntheticScene,
    depth_oracle,
    ground_truth_track,
    render,
    scene_from_record,
    scene_to_record,
    step_objects,
)

from conftest import default_k


def two_object_scene():
    return SyntheticScene(
        objects=[
            SceneObject("near", np.array([0.0, 0.0, 3.0]), 0.4, texture_seed=1),
            SceneObject("far", np.array([0.2, 0.0, 5.0]), 0.6, texture_seed=2),
        ],
        width=64,
        height=64,
    )


def cam(scene, e=None):
    return CameraPose(scene.base_intrinsics, e or Extrinsics.identity())


class TestRender:
    def test_empty_scene_background_depth(self):
        scene = SyntheticScene(objects=[], width=32, height=32, background_depth=10.0)
        frame = render(scene, {}, cam(scene))
        assert np.allclose(frame.depth, 10.0)

    def test_centroid_at_principal_point(self):
        scene = SyntheticScene(
            objects=[SceneObject("o", np.array([0.0, 0.0, 4.0]), 0.5, 3)], width=64, height=64
        )
        frame = render(scene, {"o": scene.objects[0].position}, cam(scene))
        assert np.allclose(frame.object_centroids["o"], [32.0, 32.0], atol=0.5)
        # Depth buffer at the center pixel equals the object plane depth.
        assert abs(frame.depth[32, 32] - 4.0) < 1e-6

    def test_occlusion_brute_force(self):
        # Oracle: per pixel, cast both planes independently and keep the
        # nearer in-extents hit; must match the renderer's z-buffer winner.
        scene = two_object_scene()
        camera = cam(scene)
        frame = render(scene, {o.id: o.position for o in scene.objects}, camera)
        k = camera.k
        for iy in range(0, 64, 3):
            for ix in range(0, 64, 3):
                ray = np.array([(ix + 0.5 - k.cx) / k.fx, (iy + 0.5 - k.cy) / k.fy, 1.0])
                best = scene.background_depth
                for obj in scene.objects:
                    s = obj.position[2] / ray[2]
                    hit = ray * s
                    if (
                        abs(hit[0] - obj.position[0]) <= obj.half_extent
                        and abs(hit[1] - obj.position[1]) <= obj.half_extent
                        and s < best
                    ):
                        best = s
                assert abs(frame.depth[iy, ix] - best) < 1e-9

    def test_determinism(self):
        scene = two_object_scene()
        states = {o.id: o.position for o in scene.objects}
        f1 = render(scene, states, cam(scene))
        f2 = render(scene, states, cam(scene))
        assert np.array_equal(f1.image, f2.image)
        assert np.array_equal(f1.depth, f2.depth)

    def test_centroid_matches_projection(self, rng):
        scene = SyntheticScene(
            objects=[SceneObject("o", np.array([0.3, -0.2, 4.0]), 0.2, 5)], width=128, height=128
        )
        for _ in range(10):
            yaw = rng.uniform(-0.2, 0.2)
            center = rng.uniform(-0.3, 0.3, size=3) * np.array([1, 1, 0.5])
            r = rot_y(yaw).T
            e = Extrinsics(r, -r @ center)
            camera = CameraPose(scene.base_intrinsics, e)
            frame = render(scene, {"o": scene.objects[0].position}, camera)
            proj = project(camera.k, camera.e, scene.objects[0].position)
            if frame.object_centroids["o"] is None:
                continue
            assert np.linalg.norm(frame.object_centroids["o"] - proj.pixel) <= 0.5

    def test_offscreen_centroid_none(self):
        scene = two_object_scene()
        turned = Extrinsics(rot_y(np.pi / 2).T, np.zeros(3))
        frame = render(scene, {o.id: o.position for o in scene.objects}, cam(scene, turned))
        assert frame.object_centroids["near"] is None

    def test_duplicate_ids_rejected(self):
        with pytest.raises(SceneError):
            SyntheticScene(
                objects=[
                    SceneObject("x", np.zeros(3) + [0, 0, 3], 0.1, 0),
                    SceneObject("x", np.zeros(3) + [0, 0, 4], 0.1, 0),
                ]
            )


class TestStepObjects:
    def _commanded_scene(self, k):
        traj = UserTrajectory(
            "t0",
            click=np.array([50.0, 50.0]),
            points=tuple((t, np.array([50.0 + 4 * t, 50.0])) for t in range(5)),
        )
        wt = lift_trajectory(traj, k, depth=4.0, anchor_pose=Extrinsics.identity())
        scene = SyntheticScene(
            objects=[SceneObject("o", np.array([0.0, 0.0, 4.0]), 0.3, 1, commanded_path=wt)],
            width=100,
            height=100,
            base_intrinsics=k,
        )
        return scene

    def test_no_commands_stationary(self):
        scene = two_object_scene()
        states = step_objects(scene, 7)
        for o in scene.objects:
            assert np.allclose(states[o.id], o.position)

    def test_straight_line_lift_linearity(self):
        # A linear pixel sweep at fixed depth lifts to collinear 3D points.
        k = default_k()
        scene = self._commanded_scene(k)
        pts = [step_objects(scene, t)["o"] for t in range(5)]
        d01 = pts[1] - pts[0]
        for a, b in zip(pts, pts[1:]):
            assert np.allclose(b - a, d01, atol=1e-12)

    def test_hold_after_command_ends(self):
        k = default_k()
        scene = self._commanded_scene(k)
        assert np.allclose(step_objects(scene, 4)["o"], step_objects(scene, 99)["o"])

    def test_commanded_track_equals_reprojection(self):
        # Closed-loop consistency at the worldsim level: stepping the command
        # and reading rendered centroids reproduces the re-projected command
        # within rasterization quantization.
        from worldtraj.trajectory import reproject_track

        k = default_k()
        scene = self._commanded_scene(k)
        cam = CameraPose(k, Extrinsics.identity())
        frames = [render(scene, step_objects(scene, t), cam, index=t) for t in range(5)]
        track = ground_truth_track(frames, "o")
        wt = scene.objects[0].commanded_path
        expected = reproject_track(wt, [cam] * 5, 5)
        for (t, centroid), point in zip(track, expected.positions):
            assert centroid is not None
            assert np.linalg.norm(centroid - point.pixel) <= 0.5


class TestDepthOracle:
    def test_noiseless_is_bit_identical(self):
        scene = two_object_scene()
        frame = render(scene, {o.id: o.position for o in scene.objects}, cam(scene))
        assert np.array_equal(depth_oracle(frame), frame.depth)

    def test_noise_rms(self):
        scene = SyntheticScene(objects=[], width=64, height=64)
        frame = render(scene, {}, cam(scene))
        noisy = depth_oracle(frame, noise_sigma=0.1, seed=7)
        err = noisy - frame.depth
        assert abs(np.sqrt((err**2).mean()) - 0.1) < 0.01

    def test_noise_reproducible(self):
        scene = two_object_scene()
        frame = render(scene, {o.id: o.position for o in scene.objects}, cam(scene))
        a = depth_oracle(frame, noise_sigma=0.05, seed=3)
        b = depth_oracle(frame, noise_sigma=0.05, seed=3)
        assert np.array_equal(a, b)


class TestGroundTruthTrack:
    def test_static_constant(self):
        scene = two_object_scene()
        states = {o.id: o.position for o in scene.objects}
        frames = [render(scene, states, cam(scene), index=i) for i in range(3)]
        track = ground_truth_track(frames, "near")
        assert all(np.allclose(p, track[0][1]) for _, p in track)

    def test_gaps_where_invisible(self):
        scene = two_object_scene()
        states = {o.id: o.position for o in scene.objects}
        turned = Extrinsics(rot_y(np.pi / 2).T, np.zeros(3))
        frames = [
            render(scene, states, cam(scene), index=0),
            render(scene, states, cam(scene, turned), index=1),
            render(scene, states, cam(scene), index=2),
        ]
        track = ground_truth_track(frames, "near")
        assert track[0][1] is not None and track[1][1] is None and track[2][1] is not None

    def test_unknown_id(self):
        scene = two_object_scene()
        frames = [render(scene, {o.id: o.position for o in scene.objects}, cam(scene))]
        with pytest.raises(KeyError):
            ground_truth_track(frames, "ghost")


class TestSceneIO:
    def test_record_round_trip(self):
        scene = two_object_scene()
        rec = scene_to_record(scene)
        back = scene_from_record(rec)
        assert back.width == scene.width and len(back.objects) == 2
        assert np.allclose(back.objects[0].position, scene.objects[0].position)
        assert back.background_depth == scene.background_depth


class TestImageFiles:
    def test_png_round_trip(self, rng):
        img = rng.integers(0, 256, size=(20, 30, 3), dtype=np.uint8)
        assert np.array_equal(decode_png(encode_png(img)), img)

    def test_png_deterministic_bytes(self, rng):
        img = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        assert encode_png(img) == encode_png(img.copy())

    def test_ppm_header(self, tmp_path, rng):
        img = rng.integers(0, 256, size=(4, 6, 3), dtype=np.uint8)
        path = tmp_path / "x.ppm"
        write_ppm(path, img)
        data = path.read_bytes()
        assert data.startswith(b"P6\n6 4\n255\n")
        assert data[11:] == img.tobytes()

    def test_depth_round_trip(self, tmp_path, rng):
        d = rng.uniform(0, 10, size=(8, 9)).astype(np.float32).astype(np.float64)
        write_depth(tmp_path / "d.bin", tmp_path / "d.json", d)
        back = read_depth(tmp_path / "d.bin", tmp_path / "d.json")
        assert np.allclose(back, d, atol=1e-6)
