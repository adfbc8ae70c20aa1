"""Deterministic synthetic world model with exact ground truth.

Scenes are collections of textured planar squares facing the reference
(world +z) plane, ray-cast against a z-buffer. Every quantity a learned world
model would only approximate is exact here: per-pixel depth, occlusion order,
object screen positions. That exactness is what lets the closed-loop tests
attribute every pixel of error to the trajectory pipeline rather than to the
scene model.

The world frame doubles as the reference-camera frame: fixtures that need the
"sketch plane equals object plane" identity start their camera scripts at the
identity pose.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .geometry import CameraPose, Extrinsics, Intrinsics
from .trajectory import WorldTrajectory, lift


class SceneError(ValueError):
    pass


@dataclass
class SceneObject:
    id: str
    position: np.ndarray  # world position of the square center at t=0
    half_extent: float
    texture_seed: int
    commanded_path: WorldTrajectory | None = None

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        if not np.all(np.isfinite(self.position)):
            raise SceneError(f"object {self.id}: non-finite position")
        if not self.half_extent > 0:
            raise SceneError(f"object {self.id}: half_extent must be positive")


@dataclass
class SyntheticScene:
    objects: list[SceneObject]
    width: int = 256
    height: int = 256
    background_seed: int = 1
    background_depth: float = 10.0
    base_intrinsics: Intrinsics | None = None

    def __post_init__(self):
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise SceneError(f"duplicate object ids: {ids}")
        if self.base_intrinsics is None:
            f = 0.9 * min(self.width, self.height)
            self.base_intrinsics = Intrinsics(
                fx=f, fy=f, cx=self.width / 2.0, cy=self.height / 2.0,
                width=self.width, height=self.height,
            )

    def object_by_id(self, object_id: str) -> SceneObject:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise KeyError(f"unknown object id {object_id!r}")


@dataclass
class RenderedFrame:
    index: int
    image: np.ndarray  # HxWx3 uint8
    depth: np.ndarray  # HxW float64 camera-frame z, 0 where no surface was hit
    object_centroids: dict  # id -> np.ndarray([x, y]) or None when off-screen


def _hash_cells(seed: int, ci: np.ndarray, cj: np.ndarray) -> np.ndarray:
    """Deterministic per-cell RGB from integer cell coordinates."""
    with np.errstate(over="ignore"):
        h = (
            ci.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
            + cj.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
            + np.uint64(seed) * np.uint64(0x165667B19E3779F9)
        )
        h ^= h >> np.uint64(29)
        h *= np.uint64(0xBF58476D1CE4E5B9)
        h ^= h >> np.uint64(32)
    r = (h & np.uint64(0xFF)).astype(np.uint8)
    g = ((h >> np.uint64(8)) & np.uint64(0xFF)).astype(np.uint8)
    b = ((h >> np.uint64(16)) & np.uint64(0xFF)).astype(np.uint8)
    return np.stack([r, g, b], axis=-1)


def _pixel_rays(k: Intrinsics, e: Extrinsics):
    """World-space origins/directions through every pixel center.

    Directions are scaled so the ray parameter equals camera-frame depth.
    """
    xs = (np.arange(k.width) + 0.5 - k.cx) / k.fx
    ys = (np.arange(k.height) + 0.5 - k.cy) / k.fy
    gx, gy = np.meshgrid(xs, ys)
    dirs_cam = np.stack([gx, gy, np.ones_like(gx)], axis=-1)  # z component = 1
    dirs_world = dirs_cam @ e.rotation  # R^T applied to each direction
    return e.camera_center, dirs_world


def render(
    scene: SyntheticScene, object_states: dict, camera: CameraPose, index: int = 0
) -> RenderedFrame:
    """Ray-cast the scene against the camera with an exact per-pixel z-buffer.

    object_states maps object id to its world position for this frame.
    Squares keep their world +z facing; nearer surfaces win the z-test, with
    exact ties going to the earlier object in scene order.
    """
    k, e = camera.k, camera.e
    h, w = k.height, k.width
    center, dirs = _pixel_rays(k, e)
    dz = dirs[..., 2]

    depth = np.zeros((h, w), dtype=np.float64)
    image = np.zeros((h, w, 3), dtype=np.uint8)
    winner = np.full((h, w), -1, dtype=np.int64)  # -2 background, >=0 object index

    def cast_plane(plane_z: float):
        """Ray parameter (camera depth) where each pixel ray meets z=plane_z."""
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (plane_z - center[2]) / dz
        return s

    # Background plane first, then objects; the z-test sorts out occlusion.
    s_bg = cast_plane(scene.background_depth)
    hit_bg = np.isfinite(s_bg) & (s_bg > 0)
    if np.any(hit_bg):
        px = center[0] + s_bg * dirs[..., 0]
        py = center[1] + s_bg * dirs[..., 1]
        cells_i = np.floor(px[hit_bg]).astype(np.int64)
        cells_j = np.floor(py[hit_bg]).astype(np.int64)
        colors = _hash_cells(scene.background_seed, cells_i, cells_j)
        colors = (colors // 3 + 40).astype(np.uint8)  # keep the backdrop muted
        image[hit_bg] = colors
        depth[hit_bg] = s_bg[hit_bg]
        winner[hit_bg] = -2

    centroids: dict = {}
    for idx, obj in enumerate(scene.objects):
        pos = np.asarray(object_states.get(obj.id, obj.position), dtype=float)
        s = cast_plane(pos[2])
        u = center[0] + s * dirs[..., 0] - pos[0]
        v = center[1] + s * dirs[..., 1] - pos[1]
        he = obj.half_extent
        hit = (
            np.isfinite(s)
            & (s > 0)
            & (np.abs(u) <= he)
            & (np.abs(v) <= he)
            & ((depth == 0) | (s < depth))
        )
        if np.any(hit):
            texture_cells = 8
            ci = np.clip(((u[hit] + he) / (2 * he) * texture_cells).astype(np.int64), 0, texture_cells - 1)
            cj = np.clip(((v[hit] + he) / (2 * he) * texture_cells).astype(np.int64), 0, texture_cells - 1)
            image[hit] = _hash_cells(obj.texture_seed, ci, cj)
            depth[hit] = s[hit]
            winner[hit] = idx

    for idx, obj in enumerate(scene.objects):
        mask = winner == idx
        if np.any(mask):
            ys, xs = np.nonzero(mask)
            centroids[obj.id] = np.array([xs.mean() + 0.5, ys.mean() + 0.5])
        else:
            centroids[obj.id] = None

    return RenderedFrame(index=index, image=image, depth=depth, object_centroids=centroids)


def step_objects(scene: SyntheticScene, t: int, overrides: dict | None = None) -> dict:
    """World positions at frame t: commanded objects follow their lifted path.

    A command is a world trajectory; the position is its plane point at q(t),
    mapped back to world through the anchor pose. Uncommanded objects stay at
    their t=0 position; an ended command holds its final target.
    """
    commands = {o.id: o.commanded_path for o in scene.objects}
    if overrides:
        commands.update(overrides)
    states = {}
    for obj in scene.objects:
        cmd = commands.get(obj.id)
        if cmd is None:
            states[obj.id] = obj.position.copy()
        else:
            q = cmd.q_at(t)
            states[obj.id] = cmd.anchor_pose.inverse().apply(lift(q, cmd.depth))
    return states


def depth_oracle(frame: RenderedFrame, noise_sigma: float = 0.0, seed: int | None = None) -> np.ndarray:
    """The exact z-buffer, optionally with additive Gaussian noise.

    Noise emulates monocular-depth error for ablations; it is clipped so
    valid depths stay positive and never touches no-hit (zero) pixels.
    """
    d = frame.depth.copy()
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        noise = rng.normal(0.0, noise_sigma, size=d.shape)
        valid = d > 0
        d[valid] = np.maximum(d[valid] + noise[valid], 1e-6)
    return d


def ground_truth_track(frames: list[RenderedFrame], object_id: str) -> list:
    """Rendered-centroid sequence for one object, with off-screen gaps as None.

    The exact stand-in for a point tracker: positions are read off the frames
    (so they carry rasterization quantization), not off the scene state.
    """
    if not frames:
        return []
    if object_id not in frames[0].object_centroids:
        raise KeyError(f"unknown object id {object_id!r}")
    return [
        (f.index, None if f.object_centroids[object_id] is None else f.object_centroids[object_id].copy())
        for f in frames
    ]


# ---------------------------------------------------------------------------
# Scene file: JSON {frame:[w,h], background:{seed,depth}, objects:[...]}
# ---------------------------------------------------------------------------


def scene_from_record(rec: dict) -> SyntheticScene:
    w, h = rec["frame"]
    bg = rec.get("background", {})
    objs = [
        SceneObject(
            id=str(o["id"]),
            position=np.array(o["pos"], dtype=float),
            half_extent=float(o["half_extent"]),
            texture_seed=int(o.get("texture_seed", 0)),
        )
        for o in rec.get("objects", [])
    ]
    return SyntheticScene(
        objects=objs,
        width=int(w),
        height=int(h),
        background_seed=int(bg.get("seed", 1)),
        background_depth=float(bg.get("depth", 10.0)),
    )


def scene_to_record(scene: SyntheticScene) -> dict:
    return {
        "frame": [scene.width, scene.height],
        "background": {"seed": scene.background_seed, "depth": scene.background_depth},
        "objects": [
            {
                "id": o.id,
                "pos": [float(v) for v in o.position],
                "half_extent": float(o.half_extent),
                "texture_seed": o.texture_seed,
            }
            for o in scene.objects
        ],
    }


def load_scene(path) -> SyntheticScene:
    with open(path) as f:
        return scene_from_record(json.load(f))


def save_scene(path, scene: SyntheticScene) -> None:
    with open(path, "w") as f:
        json.dump(scene_to_record(scene), f, indent=1)
