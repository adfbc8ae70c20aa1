"""Camera-invariant world-space trajectories.

A user sketches a screen-space path on the first frame. We lift it onto a
depth plane anchored to the first camera, which makes the path independent of
later camera motion: at every generated frame the path is re-projected under
that frame's pose, so object intent and camera ego-motion compose instead of
fighting. The lifted state (normalized coordinates + anchor depth + anchor
pose) stays well-defined while the projection is off-screen, which is what
lets memory logic reason about objects the camera cannot currently see.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from .geometry import (
    CameraPose,
    Extrinsics,
    Intrinsics,
    lift,
    project,
    relative_pose,
)


class TrajectoryError(ValueError):
    """Invalid trajectory input."""


class AnchorDepthError(TrajectoryError):
    """No usable depth at the requested pixel; pick a nearby valid pixel."""


@dataclass(frozen=True)
class UserTrajectory:
    """Screen-space sketch: initial click plus per-frame pixel targets."""

    track_id: str
    click: np.ndarray
    points: tuple  # ((t, pixel), ...) with t strictly increasing, first t = 0

    def __post_init__(self):
        click = np.asarray(self.click, dtype=float).reshape(2)
        pts = tuple((int(t), np.asarray(p, dtype=float).reshape(2)) for t, p in self.points)
        if not pts:
            raise TrajectoryError("trajectory needs at least one point")
        if pts[0][0] != 0:
            raise TrajectoryError(f"first trajectory point must be at frame 0, got {pts[0][0]}")
        for (ta, _), (tb, _) in zip(pts, pts[1:]):
            if tb <= ta:
                raise TrajectoryError(f"trajectory frames must strictly increase ({ta} -> {tb})")
        object.__setattr__(self, "click", click)
        object.__setattr__(self, "points", pts)

    def validate_bounds(self, k: Intrinsics) -> None:
        """Sketch-time invariant: click and all points inside the frame."""
        if not k.contains(self.click):
            raise TrajectoryError(f"click {self.click} outside {k.width}x{k.height} frame")
        for t, p in self.points:
            if not k.contains(p):
                raise TrajectoryError(f"trajectory point {p} at frame {t} outside frame")

    @property
    def last_frame(self) -> int:
        return self.points[-1][0]


@dataclass(frozen=True)
class WorldTrajectory:
    """Sketch lifted to the anchor depth plane.

    q holds (t, normalized coordinate) pairs; depth/anchor_pose/anchor_frame
    identify the plane. Values are immutable snapshots; anchor refinement
    returns a new instance.
    """

    track_id: str
    q: tuple  # ((t, q2), ...)
    depth: float
    anchor_frame: int
    anchor_pose: Extrinsics

    def __post_init__(self):
        if not self.depth > 0:
            raise TrajectoryError(f"anchor depth must be positive, got {self.depth}")
        q = tuple((int(t), np.asarray(v, dtype=float).reshape(2)) for t, v in self.q)
        for _, v in q:
            if not np.all(np.isfinite(v)):
                raise TrajectoryError("normalized coordinates must be finite")
        object.__setattr__(self, "q", q)

    def q_at(self, t: int) -> np.ndarray:
        """Normalized coordinate at frame t, holding the last known value.

        Frames before the first point hold the first value; frames past the
        last point hold the final value (an ended command keeps its target).
        """
        chosen = self.q[0][1]
        for tq, v in self.q:
            if tq <= t:
                chosen = v
            else:
                break
        return chosen

    @property
    def last_frame(self) -> int:
        return self.q[-1][0]


class TrackPoint(NamedTuple):
    """One frame of an anchored track: screen position, camera depth, visibility."""

    t: int
    pixel: np.ndarray
    depth: float
    visible: bool


@dataclass(frozen=True)
class AnchoredTrack:
    """Per-frame re-projected screen positions of a world trajectory.

    Off-screen entries are retained with visible=False (positions may be
    non-finite when behind the camera); the trajectory state itself never
    disappears just because the projection left the frustum.
    """

    track_id: str
    positions: tuple  # (TrackPoint, ...)

    def point_at(self, t: int) -> TrackPoint:
        for p in self.positions:
            if p.t == t:
                return p
        raise KeyError(f"track {self.track_id} has no entry at frame {t}")

    @property
    def visibility(self) -> list[bool]:
        return [p.visible for p in self.positions]


def normalize_trajectory(traj: UserTrajectory, k0: Intrinsics) -> list[np.ndarray]:
    """Map sketch pixels to normalized first-frame-plane coordinates."""
    return [np.array([(p[0] - k0.cx) / k0.fx, (p[1] - k0.cy) / k0.fy]) for _, p in traj.points]


def denormalize(q: np.ndarray, k0: Intrinsics) -> np.ndarray:
    return np.array([k0.fx * q[0] + k0.cx, k0.fy * q[1] + k0.cy])


def anchor_depth(depth_map: np.ndarray, click: np.ndarray) -> float:
    """Depth at the pixel containing the click (nearest-cell lookup)."""
    depth_map = np.asarray(depth_map)
    h, w = depth_map.shape
    x, y = float(click[0]), float(click[1])
    if not (0 <= x < w and 0 <= y < h):
        raise TrajectoryError(f"click ({x}, {y}) outside {w}x{h} depth map")
    ix = min(int(np.floor(x)), w - 1)
    iy = min(int(np.floor(y)), h - 1)
    d = float(depth_map[iy, ix])
    if not (np.isfinite(d) and d > 0):
        raise AnchorDepthError(
            f"no valid depth at pixel ({ix}, {iy}) (value {d}); pick a nearby valid pixel"
        )
    return d


def lift_trajectory(
    traj: UserTrajectory,
    k0: Intrinsics,
    depth: float,
    anchor_pose: Extrinsics,
    anchor_frame: int = 0,
) -> WorldTrajectory:
    """Lift a validated sketch onto the anchor depth plane."""
    traj.validate_bounds(k0)
    qs = normalize_trajectory(traj, k0)
    return WorldTrajectory(
        track_id=traj.track_id,
        q=tuple((t, q) for (t, _), q in zip(traj.points, qs)),
        depth=depth,
        anchor_frame=anchor_frame,
        anchor_pose=anchor_pose,
    )


def reproject_point(wt: WorldTrajectory, t: int, q: np.ndarray, k: Intrinsics, e: Extrinsics) -> TrackPoint:
    """Re-project one plane coordinate under one camera pose."""
    rel = relative_pose(e, wt.anchor_pose)
    proj = project(k, rel, lift(q, wt.depth))
    visible = (not proj.behind) and k.contains(proj.pixel)
    return TrackPoint(t=t, pixel=proj.pixel, depth=proj.depth, visible=visible)


def reproject(wt: WorldTrajectory, k: Intrinsics, e: Extrinsics) -> list[TrackPoint]:
    """Re-project every stored trajectory point under a single camera pose."""
    return [reproject_point(wt, t, q, k, e) for t, q in wt.q]


def reproject_track(wt: WorldTrajectory, cameras: Sequence[CameraPose], frames: int) -> AnchoredTrack:
    """Re-project frame-by-frame, pairing q(t) with camera t, for t in [0, frames)."""
    if len(cameras) < frames:
        raise TrajectoryError(f"camera script covers {len(cameras)} frames, need {frames}")
    pts = [reproject_point(wt, t, wt.q_at(t), cameras[t].k, cameras[t].e) for t in range(frames)]
    return AnchoredTrack(track_id=wt.track_id, positions=tuple(pts))


def screen_observe(path_world: Sequence[np.ndarray], cameras: Sequence[CameraPose]) -> list[TrackPoint]:
    """Project a 3D world path through per-frame cameras.

    This is the entangled screen-space observation a point tracker would see:
    object motion and camera motion folded together.
    """
    if len(path_world) != len(cameras):
        raise TrajectoryError(
            f"path length {len(path_world)} != camera count {len(cameras)}"
        )
    out = []
    for t, (p, cam) in enumerate(zip(path_world, cameras)):
        proj = project(cam.k, cam.e, p)
        visible = (not proj.behind) and cam.k.contains(proj.pixel)
        out.append(TrackPoint(t=t, pixel=proj.pixel, depth=proj.depth, visible=visible))
    return out


# ---------------------------------------------------------------------------
# Conditioning grid
# ---------------------------------------------------------------------------


@dataclass
class ConditioningGrid:
    """Sparse conditioning tensor: first-frame features displaced along tracks.

    features has shape (F, T, H, W); occupancy has shape (T, H, W) and holds
    the winning track index per written cell, -1 where empty. Cells never
    written stay exactly zero.
    """

    features: np.ndarray
    occupancy: np.ndarray
    cell_size: int

    @property
    def nonzero_cells(self) -> int:
        return int(np.count_nonzero(self.occupancy >= 0))


def build_conditioning(
    first_frame_features: np.ndarray,
    tracks: Sequence[AnchoredTrack],
    frames: int,
    cell_size: int = 16,
) -> ConditioningGrid:
    """Copy each track's frame-0 source-cell feature into its per-frame cell.

    Cell coordinates are (h, w) = (floor(y / cell_size), floor(x / cell_size)).
    Targets outside the grid are skipped (the analytic track still carries the
    position); colliding writes resolve to the higher track index.
    """
    feats = np.asarray(first_frame_features, dtype=np.float32)
    if feats.ndim != 3 or feats.size == 0:
        raise TrajectoryError(f"first-frame features must be a non-empty FxHxW array, got {feats.shape}")
    f, h, w = feats.shape
    grid = np.zeros((f, frames, h, w), dtype=np.float32)
    occupancy = np.full((frames, h, w), -1, dtype=np.int64)

    for idx, track in enumerate(tracks):
        src = track.point_at(0)
        if not src.visible:
            raise TrajectoryError(f"track {track.track_id} source position not inside frame at t=0")
        h0 = int(src.pixel[1] // cell_size)
        w0 = int(src.pixel[0] // cell_size)
        if not (0 <= h0 < h and 0 <= w0 < w):
            raise TrajectoryError(f"track {track.track_id} source cell ({h0}, {w0}) outside grid")
        src_feat = feats[:, h0, w0]
        for p in track.positions:
            if p.t >= frames or not p.visible:
                continue
            ht = int(p.pixel[1] // cell_size)
            wt = int(p.pixel[0] // cell_size)
            if not (0 <= ht < h and 0 <= wt < w):
                continue
            grid[:, p.t, ht, wt] = src_feat
            occupancy[p.t, ht, wt] = idx
    return ConditioningGrid(features=grid, occupancy=occupancy, cell_size=cell_size)


class RefineResult(NamedTuple):
    state: WorldTrajectory
    stale: bool  # True when refinement was skipped and the state is unchanged


def refine_anchor(
    wt: WorldTrajectory,
    latest_depth_map: np.ndarray,
    latest_pose: Extrinsics,
    latest_point: TrackPoint,
    beta: float = 0.7,
) -> RefineResult:
    """Move the anchor to the latest frame and re-estimate the plane depth.

    The new depth is an EMA between the depth-map lookup at the re-projected
    pixel (weight beta) and the current point's depth in the latest camera
    frame; beta=1 means full replacement. Remaining coordinates are
    re-expressed so the lifted 3D rays through the new camera are preserved,
    making the re-projection continuous at the refresh frame. If the anchored
    point is not visible, refinement is skipped and the state returned stale.
    """
    if not latest_point.visible:
        return RefineResult(wt, stale=True)
    try:
        looked_up = anchor_depth(latest_depth_map, latest_point.pixel)
    except AnchorDepthError:
        return RefineResult(wt, stale=True)

    new_depth = beta * looked_up + (1.0 - beta) * latest_point.depth

    # Re-express each stored coordinate in the new anchor camera: preserve the
    # old lifted 3D point's ray, then re-plane it at the refreshed depth.
    old_inv = wt.anchor_pose.inverse()
    new_q = []
    for t, q in wt.q:
        p_world = old_inv.apply(lift(q, wt.depth))
        p_new = latest_pose.apply(p_world)
        if p_new[2] <= 1e-9:
            if t >= latest_point.t:
                # A future point behind the new anchor camera cannot live on a
                # positive-depth plane; keep the old anchor instead.
                return RefineResult(wt, stale=True)
            continue  # already-generated frame, never queried again
        new_q.append((t, np.array([p_new[0] / p_new[2], p_new[1] / p_new[2]])))
    if not new_q:
        return RefineResult(wt, stale=True)
    refined = WorldTrajectory(
        track_id=wt.track_id,
        q=tuple(new_q),
        depth=new_depth,
        anchor_frame=latest_point.t,
        anchor_pose=latest_pose,
    )
    return RefineResult(refined, stale=False)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def trajectory_from_record(rec: dict) -> UserTrajectory:
    return UserTrajectory(
        track_id=str(rec["track_id"]),
        click=np.array(rec["click"], dtype=float),
        points=tuple((int(t), np.array([x, y], dtype=float)) for t, x, y in rec["points"]),
    )


def trajectory_to_record(traj: UserTrajectory) -> dict:
    return {
        "track_id": traj.track_id,
        "click": [float(traj.click[0]), float(traj.click[1])],
        "points": [[int(t), float(p[0]), float(p[1])] for t, p in traj.points],
    }


def load_trajectory(path) -> UserTrajectory:
    with open(path) as f:
        return trajectory_from_record(json.load(f))


def save_trajectory(path, traj: UserTrajectory) -> None:
    with open(path, "w") as f:
        json.dump(trajectory_to_record(traj), f, indent=1)


def export_conditioning(grid: ConditioningGrid, bin_path, header_path) -> None:
    """Write the grid as a flat binary tensor plus a JSON header."""
    f, t, h, w = grid.features.shape
    grid.features.astype("<f4").tofile(bin_path)
    with open(header_path, "w") as fp:
        json.dump({"F": f, "T": t, "H": h, "W": w, "layout": "F-major", "dtype": "float32"}, fp)


def load_conditioning(bin_path, header_path) -> np.ndarray:
    with open(header_path) as fp:
        hdr = json.load(fp)
    data = np.fromfile(bin_path, dtype="<f4")
    return data.reshape(hdr["F"], hdr["T"], hdr["H"], hdr["W"])
