"""Chunked autoregressive closed loop with trajectory-anchored memory.

Each chunk: re-project the lifted trajectories under the chunk's cameras,
hand the per-frame conditioning to the synthetic world model, render, update
the memory bank, and optionally refresh the trajectory anchor from the newest
frame's depth.

The memory bank mimics an autoregressive KV cache at frame granularity. When
an object leaves view and the camera later returns to a similar viewpoint,
the frames captured just before the exit still encode the object at its stale
location; the pre-exit filter masks exactly those frames out of the retrieval
set. The synthetic world model consumes that mask: while stale pre-exit
memory stays retrievable (persistence disabled), a commanded object's motion
clock pauses whenever its trajectory signal is off-screen, reproducing the
"object frozen at its pre-exit location" failure; with persistence enabled
the trajectory signal keeps driving the object and it re-enters at its
updated position.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from .geometry import CameraPose, Extrinsics, fov_similarity
from .trajectory import (
    AnchoredTrack,
    TrackPoint,
    UserTrajectory,
    WorldTrajectory,
    reproject_point,
    anchor_depth,
    lift_trajectory,
    refine_anchor,
)
from .worldsim import RenderedFrame, SyntheticScene, depth_oracle, render
from .images import encode_png


class RolloutError(ValueError):
    pass


class SelectionError(RolloutError):
    """Click does not land on (or near enough to) any object."""


@dataclass
class MemoryFrame:
    frame_index: int
    view: Extrinsics
    summary: np.ndarray
    retained: bool = True


@dataclass
class MemoryBank:
    capacity: int = 64
    tau: float = 0.9
    k: int = 2
    sigma_c: float = 1.0
    frames: list = field(default_factory=list)

    def __post_init__(self):
        if self.capacity < 1:
            raise RolloutError("memory capacity must be >= 1")
        if not 0.0 <= self.tau <= 1.0:
            raise RolloutError(f"tau must be in [0, 1], got {self.tau}")
        if self.k < 0:
            raise RolloutError(f"pre-exit zone size must be >= 0, got {self.k}")


def memory_append(bank: MemoryBank, entries: Sequence[MemoryFrame]) -> MemoryBank:
    """Append frames in order; evict the oldest past capacity (FIFO)."""
    tail = bank.frames[-1].frame_index if bank.frames else -1
    for mf in entries:
        if mf.frame_index <= tail:
            raise RolloutError(
                f"out-of-order memory append: frame {mf.frame_index} after {tail}"
            )
        tail = mf.frame_index
        bank.frames.append(mf)
    overflow = len(bank.frames) - bank.capacity
    if overflow > 0:
        del bank.frames[:overflow]
    return bank


@dataclass(frozen=True)
class OffscreenEvent:
    track_id: str
    t0: int
    t1: int | None  # None while the interval is still open

    def __post_init__(self):
        if self.t1 is not None and not self.t0 < self.t1:
            raise RolloutError(f"event must have t0 < t1, got ({self.t0}, {self.t1})")


def detect_offscreen(track: AnchoredTrack) -> list[OffscreenEvent]:
    """Maximal invisible intervals [t0, t1); the last one may be open."""
    events = []
    t0 = None
    for p in track.positions:
        if not p.visible and t0 is None:
            t0 = p.t
        elif p.visible and t0 is not None:
            events.append(OffscreenEvent(track.track_id, t0, p.t))
            t0 = None
    if t0 is not None:
        events.append(OffscreenEvent(track.track_id, t0, None))
    return events


@dataclass
class MemoryFilterReport:
    mask: list  # retained flag per bank frame, aligned to bank order
    scores: list  # viewpoint similarity of each bank frame vs the current pose
    in_zone: list  # whether each bank frame falls in some event's pre-exit zone


def filter_memory(bank: MemoryBank, v_cur: Extrinsics, events: Sequence[OffscreenEvent]) -> MemoryFilterReport:
    """Mask pre-exit memory frames whose viewpoint matches the current one.

    A frame is excluded iff it lies within the k frames before some event's
    exit AND its viewpoint similarity to the current pose exceeds tau; all
    other frames are retained. Flags are reset at the start of every pass, so
    exclusions never outlive a single chunk.
    """
    zones = [(e.t0 - bank.k, e.t0 - 1) for e in events]
    mask, scores, in_zone = [], [], []
    for mf in bank.frames:
        mf.retained = True
        score = fov_similarity(mf.view, v_cur, bank.sigma_c)
        zone = any(lo <= mf.frame_index <= hi for lo, hi in zones)
        if zone and score > bank.tau:
            mf.retained = False
        mask.append(mf.retained)
        scores.append(score)
        in_zone.append(zone)
    return MemoryFilterReport(mask=mask, scores=scores, in_zone=in_zone)


def reentry_position(track: AnchoredTrack, event: OffscreenEvent) -> np.ndarray:
    """Anchored screen position at the event's re-entry frame."""
    if event.t1 is None:
        raise RolloutError("cannot compute re-entry position of an open event")
    return track.point_at(event.t1).pixel


@dataclass
class RolloutConfig:
    horizon: int = 96
    chunk_size: int = 16
    state_persistence: bool = True  # off = stale-memory baseline behavior
    refine_depth: bool = True
    refine_beta: float = 0.7
    depth_noise_sigma: float = 0.0
    depth_bias: float = 0.0  # planted multiplicative anchor-depth error
    conditioning: str = "world"  # "world" or "pixel" (representation ablation)
    attention_mode: str = "AR"  # config label only, echoed into logs
    memory_capacity: int = 64
    tau: float = 0.9
    preexit_k: int = 2
    sigma_c: float = 1.0
    cell_size: int = 16
    feature_channels: int = 32
    selection_radius: float = 12.0
    seed: int = 0

    def __post_init__(self):
        if self.chunk_size < 1:
            raise RolloutError("chunk_size must be >= 1")
        if self.horizon < self.chunk_size:
            raise RolloutError("horizon must be >= chunk_size")
        if self.conditioning not in ("world", "pixel"):
            raise RolloutError(f"unknown conditioning mode {self.conditioning!r}")
        if self.attention_mode not in ("BI", "AR"):
            raise RolloutError(f"attention_mode must be BI or AR, got {self.attention_mode!r}")

    @property
    def num_chunks(self) -> int:
        return -(-self.horizon // self.chunk_size)


@dataclass
class ChunkResult:
    chunk: int
    frame_start: int
    frame_end: int
    frames: list  # RenderedFrame
    track_segments: dict  # track_id -> [TrackPoint, ...]
    memory: dict  # per-chunk memory log entry
    events: list  # OffscreenEvent snapshot after this chunk
    done: bool


@dataclass
class RolloutResult:
    frames: list
    tracks: dict  # track_id -> AnchoredTrack over the full horizon
    memory_log: list
    events: list
    selections: dict  # track_id -> object id
    config: RolloutConfig
    bank: MemoryBank

    def rendered_track(self, object_id: str) -> list:
        from .worldsim import ground_truth_track

        return ground_truth_track(self.frames, object_id)


class _TrackState:
    """Mutable per-trajectory rollout state (single-writer inside a session)."""

    def __init__(self, user: UserTrajectory, wt: WorldTrajectory, object_id: str, plane_z: float):
        self.user = user
        self.wt = wt
        self.object_id = object_id
        self.plane_z = plane_z  # world z of the object's square
        self.clock = 0  # command clock; pauses off-screen when persistence is off
        self.points: list[TrackPoint] = []
        self.last_position: np.ndarray | None = None
        self.refine_log: list = []

    def pixel_at(self, t: int) -> np.ndarray:
        """Raw sketch pixel at frame t (forward-filled)."""
        chosen = self.user.points[0][1]
        for tp, p in self.user.points:
            if tp <= t:
                chosen = p
            else:
                break
        return chosen


def _select_object(scene: SyntheticScene, cam0: CameraPose, click: np.ndarray, radius: float) -> str:
    """Resolve a click to the nearest object center projected in frame 0."""
    from .geometry import project

    best_id, best_dist = None, np.inf
    for obj in scene.objects:
        proj = project(cam0.k, cam0.e, obj.position)
        if proj.behind:
            continue
        d = float(np.linalg.norm(proj.pixel - click))
        if d < best_dist:
            best_id, best_dist = obj.id, d
    if best_id is None:
        raise SelectionError("no object projects in front of the camera at frame 0")
    if best_dist > radius:
        raise SelectionError(
            f"click is {best_dist:.1f}px from nearest object {best_id!r} "
            f"(selection radius {radius:.1f}px)"
        )
    return best_id


def _ray_plane_position(cam: CameraPose, pixel: np.ndarray, plane_z: float) -> np.ndarray | None:
    """Intersect the camera ray through pixel with the world plane z=plane_z.

    This is the synthetic model's spatial prior: conditioning says where the
    object appears on screen, the scene says which plane it lives in. Under
    an exact anchor depth the intersection coincides with the lifted
    trajectory point.
    """
    if not np.all(np.isfinite(pixel)):
        return None
    d_cam = np.array([(pixel[0] - cam.k.cx) / cam.k.fx, (pixel[1] - cam.k.cy) / cam.k.fy, 1.0])
    d_world = cam.e.rotation.T @ d_cam
    center = cam.e.camera_center
    if abs(d_world[2]) < 1e-12:
        return None
    s = (plane_z - center[2]) / d_world[2]
    if s <= 0:
        return None
    return center + s * d_world


def first_frame_features(image: np.ndarray, cell_size: int, channels: int) -> np.ndarray:
    """Per-cell mean RGB of the first frame, tiled to the channel count."""
    h, w = image.shape[:2]
    gh, gw = -(-h // cell_size), -(-w // cell_size)
    feats = np.zeros((channels, gh, gw), dtype=np.float32)
    for hy in range(gh):
        for wx in range(gw):
            block = image[hy * cell_size : (hy + 1) * cell_size, wx * cell_size : (wx + 1) * cell_size]
            rgb = block.reshape(-1, 3).mean(axis=0) / 255.0
            feats[:, hy, wx] = np.resize(rgb, channels)
    return feats


def _downsample(image: np.ndarray, cells: int = 8) -> np.ndarray:
    h, w = image.shape[:2]
    sy, sx = max(1, h // cells), max(1, w // cells)
    hh, ww = (h // sy) * sy, (w // sx) * sx
    block = image[:hh, :ww].reshape(hh // sy, sy, ww // sx, sx, 3)
    return block.mean(axis=(1, 3)).astype(np.float32)


class RolloutSession:
    """Stepwise closed-loop rollout; one chunk per step() call.

    State is single-writer: call step() from one thread at a time. A full
    run is exactly the concatenation of its chunks, so streaming (service)
    and one-shot (batch) execution produce identical outputs.
    """

    def __init__(
        self,
        scene: SyntheticScene,
        trajectories: Sequence[UserTrajectory],
        cameras: Sequence[CameraPose],
        cfg: RolloutConfig,
    ):
        if len(cameras) < cfg.horizon:
            raise RolloutError(
                f"camera script covers {len(cameras)} frames, horizon needs {cfg.horizon}"
            )
        self.scene = scene
        self.cameras = list(cameras)
        self.cfg = cfg
        self.bank = MemoryBank(
            capacity=cfg.memory_capacity, tau=cfg.tau, k=cfg.preexit_k, sigma_c=cfg.sigma_c
        )
        self.frames: list[RenderedFrame] = []
        self.states: list[dict] = []  # realized world positions per frame
        self.memory_log: list = []
        self.edit_log: list = []
        self.next_chunk = 0

        cam0 = self.cameras[0]
        frame0 = render(scene, {o.id: o.position for o in scene.objects}, cam0, index=0)
        self._frame0 = frame0

        self.tracks: dict[str, _TrackState] = {}
        for traj in trajectories:
            self._add_track(traj)

    def _depth0(self) -> np.ndarray:
        return depth_oracle(self._frame0, self.cfg.depth_noise_sigma, seed=(self.cfg.seed, 0))

    def _add_track(self, traj: UserTrajectory) -> _TrackState:
        cfg = self.cfg
        cam0 = self.cameras[0]
        object_id = _select_object(self.scene, cam0, traj.click, cfg.selection_radius)
        d_hat = anchor_depth(self._depth0(), traj.click) * (1.0 + cfg.depth_bias)
        wt = lift_trajectory(traj, cam0.k, d_hat, cam0.e, anchor_frame=0)
        plane_z = float(self.scene.object_by_id(object_id).position[2])
        if traj.track_id in self.tracks:
            raise RolloutError(f"duplicate track id {traj.track_id!r}")
        ts = _TrackState(traj, wt, object_id, plane_z)
        self.tracks[traj.track_id] = ts
        return ts

    def add_trajectory(self, traj: UserTrajectory) -> str:
        """Add a trajectory between chunks; it takes effect from the next one.

        Entries for already-generated frames are backfilled analytically so
        every track stays aligned with the frame timeline.
        """
        ts = self._add_track(traj)
        for t in range(len(self.frames)):
            cam = self.cameras[t]
            live = reproject_point(ts.wt, t, ts.wt.q_at(t), cam.k, cam.e)
            ts.points.append(live)
            if t == 0:
                ts.clock = 0
            elif self.cfg.state_persistence:
                ts.clock = t
            elif live.visible:
                ts.clock += 1
        ts.last_position = self.scene.object_by_id(ts.object_id).position.copy()
        self.edit_log.append({"chunk": self.next_chunk, "edit": "add_trajectory", "track_id": traj.track_id})
        return ts.object_id

    def replace_cameras(self, cameras: Sequence[CameraPose]) -> None:
        """Swap the remaining camera script between chunks."""
        if len(cameras) < self.cfg.horizon:
            raise RolloutError(
                f"camera script covers {len(cameras)} frames, horizon needs {self.cfg.horizon}"
            )
        self.cameras = list(cameras)
        self.edit_log.append({"chunk": self.next_chunk, "edit": "replace_cameras"})

    @property
    def done(self) -> bool:
        return self.next_chunk >= self.cfg.num_chunks

    def _events_so_far(self) -> list[OffscreenEvent]:
        events = []
        for ts in self.tracks.values():
            events.extend(detect_offscreen(AnchoredTrack(ts.wt.track_id, tuple(ts.points))))
        return events

    def step(self) -> ChunkResult:
        if self.done:
            raise RolloutError("rollout already complete")
        cfg = self.cfg
        kc = self.next_chunk
        start = kc * cfg.chunk_size
        end = min(start + cfg.chunk_size, cfg.horizon)
        v_cur = self.cameras[start].e

        # Retrieval filtering against the pose opening this chunk. The mask is
        # logged every chunk; exclusions apply only with persistence enabled.
        events_before = self._events_so_far()
        if cfg.state_persistence:
            report = filter_memory(self.bank, v_cur, events_before)
        else:
            report = filter_memory(self.bank, v_cur, [])
        mem_entry = {
            "chunk": kc,
            "frame_start": start,
            "frame_end": end,
            "current_pose_frame": start,
            "entries": [
                {
                    "frame": mf.frame_index,
                    "similarity": report.scores[i],
                    "in_preexit_zone": bool(report.in_zone[i])
                    if cfg.state_persistence
                    else any(
                        e.t0 - self.bank.k <= mf.frame_index <= e.t0 - 1 for e in events_before
                    ),
                    "retained": bool(report.mask[i]),
                }
                for i, mf in enumerate(self.bank.frames)
            ],
        }
        self.memory_log.append(mem_entry)

        chunk_frames = []
        segments: dict[str, list[TrackPoint]] = {tid: [] for tid in self.tracks}
        for t in range(start, end):
            cam = self.cameras[t]
            states = {}
            for ts in self.tracks.values():
                live = reproject_point(ts.wt, t, ts.wt.q_at(t), cam.k, cam.e)
                ts.points.append(live)
                segments[ts.wt.track_id].append(live)

                if t == 0:
                    ts.clock = 0
                    ts.last_position = self.scene.object_by_id(ts.object_id).position.copy()
                    continue
                if cfg.state_persistence:
                    ts.clock = t
                elif live.visible:
                    ts.clock += 1

                if cfg.conditioning == "pixel":
                    cond_pixel = ts.pixel_at(ts.clock)
                else:
                    cond = reproject_point(ts.wt, t, ts.wt.q_at(ts.clock), cam.k, cam.e)
                    cond_pixel = cond.pixel
                pos = _ray_plane_position(cam, cond_pixel, ts.plane_z)
                if pos is not None:
                    ts.last_position = pos
                states[ts.object_id] = ts.last_position

            if t == 0:
                frame = self._frame0
                full_states = {o.id: o.position.copy() for o in self.scene.objects}
            else:
                frame = render(self.scene, states, cam, index=t)
                full_states = {
                    o.id: np.asarray(states.get(o.id, o.position), dtype=float).copy()
                    for o in self.scene.objects
                }
            chunk_frames.append(frame)
            self.states.append(full_states)

        self.frames.extend(chunk_frames)
        memory_append(
            self.bank,
            [
                MemoryFrame(frame_index=f.index, view=self.cameras[f.index].e, summary=_downsample(f.image))
                for f in chunk_frames
            ],
        )

        if cfg.refine_depth and cfg.conditioning == "world":
            last_t = end - 1
            last_frame = chunk_frames[-1]
            dmap = depth_oracle(last_frame, cfg.depth_noise_sigma, seed=(cfg.seed, last_t))
            for ts in self.tracks.values():
                result = refine_anchor(
                    ts.wt, dmap, self.cameras[last_t].e, ts.points[last_t], beta=cfg.refine_beta
                )
                ts.refine_log.append(
                    {"chunk": kc, "frame": last_t, "stale": result.stale, "depth": result.state.depth}
                )
                ts.wt = result.state

        self.next_chunk += 1
        events_after = self._events_so_far()
        return ChunkResult(
            chunk=kc,
            frame_start=start,
            frame_end=end,
            frames=chunk_frames,
            track_segments=segments,
            memory=mem_entry,
            events=events_after,
            done=self.done,
        )

    def conditioning(self):
        """Conditioning grid over the generated frames.

        First-frame cell features stand in for a latent embedding: per-cell
        mean RGB tiled across the configured channel count. The grid is what
        a latent-space generator would consume; the synthetic model itself
        reads the analytic tracks.
        """
        from .trajectory import build_conditioning

        feats = first_frame_features(
            self._frame0.image, self.cfg.cell_size, self.cfg.feature_channels
        )
        tracks = [AnchoredTrack(tid, tuple(ts.points)) for tid, ts in self.tracks.items()]
        return build_conditioning(feats, tracks, len(self.frames), self.cfg.cell_size)

    def result(self) -> RolloutResult:
        tracks = {
            tid: AnchoredTrack(tid, tuple(ts.points)) for tid, ts in self.tracks.items()
        }
        return RolloutResult(
            frames=self.frames,
            tracks=tracks,
            memory_log=self.memory_log,
            events=self._events_so_far(),
            selections={tid: ts.object_id for tid, ts in self.tracks.items()},
            config=self.cfg,
            bank=self.bank,
        )


def run_rollout(
    scene: SyntheticScene,
    trajectories: Sequence[UserTrajectory],
    cameras: Sequence[CameraPose],
    cfg: RolloutConfig,
) -> RolloutResult:
    """One-shot rollout over the full horizon (streaming-equivalent)."""
    session = RolloutSession(scene, trajectories, cameras, cfg)
    while not session.done:
        session.step()
    return session.result()


# ---------------------------------------------------------------------------
# Serialization: RolloutResult as a directory
#   frames/frame_XXXXXX.png, tracks.json, memory_log.json, events.json,
#   config.json
# ---------------------------------------------------------------------------


def track_point_record(p: TrackPoint) -> dict:
    finite = bool(np.all(np.isfinite(p.pixel)))
    return {
        "t": p.t,
        "pixel": [float(p.pixel[0]), float(p.pixel[1])] if finite else None,
        "depth": float(p.depth),
        "visible": bool(p.visible),
    }


def event_record(e: OffscreenEvent) -> dict:
    return {"track_id": e.track_id, "t0": e.t0, "t1": e.t1}


def _dump(path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=1, sort_keys=True)


def save_rollout(result: RolloutResult, out_dir) -> None:
    out_dir = str(out_dir)
    frames_dir = os.path.join(out_dir, "frames")
    os.makedirs(frames_dir, exist_ok=True)
    for f in result.frames:
        with open(os.path.join(frames_dir, f"frame_{f.index:06d}.png"), "wb") as fp:
            fp.write(encode_png(f.image))
    _dump(
        os.path.join(out_dir, "tracks.json"),
        {
            tid: {
                "object_id": result.selections[tid],
                "points": [track_point_record(p) for p in tr.positions],
            }
            for tid, tr in result.tracks.items()
        },
    )
    _dump(os.path.join(out_dir, "memory_log.json"), result.memory_log)
    _dump(os.path.join(out_dir, "events.json"), [event_record(e) for e in result.events])
    _dump(os.path.join(out_dir, "config.json"), asdict(result.config))
