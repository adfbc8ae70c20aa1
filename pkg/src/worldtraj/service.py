"""Session-oriented JSON-over-HTTP API for interactive rollout steering.

One session holds one scene, camera script, trajectory set and a chunked
rollout in progress. Steering is chunk-at-a-time: the client steps, looks at
the result, may swap the remaining camera script or add a trajectory, and
steps again. Sessions are persisted to a directory store keyed by id and are
rebuilt deterministically (input replay) after a restart, so the store is the
source of truth and the in-memory engine just a cache.

Endpoints:
    POST /sessions                        create (body: config overrides)
    POST /sessions/{id}/scene             set scene JSON
    POST /sessions/{id}/camera            set camera script JSON
    POST /sessions/{id}/trajectory        add a trajectory JSON
    POST /sessions/{id}/step              advance one chunk (body: {chunk}?)
    GET  /sessions/{id}/memory|tracks|events|metrics
    GET  /sessions/{id}/frames/{t}        PNG bytes
    GET  /healthz
"""

from __future__ import annotations

import json
import math
import os
import re
import threading
import uuid
from dataclasses import asdict, fields
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .geometry import DegenerateGeometryError, camera_script_from_records
from .images import encode_png
from .metrics import MetricReport, MetricUndefinedError, PoseTrajectory, psnr_ssim, rpe, trajectory_error
from .rollout import (
    RolloutConfig,
    RolloutError,
    RolloutSession,
    SelectionError,
    event_record,
    track_point_record,
)
from .trajectory import TrajectoryError, trajectory_from_record
from .worldsim import SceneError, render, scene_from_record


class ApiError(Exception):
    def __init__(self, status: int, message: str, **fields):
        super().__init__(message)
        self.status = status
        self.body = {"error": message, **fields}


_CONFIG_FIELDS = {f.name: f.type for f in fields(RolloutConfig)}


def config_from_overrides(overrides: dict, base: RolloutConfig | None = None) -> RolloutConfig:
    values = asdict(base) if base else {}
    for key, val in (overrides or {}).items():
        if key not in _CONFIG_FIELDS:
            raise ApiError(400, f"unknown config field {key!r}", field=key)
        expected = {"horizon": int, "chunk_size": int, "memory_capacity": int,
                    "preexit_k": int, "cell_size": int, "feature_channels": int,
                    "seed": int}.get(key)
        if expected is int and not isinstance(val, int):
            raise ApiError(400, f"config field {key!r} must be an integer", field=key)
        if key in ("state_persistence", "refine_depth") and not isinstance(val, bool):
            raise ApiError(400, f"config field {key!r} must be a boolean", field=key)
        values[key] = val
    try:
        return RolloutConfig(**values)
    except (RolloutError, TypeError) as exc:
        raise ApiError(400, str(exc))


class Session:
    """One rollout with its inputs and edit history.

    Inputs are recorded as an ordered, chunk-stamped log so a restored
    session replays exactly: mid-rollout edits (camera replacement, added
    trajectories) re-apply at the same chunk boundaries they originally hit.
    """

    def __init__(self, session_id: str, cfg: RolloutConfig, root: str):
        self.id = session_id
        self.cfg = cfg
        self.root = root
        self.lock = threading.Lock()
        self.scene_record = None
        self.camera_records = None  # latest accepted script
        self.trajectory_records: list = []  # raw records accepted before the engine exists
        self.input_log: list[dict] = []  # [{kind, chunk, payload}, ...] in arrival order
        self.engine: RolloutSession | None = None
        self.chunk_results: list[dict] = []  # JSON-able, one per completed chunk
        self.published: dict = {"steps": 0}  # read snapshot, swapped after each step

    # -- persistence ---------------------------------------------------------

    def persist_meta(self):
        os.makedirs(self.root, exist_ok=True)
        with open(os.path.join(self.root, "session.json"), "w") as f:
            json.dump(
                {
                    "id": self.id,
                    "config": asdict(self.cfg),
                    "steps_completed": len(self.chunk_results),
                },
                f,
                indent=1,
                sort_keys=True,
            )
        if self.scene_record is not None:
            with open(os.path.join(self.root, "scene.json"), "w") as f:
                json.dump(self.scene_record, f, indent=1, sort_keys=True)
        with open(os.path.join(self.root, "input_log.json"), "w") as f:
            json.dump(self.input_log, f, indent=1)

    @classmethod
    def restore(cls, root: str) -> "Session":
        with open(os.path.join(root, "session.json")) as f:
            meta = json.load(f)
        cfg = RolloutConfig(**meta["config"])
        s = cls(meta["id"], cfg, root)
        scene_path = os.path.join(root, "scene.json")
        if os.path.exists(scene_path):
            with open(scene_path) as f:
                s.scene_record = json.load(f)
        log_path = os.path.join(root, "input_log.json")
        log = []
        if os.path.exists(log_path):
            with open(log_path) as f:
                log = json.load(f)
        # Deterministic replay: re-apply each edit at its original chunk
        # boundary, stepping in between.
        steps = int(meta.get("steps_completed", 0))
        for k in range(steps + 1):
            for entry in log:
                if entry["chunk"] == k:
                    s._apply_input(entry["kind"], entry["payload"], record=True)
            if k < steps:
                s.step(expected_chunk=None, persist=False)
        return s

    # -- input handling ------------------------------------------------------

    def _chunk_now(self) -> int:
        return len(self.chunk_results)

    def _apply_input(self, kind: str, payload, record: bool) -> dict:
        if kind == "scene":
            result = self._apply_scene(payload)
        elif kind == "camera":
            result = self._apply_camera(payload)
        elif kind == "trajectory":
            result = self._apply_trajectory(payload)
        else:
            raise ApiError(400, f"unknown input kind {kind!r}")
        if record:
            self.input_log.append({"kind": kind, "chunk": self._chunk_now(), "payload": payload})
        return result

    def set_scene(self, record: dict) -> dict:
        result = self._apply_input("scene", record, record=True)
        self.persist_meta()
        return result

    def set_camera(self, records) -> dict:
        result = self._apply_input("camera", records, record=True)
        self.persist_meta()
        return result

    def add_trajectory(self, record: dict) -> dict:
        result = self._apply_input("trajectory", record, record=True)
        self.persist_meta()
        return result

    def _apply_scene(self, record: dict) -> dict:
        if self.engine is not None:
            raise ApiError(409, "scene cannot change after the rollout started")
        try:
            scene = scene_from_record(record)
        except (SceneError, KeyError, TypeError, ValueError) as exc:
            raise ApiError(400, f"invalid scene: {exc}")
        self.scene_record = record
        return {"ok": True, "objects": len(scene.objects)}

    def _apply_camera(self, records) -> dict:
        if isinstance(records, dict):
            records = records.get("frames", records)
        if self.scene_record is None:
            raise ApiError(400, "set the scene before the camera script")
        scene = scene_from_record(self.scene_record)
        try:
            cameras = camera_script_from_records(records, scene.width, scene.height)
        except (KeyError, TypeError, ValueError) as exc:
            raise ApiError(400, f"invalid camera script: {exc}")
        if len(cameras) < self.cfg.horizon:
            raise ApiError(
                400,
                f"camera script covers {len(cameras)} frames, horizon needs {self.cfg.horizon}",
                required_frames=self.cfg.horizon,
            )
        if self.engine is not None:
            self.engine.replace_cameras(cameras)
        self.camera_records = records
        return {"ok": True, "frames": len(cameras)}

    def _apply_trajectory(self, record: dict) -> dict:
        if self.scene_record is None or self.camera_records is None:
            raise ApiError(400, "set scene and camera before trajectories")
        try:
            traj = trajectory_from_record(record)
        except (TrajectoryError, KeyError, TypeError, ValueError) as exc:
            raise ApiError(400, f"invalid trajectory: {exc}")
        if self.engine is not None:
            try:
                object_id = self.engine.add_trajectory(traj)
            except (SelectionError, RolloutError, TrajectoryError) as exc:
                raise ApiError(400, str(exc))
        else:
            probe = self._build_engine(extra=[record])  # validates selection + bounds
            object_id = probe.tracks[traj.track_id].object_id
            self.trajectory_records.append(record)
        return {"ok": True, "track_id": traj.track_id, "object_id": object_id}

    def _build_engine(self, extra: list | None = None) -> RolloutSession:
        scene = scene_from_record(self.scene_record)
        cameras = camera_script_from_records(self.camera_records, scene.width, scene.height)
        trajs = [trajectory_from_record(r) for r in self.trajectory_records + (extra or [])]
        try:
            return RolloutSession(scene, trajs, cameras, self.cfg)
        except (SelectionError, RolloutError, TrajectoryError, SceneError) as exc:
            raise ApiError(400, str(exc))

    # -- stepping ------------------------------------------------------------

    def step(self, expected_chunk: int | None, persist: bool = True) -> dict:
        if self.scene_record is None or self.camera_records is None:
            raise ApiError(400, "session inputs incomplete: need scene and camera script")
        if expected_chunk is not None and expected_chunk < len(self.chunk_results):
            return self.chunk_results[expected_chunk]  # idempotent retry
        if self.engine is None:
            self.engine = self._build_engine()
        if expected_chunk is not None and expected_chunk != len(self.chunk_results):
            raise ApiError(
                400,
                f"chunk {expected_chunk} out of order; next chunk is {len(self.chunk_results)}",
            )
        if self.engine.done:
            return {"done": True, "chunks": len(self.chunk_results)}

        chunk = self.engine.step()
        payload = {
            "chunk": chunk.chunk,
            "frame_start": chunk.frame_start,
            "frame_end": chunk.frame_end,
            "frames": [
                f"/sessions/{self.id}/frames/{f.index}" for f in chunk.frames
            ],
            "tracks": {
                tid: [track_point_record(p) for p in seg]
                for tid, seg in chunk.track_segments.items()
            },
            "memory": chunk.memory,
            "events": [event_record(e) for e in chunk.events],
            "done": chunk.done,
        }
        self.chunk_results.append(payload)
        if persist:
            self._persist_chunk(chunk)
        self.published = self._snapshot()
        return payload

    def _persist_chunk(self, chunk) -> None:
        from .rollout import save_rollout

        save_rollout(self.engine.result(), os.path.join(self.root, "results"))
        self.persist_meta()

    def _snapshot(self) -> dict:
        engine = self.engine
        return {
            "steps": len(self.chunk_results),
            "memory_log": list(engine.memory_log) if engine else [],
            "tracks": {
                tid: [track_point_record(p) for p in ts.points]
                for tid, ts in (engine.tracks.items() if engine else [])
            },
            "selections": {tid: ts.object_id for tid, ts in (engine.tracks.items() if engine else [])},
            "events": [event_record(e) for e in (engine._events_so_far() if engine else [])],
            "generated": len(engine.frames) if engine else 0,
        }

    # -- reads ---------------------------------------------------------------

    def frame_png(self, t: int) -> bytes:
        if self.engine is None or t >= len(self.engine.frames):
            raise ApiError(404, f"frame {t} not generated yet")
        return encode_png(self.engine.frames[t].image)

    def metrics_report(self) -> dict:
        if self.engine is None or not self.engine.frames:
            raise ApiError(400, "no frames generated yet")
        engine = self.engine
        report = MetricReport(frames=len(engine.frames))
        tes = []
        covis = 0
        for tid, ts in engine.tracks.items():
            tracked = engine_rendered_track(engine, ts.object_id)
            target = [(p.t, p.pixel if p.visible else None) for p in ts.points]
            try:
                tes.append(trajectory_error(tracked, target))
                covis += sum(1 for _, p in tracked if p is not None)
            except MetricUndefinedError:
                pass
        report.te = float(np.mean(tes)) if tes else None
        report.covisible = covis

        executed = PoseTrajectory(
            [(t, engine.cameras[t].e) for t in range(len(engine.frames))], source="estimated"
        )
        script = PoseTrajectory(
            [(t, engine.cameras[t].e) for t in range(len(engine.frames))], source="ground_truth"
        )
        try:
            report.rpe_rot, report.rpe_trans, report.rpe_cam = rpe(executed, script)
        except (DegenerateGeometryError, ValueError):
            pass

        # Fidelity against a deterministic re-render of the last frame.
        last = engine.frames[-1]
        rerender = render(engine.scene, engine.states[last.index], engine.cameras[last.index], index=last.index)
        p, s = psnr_ssim(last.image, rerender.image)
        report.psnr = p
        report.ssim = s
        out = asdict(report)
        if out["psnr"] == math.inf:
            out["psnr"] = "inf"
        return out


def engine_rendered_track(engine: RolloutSession, object_id: str):
    from .worldsim import ground_truth_track

    return ground_truth_track(engine.frames, object_id)


class SessionStore:
    def __init__(self, data_dir: str, defaults: RolloutConfig | None = None):
        self.data_dir = data_dir
        self.defaults = defaults or RolloutConfig()
        self.sessions: dict[str, Session] = {}
        self.lock = threading.Lock()
        os.makedirs(os.path.join(data_dir, "sessions"), exist_ok=True)

    def create(self, overrides: dict) -> Session:
        cfg = config_from_overrides(overrides, self.defaults)
        session_id = uuid.uuid4().hex[:12]
        root = os.path.join(self.data_dir, "sessions", session_id)
        session = Session(session_id, cfg, root)
        session.persist_meta()
        with self.lock:
            self.sessions[session_id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self.lock:
            if session_id in self.sessions:
                return self.sessions[session_id]
        root = os.path.join(self.data_dir, "sessions", session_id)
        if os.path.exists(os.path.join(root, "session.json")):
            session = Session.restore(root)
            with self.lock:
                self.sessions.setdefault(session_id, session)
                return self.sessions[session_id]
        raise ApiError(404, f"unknown session {session_id!r}")

    def flush_all(self) -> None:
        with self.lock:
            for s in self.sessions.values():
                s.persist_meta()


_ROUTES = [
    ("POST", re.compile(r"^/sessions$"), "create_session"),
    ("POST", re.compile(r"^/sessions/(?P<sid>[0-9a-f]+)/scene$"), "set_scene"),
    ("POST", re.compile(r"^/sessions/(?P<sid>[0-9a-f]+)/camera$"), "set_camera"),
    ("POST", re.compile(r"^/sessions/(?P<sid>[0-9a-f]+)/trajectory$"), "add_trajectory"),
    ("POST", re.compile(r"^/sessions/(?P<sid>[0-9a-f]+)/step$"), "step"),
    ("GET", re.compile(r"^/sessions/(?P<sid>[0-9a-f]+)/memory$"), "get_memory"),
    ("GET", re.compile(r"^/sessions/(?P<sid>[0-9a-f]+)/tracks$"), "get_tracks"),
    ("GET", re.compile(r"^/sessions/(?P<sid>[0-9a-f]+)/events$"), "get_events"),
    ("GET", re.compile(r"^/sessions/(?P<sid>[0-9a-f]+)/metrics$"), "get_metrics"),
    ("GET", re.compile(r"^/sessions/(?P<sid>[0-9a-f]+)/frames/(?P<t>\d+)$"), "get_frame"),
    ("GET", re.compile(r"^/healthz$"), "healthz"),
]


class _Handler(BaseHTTPRequestHandler):
    store: SessionStore  # injected by make_server

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, status: int, payload) -> None:
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self):
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        raw = self.rfile.read(length)
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ApiError(400, f"invalid JSON body: {exc}")

    def _dispatch(self, method: str) -> None:
        for verb, pattern, name in _ROUTES:
            if verb != method:
                continue
            m = pattern.match(self.path)
            if m:
                try:
                    getattr(self, "handle_" + name)(**m.groupdict())
                except ApiError as exc:
                    self._send_json(exc.status, exc.body)
                except BrokenPipeError:
                    pass
                except Exception as exc:  # internal error surface
                    self._send_json(500, {"error": f"internal: {exc}"})
                return
        self._send_json(404, {"error": f"no route for {method} {self.path}"})

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    # -- handlers ------------------------------------------------------------

    def handle_healthz(self):
        self._send_json(200, {"status": "ok"})

    def handle_create_session(self):
        body = self._read_body()
        session = self.store.create(body if isinstance(body, dict) else {})
        self._send_json(200, {"id": session.id, "config": asdict(session.cfg)})

    def _locked_mutation(self, sid: str, fn):
        session = self.store.get(sid)
        if not session.lock.acquire(blocking=False):
            raise ApiError(409, "a step is in flight for this session")
        try:
            return fn(session)
        finally:
            session.lock.release()

    def handle_set_scene(self, sid):
        self._send_json(200, self._locked_mutation(sid, lambda s: s.set_scene(self._read_body())))

    def handle_set_camera(self, sid):
        self._send_json(200, self._locked_mutation(sid, lambda s: s.set_camera(self._read_body())))

    def handle_add_trajectory(self, sid):
        self._send_json(200, self._locked_mutation(sid, lambda s: s.add_trajectory(self._read_body())))

    def handle_step(self, sid):
        body = self._read_body()
        expected = body.get("chunk") if isinstance(body, dict) else None
        if expected is not None and not isinstance(expected, int):
            raise ApiError(400, "chunk must be an integer")
        self._send_json(200, self._locked_mutation(sid, lambda s: s.step(expected)))

    def handle_get_memory(self, sid):
        session = self.store.get(sid)
        self._send_json(200, {"chunks": session.published.get("memory_log", [])})

    def handle_get_tracks(self, sid):
        session = self.store.get(sid)
        snap = session.published
        self._send_json(
            200,
            {"tracks": snap.get("tracks", {}), "selections": snap.get("selections", {})},
        )

    def handle_get_events(self, sid):
        session = self.store.get(sid)
        self._send_json(200, {"events": session.published.get("events", [])})

    def handle_get_metrics(self, sid):
        session = self.store.get(sid)
        with session.lock:
            self._send_json(200, session.metrics_report())

    def handle_get_frame(self, sid, t):
        session = self.store.get(sid)
        png = session.frame_png(int(t))
        self.send_response(200)
        self.send_header("Content-Type", "image/png")
        self.send_header("Content-Length", str(len(png)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(png)


def make_server(data_dir: str, port: int = 0, defaults: RolloutConfig | None = None) -> ThreadingHTTPServer:
    store = SessionStore(data_dir, defaults)
    handler = type("Handler", (_Handler,), {"store": store})
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    server.store = store  # type: ignore[attr-defined]
    return server


def serve_forever(data_dir: str, port: int, defaults: RolloutConfig | None = None) -> None:
    server = make_server(data_dir, port, defaults)
    bound = server.server_address[1]
    print(f"serving on http://127.0.0.1:{bound} (data dir {data_dir})", flush=True)
    import signal

    def _term(_sig, _frm):
        server.store.flush_all()  # type: ignore[attr-defined]
        raise SystemExit(0)

    signal.signal(signal.SIGTERM, _term)
    try:
        server.serve_forever()
    except (KeyboardInterrupt, SystemExit):
        server.store.flush_all()  # type: ignore[attr-defined]
        server.server_close()
