"""Batch command-line entry points.

Subcommands: eval-traj, eval-camera, curate, adapter, serve, demo. Every
batch run writes a manifest (command, config, input hashes, outputs, seed,
wall time) next to its outputs. Exit codes: 0 success, 1 metric undefined,
2 input error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, fields

import numpy as np

from . import adapter as adapter_mod
from . import curation
from . import metrics
from .geometry import (
    DegenerateGeometryError,
    Extrinsics,
    GeometryError,
    load_camera_script,
    rot_y,
)
from .rollout import RolloutConfig, RolloutError, run_rollout, save_rollout, reentry_position
from .trajectory import TrajectoryError, lift_trajectory, load_trajectory, reproject_track
from .worldsim import SceneError, load_scene
from .service import serve_forever

EXIT_OK = 0
EXIT_METRIC_UNDEFINED = 1
EXIT_INPUT_ERROR = 2
EXIT_INTERNAL = 3

INPUT_ERRORS = (
    FileNotFoundError,
    IsADirectoryError,
    json.JSONDecodeError,
    SceneError,
    TrajectoryError,
    GeometryError,
    RolloutError,
    curation.CurationError,
    adapter_mod.AdapterError,
    KeyError,
)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(65536), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir, command: str, config: dict, inputs: list, outputs: list, seed: int, wall: float):
    manifest = {
        "command": command,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs if os.path.isfile(str(p))},
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "wall_time_s": wall,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return path


def _load_config_overrides(args) -> dict:
    """Global --config file: RolloutConfig field defaults, overridden by flags."""
    if not getattr(args, "config", None):
        return {}
    with open(args.config) as f:
        overrides = json.load(f)
    valid = {f.name for f in fields(RolloutConfig)}
    unknown = set(overrides) - valid
    if unknown:
        raise RolloutError(f"unknown config fields in {args.config}: {sorted(unknown)}")
    return overrides


def _repr_config(repr_mode: str, args) -> RolloutConfig:
    base = _load_config_overrides(args)
    base.update(
        horizon=args.horizon,
        chunk_size=args.chunk_size,
        depth_bias=args.depth_bias,
        depth_noise_sigma=args.depth_noise,
        seed=args.seed,
    )
    base.pop("conditioning", None)
    base.pop("refine_depth", None)
    if repr_mode == "pixel":
        return RolloutConfig(conditioning="pixel", refine_depth=False, **base)
    if repr_mode == "world":
        return RolloutConfig(conditioning="world", refine_depth=False, **base)
    if repr_mode == "world-iter":
        return RolloutConfig(conditioning="world", refine_depth=True, **base)
    raise TrajectoryError(f"unknown representation {repr_mode!r}")


def cmd_eval_traj(args) -> int:
    scene = load_scene(args.scene)
    cameras = load_camera_script(args.camera, scene.width, scene.height)
    traj = load_trajectory(args.trajectory)
    if args.horizon is None:
        args.horizon = len(cameras)
    cfg = _repr_config(args.repr, args)

    t_start = time.monotonic()
    result = run_rollout(scene, [traj], cameras, cfg)
    object_id = result.selections[traj.track_id]
    d_true = float(cameras[0].e.apply(scene.object_by_id(object_id).position)[2])
    wt_true = lift_trajectory(traj, cameras[0].k, d_true, cameras[0].e)
    target_track = reproject_track(wt_true, cameras, cfg.horizon)
    target = [(p.t, p.pixel if p.visible else None) for p in target_track.positions]
    tracked = result.rendered_track(object_id)
    te = metrics.trajectory_error(tracked, target)

    rot_deg = metrics.total_camera_rotation_deg([c.e for c in cameras[: cfg.horizon]])
    bucket = metrics.rotation_bucket(rot_deg)
    wall = time.monotonic() - t_start

    os.makedirs(args.out, exist_ok=True)
    rollout_dir = os.path.join(args.out, "rollout")
    save_rollout(result, rollout_dir)
    report = {
        "te": te,
        "repr": args.repr,
        "rot_bucket": bucket,
        "total_rotation_deg": rot_deg,
        "frames": cfg.horizon,
        "object_id": object_id,
    }
    report_path = os.path.join(args.out, "metrics.json")
    with open(report_path, "w") as f:
        json.dump(report, f, indent=1, sort_keys=True)
    csv_path = os.path.join(args.out, "te.csv")
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["clip_id", "repr", "rot_bucket", "total_rotation_deg", "te", "frames"])
        w.writerow([args.clip_id, args.repr, bucket, f"{rot_deg:.6f}", f"{te:.6f}", cfg.horizon])
    write_manifest(
        args.out, "eval-traj", asdict(cfg), [args.scene, args.camera, args.trajectory],
        [rollout_dir, report_path, csv_path], args.seed, wall,
    )
    print(f"eval-traj: repr={args.repr} bucket={bucket} TE={te:.4f}px")
    return EXIT_OK


def _perturb_poses(poses, noise_sigma: float, drift_rate: float, sim3_spec, seed: int):
    rng = np.random.default_rng(seed)
    out = []
    drift = 0.0
    for cam in poses:
        e = cam.e
        r, c = e.rotation, e.camera_center
        if drift_rate:
            drift += drift_rate
            r = r @ rot_y(drift)
        if noise_sigma:
            axis_angle = rng.standard_normal(3)
            n = np.linalg.norm(axis_angle)
            angle = rng.normal(0.0, noise_sigma)
            if n > 0:
                from math import cos, sin

                k = axis_angle / n
                kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
                r = r @ (np.eye(3) + sin(angle) * kx + (1 - cos(angle)) * kx @ kx)
            c = c + rng.normal(0.0, noise_sigma, size=3)
        if sim3_spec is not None:
            s, rg, tg = sim3_spec
            r = r @ rg
            c = (rg.T @ (c - tg)) / s
        out.append(Extrinsics(r, -r @ c))
    return out


def cmd_eval_camera(args) -> int:
    w, h = args.frame_size
    gt_cams = load_camera_script(args.camera, w, h)
    t_start = time.monotonic()
    sim3_spec = None
    if args.sim3_scale != 1.0 or args.sim3_yaw_deg != 0.0 or any(args.sim3_translate):
        sim3_spec = (
            args.sim3_scale,
            rot_y(np.radians(args.sim3_yaw_deg)),
            np.array(args.sim3_translate, dtype=float),
        )
    est_e = _perturb_poses(gt_cams, args.noise_sigma, args.drift_rate, sim3_spec, args.seed)
    gt = metrics.PoseTrajectory([(i, c.e) for i, c in enumerate(gt_cams)], source="ground_truth")
    est = metrics.PoseTrajectory([(i, e) for i, e in enumerate(est_e)], source="estimated")
    rot, trans, cam = metrics.rpe(est, gt, stride=args.stride)
    wall = time.monotonic() - t_start

    os.makedirs(args.out, exist_ok=True)
    report = {
        "rpe_rot": rot,
        "rpe_trans": trans,
        "rpe_cam": cam,
        "stride": args.stride,
        "noise_sigma": args.noise_sigma,
        "drift_rate": args.drift_rate,
        "frames": len(gt_cams),
    }
    report_path = os.path.join(args.out, "rpe.json")
    with open(report_path, "w") as f:
        json.dump(report, f, indent=1, sort_keys=True)
    write_manifest(args.out, "eval-camera", report, [args.camera], [report_path], args.seed, wall)
    print(f"eval-camera: rpe_rot={rot:.6g} rpe_trans={trans:.6g} rpe_cam={cam:.6g}")
    return EXIT_OK


def cmd_curate(args) -> int:
    t_start = time.monotonic()
    clip_dirs = sorted(
        d for d in os.listdir(args.clips) if os.path.isdir(os.path.join(args.clips, d))
    )
    if not clip_dirs:
        raise curation.CurationError(f"no clip directories under {args.clips}")
    accepted = []
    inputs = []
    for clip in clip_dirs:
        root = os.path.join(args.clips, clip)
        meta_path = os.path.join(root, "meta.json")
        comp_path = os.path.join(root, "components.json")
        masks_path = os.path.join(root, "masks.json")
        with open(meta_path) as f:
            meta = json.load(f)
        inputs.extend([meta_path, comp_path])
        components = curation.load_components(comp_path)
        masks_by_frame = None
        validity = meta.get("mask_validity")
        if os.path.exists(masks_path):
            inputs.append(masks_path)
            with open(masks_path) as f:
                mask_records = json.load(f)
            masks_by_frame = {
                int(t): curation.decode_rle_mask(rec) for t, rec in mask_records.items()
            }
            if validity is None:
                n_frames = meta["frames"]
                validity = [
                    t in masks_by_frame and bool(masks_by_frame[t].any()) for t in range(n_frames)
                ]
        sample = curation.curate_clip(
            components,
            validity,
            tuple(meta["frame"]),
            masks_by_frame=masks_by_frame,
            camera_translation=float(meta.get("camera_translation", 0.0)),
            window=args.window,
            min_displacement=args.min_displacement,
            seed=args.seed,
        )
        if sample is not None:
            sample["clip"] = clip
            accepted.append(sample)

    os.makedirs(args.out, exist_ok=True)
    manifest_path = os.path.join(args.out, "curated.json")
    with open(manifest_path, "w") as f:
        json.dump(accepted, f, indent=1, sort_keys=True)

    stats = None
    if accepted:
        stats = curation.dataset_stats(
            [(s.get("camera_translation", 0.0), s["net_displacement"]) for s in accepted]
        )
    stats_path = os.path.join(args.out, "stats.json")
    with open(stats_path, "w") as f:
        json.dump(stats, f, indent=1, sort_keys=True)
    wall = time.monotonic() - t_start
    write_manifest(
        args.out, "curate",
        {"window": args.window, "min_displacement": args.min_displacement},
        inputs, [manifest_path, stats_path], args.seed, wall,
    )
    print(f"curate: {len(accepted)}/{len(clip_dirs)} clips accepted")
    return EXIT_OK


def cmd_adapter(args) -> int:
    t_start = time.monotonic()
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    if args.base and args.ft:
        base = adapter_mod.load_weights(args.base)
        ft = adapter_mod.load_weights(args.ft)
        rows = adapter_mod.delta_rel(base, ft)
        csv_path = os.path.join(args.out, "delta_rel.csv")
        adapter_mod.write_delta_csv(csv_path, rows)
        cat_path = os.path.join(args.out, "category_means.json")
        with open(cat_path, "w") as f:
            json.dump(adapter_mod.category_means(rows), f, indent=1, sort_keys=True)
        outputs += [csv_path, cat_path]
        top = [r.name for r in rows[:5] if not r.flagged]
        print(f"adapter: top ranks {top}")
    elif args.probe:
        coupling = 0.0 if args.probe == "separable" else args.coupling
        net = adapter_mod.ToyPathwayNet(coupling=coupling, seed=args.seed)
        rng = np.random.default_rng(args.seed + 1)
        cos = adapter_mod.camera_invariance_cosine(
            net,
            rng.standard_normal(net.in_dim),
            rng.standard_normal(net.in_dim),
            rng.standard_normal(net.in_dim),
            rng.standard_normal(net.in_dim),
        )
        u, v = _pathway_updates(net, rng, samples=max(args.overlap_dims * 4, 16))
        overlap = adapter_mod.subspace_overlap(u, v, args.overlap_dims)
        report = {
            "probe": args.probe,
            "coupling": coupling,
            "camera_invariance_cosine": cos,
            "subspace_overlap": overlap,
        }
        path = os.path.join(args.out, "probe.json")
        with open(path, "w") as f:
            json.dump(report, f, indent=1, sort_keys=True)
        outputs.append(path)
        print(f"adapter: probe={args.probe} cosines={['%.3f' % c for c in cos]} overlap={overlap:.3f}")
    else:
        raise adapter_mod.AdapterError("provide --base/--ft directories or --probe")
    wall = time.monotonic() - t_start
    write_manifest(
        args.out, "adapter", {"probe": args.probe, "base": args.base, "ft": args.ft},
        [], outputs, args.seed, wall,
    )
    return EXIT_OK


def _pathway_updates(net, rng, samples: int):
    """Pose-only and trajectory-given-pose activation updates, pooled over blocks."""
    zero = np.zeros(net.in_dim)
    base = np.concatenate(net.forward(zero, zero))
    us, vs = [], []
    for _ in range(samples):
        pose = rng.standard_normal(net.in_dim)
        traj = rng.standard_normal(net.in_dim)
        h_cam = np.concatenate(net.forward(pose, zero))
        h_both = np.concatenate(net.forward(pose, traj))
        us.append(h_cam - base)
        vs.append(h_both - h_cam)
    return np.stack(us), np.stack(vs)


def cmd_serve(args) -> int:
    base = _load_config_overrides(args)
    base.update(
        horizon=args.horizon,
        chunk_size=args.chunk_size,
        tau=args.tau,
        preexit_k=args.k,
        sigma_c=args.sigma_c,
        cell_size=args.cell_size,
        seed=args.seed,
    )
    defaults = RolloutConfig(**base)
    port = args.port if args.port is not None else int(os.environ.get("WORLDTRAJ_PORT", "8080"))
    data_dir = args.data_dir or os.environ.get("WORLDTRAJ_DATA_DIR", "./worldtraj-data")
    serve_forever(data_dir, port, defaults)
    return EXIT_OK


def cmd_demo(args) -> int:
    from . import fixtures

    t_start = time.monotonic()
    scene, traj, cameras, cfg_kwargs, t1 = fixtures.pan_away_fixture()
    os.makedirs(args.out, exist_ok=True)
    summary = {}
    for label, persist in (("persistent", True), ("stale_baseline", False)):
        cfg = RolloutConfig(state_persistence=persist, refine_depth=False, seed=args.seed, **cfg_kwargs)
        result = run_rollout(scene, [traj], cameras, cfg)
        out_dir = os.path.join(args.out, label)
        save_rollout(result, out_dir)
        track = result.tracks[traj.track_id]
        closed = [e for e in result.events if e.t1 is not None]
        rendered = dict(result.rendered_track(result.selections[traj.track_id]))
        entry = {"events": [asdict_event(e) for e in result.events]}
        if closed:
            ev = closed[0]
            anchored = reentry_position(track, ev)
            seen = rendered[ev.t1]
            entry["reentry_frame"] = ev.t1
            entry["reentry_error_px"] = (
                None if seen is None else float(np.linalg.norm(seen - anchored))
            )
        excluded = [
            e["frame"]
            for chunk in result.memory_log
            for e in chunk["entries"]
            if not e["retained"]
        ]
        entry["excluded_memory_frames"] = sorted(set(excluded))
        summary[label] = entry
    path = os.path.join(args.out, "summary.json")
    with open(path, "w") as f:
        json.dump(summary, f, indent=1, sort_keys=True)
    wall = time.monotonic() - t_start
    write_manifest(args.out, "demo", cfg_kwargs, [], [path], args.seed, wall)
    print(json.dumps(summary, indent=1, sort_keys=True))
    return EXIT_OK


def asdict_event(e) -> dict:
    return {"track_id": e.track_id, "t0": e.t0, "t1": e.t1}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="worldtraj")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--config", default=None, help="JSON file of rollout-config field overrides")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval-traj", help="closed-loop trajectory-following evaluation")
    p.add_argument("--scene", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--repr", choices=["pixel", "world", "world-iter"], default="world-iter")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--chunk-size", type=int, default=16)
    p.add_argument("--depth-bias", type=float, default=0.0)
    p.add_argument("--depth-noise", type=float, default=0.0)
    p.add_argument("--clip-id", default="clip0")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_traj)

    p = sub.add_parser("eval-camera", help="relative pose error of a perturbed camera script")
    p.add_argument("--camera", required=True)
    p.add_argument("--frame-size", type=int, nargs=2, default=[256, 256])
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--drift-rate", type=float, default=0.0)
    p.add_argument("--sim3-scale", type=float, default=1.0)
    p.add_argument("--sim3-yaw-deg", type=float, default=0.0)
    p.add_argument("--sim3-translate", type=float, nargs=3, default=[0.0, 0.0, 0.0])
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_camera)

    p = sub.add_parser("curate", help="run the curation pipeline over clip directories")
    p.add_argument("--clips", required=True, help="directory of per-clip subdirectories")
    p.add_argument("--window", type=int, default=curation.DEFAULT_WINDOW)
    p.add_argument("--min-displacement", type=float, default=curation.DEFAULT_MIN_DISPLACEMENT)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("adapter", help="weight-delta ranking and pathway probes")
    p.add_argument("--base", default=None)
    p.add_argument("--ft", default=None)
    p.add_argument("--probe", choices=["separable", "coupled"], default=None)
    p.add_argument("--coupling", type=float, default=0.5)
    p.add_argument("--overlap-dims", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_adapter)

    p = sub.add_parser("serve", help="run the session HTTP service")
    p.add_argument("--port", type=int, default=None, help="default WORLDTRAJ_PORT or 8080")
    p.add_argument("--data-dir", default=None, help="default WORLDTRAJ_DATA_DIR or ./worldtraj-data")
    p.add_argument("--horizon", type=int, default=96)
    p.add_argument("--chunk-size", type=int, default=16)
    p.add_argument("--tau", type=float, default=0.9)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--sigma-c", type=float, default=1.0)
    p.add_argument("--cell-size", type=int, default=16)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("demo", help="pan-away/pan-back scenario with and without persistence")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_demo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (metrics.MetricUndefinedError, DegenerateGeometryError) as exc:
        print(f"metric undefined: {exc}", file=sys.stderr)
        return EXIT_METRIC_UNDEFINED
    except INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
