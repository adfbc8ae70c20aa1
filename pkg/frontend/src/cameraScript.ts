// Camera-action presets compiled client-side into the per-frame camera
// script the service consumes. The service stays preset-agnostic: it only
// ever sees explicit K/E records.

import type { CameraFrameRecord } from "./types";

export type CameraSegment =
  | { kind: "hold"; frames: number }
  | { kind: "pan"; degrees: number; frames: number }
  | { kind: "dolly"; distance: number; frames: number }
  | { kind: "orbit"; target: [number, number, number]; degrees: number; frames: number };

export class ScriptError extends Error {}

type Mat3 = [number, number, number, number, number, number, number, number, number];
type Vec3 = [number, number, number];

const IDENTITY: Mat3 = [1, 0, 0, 0, 1, 0, 0, 0, 1];

function matMul(a: Mat3, b: Mat3): Mat3 {
  const out = new Array(9).fill(0) as number[];
  for (let r = 0; r < 3; r++) {
    for (let c = 0; c < 3; c++) {
      let s = 0;
      for (let k = 0; k < 3; k++) {
        s += a[r * 3 + k]! * b[k * 3 + c]!;
      }
      out[r * 3 + c] = s;
    }
  }
  return out as Mat3;
}

function matVec(a: Mat3, v: Vec3): Vec3 {
  return [
    a[0] * v[0] + a[1] * v[1] + a[2] * v[2],
    a[3] * v[0] + a[4] * v[1] + a[5] * v[2],
    a[6] * v[0] + a[7] * v[1] + a[8] * v[2],
  ];
}

function transpose(a: Mat3): Mat3 {
  return [a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]];
}

/** World-to-camera rotation of a camera yawed by the given angle. */
function yawRotation(rad: number): Mat3 {
  const c = Math.cos(rad);
  const s = Math.sin(rad);
  // transpose of the world rotation about +y
  return transpose([c, 0, s, 0, 1, 0, -s, 0, c]);
}

function normalize(v: Vec3): Vec3 {
  const n = Math.hypot(v[0], v[1], v[2]);
  if (n < 1e-12) {
    throw new ScriptError("cannot normalize a zero vector");
  }
  return [v[0] / n, v[1] / n, v[2] / n];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
}

/** Camera center swung by phi radians around the target's vertical axis. */
function orbitCenter(center: Vec3, target: [number, number, number], phi: number): Vec3 {
  const dx = center[0] - target[0];
  const dz = center[2] - target[2];
  const radius = Math.hypot(dx, dz);
  const base = Math.atan2(dx, dz);
  return [
    target[0] + radius * Math.sin(base - phi),
    center[1],
    target[2] + radius * Math.cos(base - phi),
  ];
}

/** World-to-camera pose looking from center toward target, x kept level. */
function lookAt(center: Vec3, target: Vec3): { r: Mat3; t: Vec3 } {
  const fwd = normalize([target[0] - center[0], target[1] - center[1], target[2] - center[2]]);
  const right = normalize(cross([0, 1, 0], fwd));
  const down = cross(fwd, right);
  const r: Mat3 = [...right, ...down, ...fwd] as Mat3;
  const rc = matVec(r, center);
  return { r, t: [-rc[0], -rc[1], -rc[2]] };
}

export interface CameraPoseState {
  yaw: number; // radians, accumulated pan
  center: Vec3;
}

function poseRecord(frame: number, k9: number[], r: Mat3, t: Vec3): CameraFrameRecord {
  // +0 normalizes negative zeros out of the wire format.
  const e = [r[0], r[1], r[2], t[0], r[3], r[4], r[5], t[1], r[6], r[7], r[8], t[2], 0, 0, 0, 1];
  return { frame, K: [...k9], E: e.map((v) => v + 0) };
}

export function intrinsicsMatrix(width: number, height: number): number[] {
  const f = 0.9 * Math.min(width, height);
  return [f, 0, width / 2, 0, f, height / 2, 0, 0, 1];
}

export class CameraScriptBuilder {
  private readonly segments: CameraSegment[] = [];

  constructor(
    readonly horizon: number,
    readonly k9: number[],
  ) {}

  add(segment: CameraSegment): this {
    if (segment.frames < 1) {
      throw new ScriptError("segment must span at least one frame");
    }
    this.segments.push(segment);
    return this;
  }

  hold(frames: number): this {
    return this.add({ kind: "hold", frames });
  }

  pan(degrees: number, frames: number): this {
    return this.add({ kind: "pan", degrees, frames });
  }

  dolly(distance: number, frames: number): this {
    return this.add({ kind: "dolly", distance, frames });
  }

  orbit(target: [number, number, number], degrees: number, frames: number): this {
    return this.add({ kind: "orbit", target, degrees, frames });
  }

  totalFrames(): number {
    return this.segments.reduce((acc, s) => acc + s.frames, 0);
  }

  /** Compile to the per-frame script; its length must equal the horizon. */
  compile(): CameraFrameRecord[] {
    const total = this.totalFrames();
    if (total !== this.horizon) {
      throw new ScriptError(`segments cover ${total} frames but the horizon is ${this.horizon}`);
    }
    const records: CameraFrameRecord[] = [];
    const state: CameraPoseState = { yaw: 0, center: [0, 0, 0] };
    let frame = 0;
    for (const seg of this.segments) {
      for (let i = 1; i <= seg.frames; i++) {
        if (seg.kind === "pan") {
          state.yaw += ((seg.degrees / seg.frames) * Math.PI) / 180;
        } else if (seg.kind === "dolly") {
          const step = seg.distance / seg.frames;
          const fwd = matVec(transpose(yawRotation(state.yaw)), [0, 0, 1]);
          state.center = [
            state.center[0] + step * fwd[0],
            state.center[1] + step * fwd[1],
            state.center[2] + step * fwd[2],
          ];
        }
        if (seg.kind === "orbit") {
          const phi = (((seg.degrees * i) / seg.frames) * Math.PI) / 180;
          const center = orbitCenter(state.center, seg.target, phi);
          const pose = lookAt(center, seg.target);
          records.push(poseRecord(frame, this.k9, pose.r, pose.t));
          if (i === seg.frames) {
            state.center = center; // orbits move the camera; keep the end pose
          }
        } else {
          const r = yawRotation(state.yaw);
          const rc = matVec(r, state.center);
          records.push(poseRecord(frame, this.k9, r, [-rc[0], -rc[1], -rc[2]]));
        }
        frame++;
      }
    }
    return records;
  }
}

/** A pan must return where it started: cut straight back to yaw zero. */
export function panAwayAndBack(
  horizon: number,
  k9: number[],
  opts = { holdStart: 8, panFrames: 4, awayDeg: 60, holdAway: 12 },
): CameraFrameRecord[] {
  const { holdStart, panFrames, awayDeg, holdAway } = opts;
  const back = horizon - holdStart - panFrames - holdAway - 1;
  if (back < 0) {
    throw new ScriptError("horizon too short for the pan-away pattern");
  }
  return new CameraScriptBuilder(horizon, k9)
    .hold(holdStart)
    .pan(awayDeg, panFrames)
    .hold(holdAway)
    .pan(-awayDeg, 1)
    .hold(back)
    .compile();
}
