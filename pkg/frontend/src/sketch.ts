// Sketch capture and conversion into the service's trajectory JSON.
//
// The user clicks to select an object, then drags a path. The polyline is
// resampled by arc length to one point per frame over the sketch duration,
// which is exactly the shape the service validator expects.

import type { TrajectoryRecord } from "./types";

export interface SketchSample {
  x: number;
  y: number;
  timeMs: number;
}

export interface SketchState {
  click: [number, number] | null;
  polyline: SketchSample[];
  selectedObject: string | null;
}

export class SketchError extends Error {}

export function emptySketch(): SketchState {
  return { click: null, polyline: [], selectedObject: null };
}

export function beginStroke(state: SketchState, x: number, y: number, timeMs: number): SketchState {
  return { ...state, click: [x, y], polyline: [{ x, y, timeMs }] };
}

export function extendStroke(state: SketchState, x: number, y: number, timeMs: number): SketchState {
  if (!state.click) {
    return state;
  }
  return { ...state, polyline: [...state.polyline, { x, y, timeMs }] };
}

function cumulativeLengths(points: SketchSample[]): number[] {
  const lengths = [0];
  for (let i = 1; i < points.length; i++) {
    const a = points[i - 1]!;
    const b = points[i]!;
    lengths.push(lengths[i - 1]! + Math.hypot(b.x - a.x, b.y - a.y));
  }
  return lengths;
}

/** Resample the stroke at a target arc position via linear interpolation. */
function sampleAt(points: SketchSample[], lengths: number[], s: number): [number, number] {
  if (s <= 0) {
    return [points[0]!.x, points[0]!.y];
  }
  const total = lengths[lengths.length - 1]!;
  if (s >= total) {
    const last = points[points.length - 1]!;
    return [last.x, last.y];
  }
  let idx = 1;
  while (lengths[idx]! < s) {
    idx++;
  }
  const span = lengths[idx]! - lengths[idx - 1]!;
  const u = span > 0 ? (s - lengths[idx - 1]!) / span : 0;
  const a = points[idx - 1]!;
  const b = points[idx]!;
  return [a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)];
}

/**
 * Convert a finished sketch into trajectory JSON: one point per frame over
 * the stroke duration, uniformly spaced along the stroke's arc length.
 */
export function sketchToTrajectory(
  state: SketchState,
  fps: number,
  trackId = "sketch",
): TrajectoryRecord {
  if (!state.click || state.polyline.length < 2) {
    throw new SketchError("sketch needs at least two points; keep drawing");
  }
  const points = state.polyline;
  const durationMs = points[points.length - 1]!.timeMs - points[0]!.timeMs;
  const frames = Math.max(2, Math.round((durationMs / 1000) * fps));
  const lengths = cumulativeLengths(points);
  const total = lengths[lengths.length - 1]!;
  const out: Array<[number, number, number]> = [];
  for (let i = 0; i < frames; i++) {
    const s = (total * i) / (frames - 1);
    const [x, y] = sampleAt(points, lengths, s);
    out.push([i, x, y]);
  }
  return { track_id: trackId, click: state.click, points: out };
}
