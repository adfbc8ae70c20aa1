// Anchored-track overlay. The service already returns screen-space pixels;
// the overlay forwards them to the drawing sink verbatim (no scaling, no
// rounding, no coordinate transformation), so what is drawn is exactly what
// the backend computed.

import type { OffscreenEventRecord, TrackPointRecord } from "./types";

export interface PathSink {
  beginPath(color: string): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
  marker(x: number, y: number, kind: "start" | "end"): void;
  edgeArrow(side: "left" | "right" | "top" | "bottom", at: number): void;
}

export interface OverlayOptions {
  width: number;
  height: number;
  color?: string;
}

/** Which frame edge an off-screen position exited through. */
export function exitSide(
  pixel: [number, number],
  width: number,
  height: number,
): "left" | "right" | "top" | "bottom" {
  const [x, y] = pixel;
  const overshootX = x < 0 ? -x : x >= width ? x - width : 0;
  const overshootY = y < 0 ? -y : y >= height ? y - height : 0;
  if (overshootX >= overshootY) {
    return x < 0 ? "left" : "right";
  }
  return y < 0 ? "top" : "bottom";
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, v));
}

/**
 * Draw one track's visible path segments plus edge indicators for the
 * off-screen stretches. Returns the number of drawn vertices (0 = no layer).
 */
export function overlayAnchoredTrack(
  sink: PathSink,
  points: TrackPointRecord[],
  options: OverlayOptions,
): number {
  const visible = points.filter((p) => p.visible && p.pixel !== null);
  if (points.length === 0 || visible.length === 0) {
    return 0;
  }
  const color = options.color ?? "#ffd166";

  sink.beginPath(color);
  let drawn = 0;
  let penDown = false;
  for (const p of points) {
    if (p.visible && p.pixel) {
      const [x, y] = p.pixel;
      if (penDown) {
        sink.lineTo(x, y);
      } else {
        sink.moveTo(x, y);
        penDown = true;
      }
      drawn++;
    } else {
      penDown = false; // off-screen gap breaks the polyline
    }
  }
  sink.stroke();

  const first = visible[0]!;
  const last = visible[visible.length - 1]!;
  sink.marker(first.pixel![0], first.pixel![1], "start");
  sink.marker(last.pixel![0], last.pixel![1], "end");

  for (const p of points) {
    if (!p.visible && p.pixel) {
      const side = exitSide(p.pixel, options.width, options.height);
      const at =
        side === "left" || side === "right"
          ? clamp(p.pixel[1], 0, options.height - 1)
          : clamp(p.pixel[0], 0, options.width - 1);
      sink.edgeArrow(side, at);
    }
  }
  return drawn;
}

/** Edge arrows limited to a known camera-away interval. */
export function overlayEventArrows(
  sink: PathSink,
  points: TrackPointRecord[],
  event: OffscreenEventRecord,
  options: OverlayOptions,
): number {
  let count = 0;
  for (const p of points) {
    const inEvent = p.t >= event.t0 && (event.t1 === null || p.t < event.t1);
    if (inEvent && p.pixel) {
      const side = exitSide(p.pixel, options.width, options.height);
      const at =
        side === "left" || side === "right"
          ? clamp(p.pixel[1], 0, options.height - 1)
          : clamp(p.pixel[0], 0, options.width - 1);
      sink.edgeArrow(side, at);
      count++;
    }
  }
  return count;
}

/** Recording sink used by tests and headless rendering. */
export class RecordingSink implements PathSink {
  readonly ops: Array<Record<string, unknown>> = [];

  beginPath(color: string): void {
    this.ops.push({ op: "beginPath", color });
  }

  moveTo(x: number, y: number): void {
    this.ops.push({ op: "moveTo", x, y });
  }

  lineTo(x: number, y: number): void {
    this.ops.push({ op: "lineTo", x, y });
  }

  stroke(): void {
    this.ops.push({ op: "stroke" });
  }

  marker(x: number, y: number, kind: "start" | "end"): void {
    this.ops.push({ op: "marker", x, y, kind });
  }

  edgeArrow(side: string, at: number): void {
    this.ops.push({ op: "edgeArrow", side, at });
  }

  vertices(): Array<[number, number]> {
    return this.ops
      .filter((o) => o.op === "moveTo" || o.op === "lineTo")
      .map((o) => [o.x as number, o.y as number]);
  }
}
