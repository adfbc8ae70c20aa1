import { describe, expect, it } from "vitest";

import { diffTimelines, excludedFrames, latestTimeline } from "../src/memoryPanel";
import type { MemoryChunkRecord } from "../src/types";

function chunk(n: number, entries: Array<[number, number, boolean, boolean]>): MemoryChunkRecord {
  return {
    chunk: n,
    frame_start: n * 8,
    frame_end: (n + 1) * 8,
    current_pose_frame: n * 8,
    entries: entries.map(([frame, similarity, inZone, retained]) => ({
      frame,
      similarity,
      in_preexit_zone: inZone,
      retained,
    })),
  };
}

describe("latestTimeline", () => {
  it("is null with no chunks", () => {
    expect(latestTimeline([])).toBeNull();
  });

  it("reflects the newest chunk's mask", () => {
    const chunks = [
      chunk(0, []),
      chunk(1, [
        [0, 1.0, false, true],
        [7, 0.99, true, false],
      ]),
    ];
    const timeline = latestTimeline(chunks)!;
    expect(timeline.chunk).toBe(1);
    expect(timeline.cells.map((c) => c.retained)).toEqual([true, false]);
  });
});

describe("diffTimelines", () => {
  it("no exclusions on either side yields an empty diff", () => {
    const a = [chunk(0, [[0, 1.0, false, true]])];
    const b = [chunk(0, [[0, 1.0, false, true]])];
    const diff = diffTimelines(a, b);
    expect(diff.framesOnlyMaskedInA).toEqual([]);
    expect(diff.framesOnlyMaskedInB).toEqual([]);
    expect(diff.similarityMismatch).toBe(false);
  });

  it("persistence toggle shows up as exactly the excluded-frame set", () => {
    const on = [
      chunk(3, [
        [7, 1.0, true, false],
        [8, 0.97, true, false],
        [9, 0.8, false, true],
      ]),
    ];
    const off = [
      chunk(3, [
        [7, 1.0, true, true],
        [8, 0.97, true, true],
        [9, 0.8, false, true],
      ]),
    ];
    const diff = diffTimelines(on, off);
    expect(diff.framesOnlyMaskedInA).toEqual(excludedFrames(on));
    expect(diff.framesOnlyMaskedInA).toEqual([7, 8]);
    expect(diff.framesOnlyMaskedInB).toEqual([]);
    expect(diff.similarityMismatch).toBe(false);
  });

  it("flags similarity mismatches between sessions", () => {
    const a = [chunk(0, [[0, 1.0, false, true]])];
    const b = [chunk(0, [[0, 0.5, false, true]])];
    expect(diffTimelines(a, b).similarityMismatch).toBe(true);
  });
});
