// Memory timeline model: per-frame retained/masked status with similarity
// scores, taken verbatim from the service's memory log, plus the diff used
// by the persistence on/off side-by-side view.

import type { MemoryChunkRecord } from "./types";

export interface TimelineCell {
  frame: number;
  similarity: number;
  inZone: boolean;
  retained: boolean;
}

export interface Timeline {
  chunk: number;
  cells: TimelineCell[];
}

/** Timeline of the latest chunk's retrieval mask (what the model sees now). */
export function latestTimeline(chunks: MemoryChunkRecord[]): Timeline | null {
  if (chunks.length === 0) {
    return null;
  }
  const last = chunks[chunks.length - 1]!;
  return {
    chunk: last.chunk,
    cells: last.entries.map((e) => ({
      frame: e.frame,
      similarity: e.similarity,
      inZone: e.in_preexit_zone,
      retained: e.retained,
    })),
  };
}

/** Every frame ever masked over the whole rollout, in order. */
export function excludedFrames(chunks: MemoryChunkRecord[]): number[] {
  const out = new Set<number>();
  for (const chunk of chunks) {
    for (const e of chunk.entries) {
      if (!e.retained) {
        out.add(e.frame);
      }
    }
  }
  return [...out].sort((a, b) => a - b);
}

export interface TimelineDiff {
  framesOnlyMaskedInA: number[];
  framesOnlyMaskedInB: number[];
  similarityMismatch: boolean;
}

/**
 * Compare two sessions' memory logs (e.g. persistence on vs off). For a pure
 * persistence toggle the similarities must agree everywhere and the diff is
 * exactly the excluded-frame set of the filtering session.
 */
export function diffTimelines(a: MemoryChunkRecord[], b: MemoryChunkRecord[]): TimelineDiff {
  const maskedA = new Set(excludedFrames(a));
  const maskedB = new Set(excludedFrames(b));
  let similarityMismatch = false;
  const byChunkB = new Map(b.map((c) => [c.chunk, c]));
  for (const chunkA of a) {
    const chunkB = byChunkB.get(chunkA.chunk);
    if (!chunkB || chunkB.entries.length !== chunkA.entries.length) {
      similarityMismatch = true;
      continue;
    }
    for (let i = 0; i < chunkA.entries.length; i++) {
      if (chunkA.entries[i]!.similarity !== chunkB.entries[i]!.similarity) {
        similarityMismatch = true;
      }
    }
  }
  return {
    framesOnlyMaskedInA: [...maskedA].filter((f) => !maskedB.has(f)).sort((x, y) => x - y),
    framesOnlyMaskedInB: [...maskedB].filter((f) => !maskedA.has(f)).sort((x, y) => x - y),
    similarityMismatch,
  };
}
