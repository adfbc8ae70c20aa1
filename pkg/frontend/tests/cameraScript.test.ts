import { describe, expect, it } from "vitest";

import { CameraScriptBuilder, ScriptError, intrinsicsMatrix, panAwayAndBack } from "../src/cameraScript";

function rotationRows(e: number[]): number[][] {
  return [
    [e[0]!, e[1]!, e[2]!],
    [e[4]!, e[5]!, e[6]!],
    [e[8]!, e[9]!, e[10]!],
  ];
}

function dot(a: number[], b: number[]): number {
  return a[0]! * b[0]! + a[1]! * b[1]! + a[2]! * b[2]!;
}

function expectValidPose(e: number[]): void {
  const rows = rotationRows(e);
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) {
      expect(dot(rows[i]!, rows[j]!)).toBeCloseTo(i === j ? 1 : 0, 9);
    }
  }
  expect(e[12]).toBe(0);
  expect(e[13]).toBe(0);
  expect(e[14]).toBe(0);
  expect(e[15]).toBe(1);
}

describe("CameraScriptBuilder", () => {
  it("compiled script length equals the horizon", () => {
    const k9 = intrinsicsMatrix(256, 256);
    const script = new CameraScriptBuilder(20, k9).hold(5).pan(30, 10).dolly(0.5, 5).compile();
    expect(script).toHaveLength(20);
    expect(script.map((r) => r.frame)).toEqual([...script.keys()]);
  });

  it("rejects segment totals that do not match the horizon", () => {
    const k9 = intrinsicsMatrix(256, 256);
    expect(() => new CameraScriptBuilder(20, k9).hold(5).compile()).toThrow(ScriptError);
  });

  it("hold emits identity poses", () => {
    const k9 = intrinsicsMatrix(128, 128);
    const script = new CameraScriptBuilder(3, k9).hold(3).compile();
    for (const rec of script) {
      expect(rec.E).toEqual([1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1]);
      expect(rec.K).toEqual(k9);
    }
  });

  it("every emitted pose is a valid rigid transform", () => {
    const k9 = intrinsicsMatrix(256, 256);
    const script = new CameraScriptBuilder(24, k9)
      .hold(4)
      .pan(45, 6)
      .dolly(1.0, 6)
      .orbit([0, 0, 4], 40, 8)
      .compile();
    for (const rec of script) {
      expectValidPose(rec.E);
    }
  });

  it("pan sweeps linearly and keeps the camera center fixed", () => {
    const k9 = intrinsicsMatrix(256, 256);
    const script = new CameraScriptBuilder(4, k9).pan(60, 4).compile();
    // yaw 15 degrees per frame; E translation stays zero while yawing in place
    for (const rec of script) {
      expect(rec.E[3]).toBe(0);
      expect(rec.E[7]).toBe(0);
      expect(rec.E[11]).toBe(0);
    }
    const last = rotationRows(script[3]!.E);
    // forward axis (third row) of a camera yawed 60 degrees: (sin60, 0, cos60)
    expect(last[2]![0]).toBeCloseTo(Math.sin(Math.PI / 3), 9);
    expect(last[2]![2]).toBeCloseTo(Math.cos(Math.PI / 3), 9);
  });

  it("pan-away preset returns exactly to the start pose", () => {
    const k9 = intrinsicsMatrix(256, 256);
    const script = panAwayAndBack(32, k9);
    expect(script).toHaveLength(32);
    const first = script[0]!.E;
    const reentry = script[24]!.E;
    for (let i = 0; i < 16; i++) {
      expect(reentry[i]).toBeCloseTo(first[i]!, 9);
    }
  });
});
