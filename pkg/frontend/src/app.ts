// Browser shell: sketch on the frame, build a camera script from presets,
// step the rollout chunk by chunk, and inspect the memory timeline. All
// displayed geometry comes from the service; this file only wires DOM.

import { SessionClient, healthz } from "./api";
import { CameraScriptBuilder, intrinsicsMatrix, panAwayAndBack } from "./cameraScript";
import { diffTimelines, excludedFrames, latestTimeline } from "./memoryPanel";
import { overlayAnchoredTrack, type PathSink } from "./overlay";
import { beginStroke, emptySketch, extendStroke, sketchToTrajectory, type SketchState } from "./sketch";
import type { MemoryChunkRecord, SceneRecord, TrackPointRecord } from "./types";

const FPS = 24;

class CanvasSink implements PathSink {
  constructor(private readonly ctx: CanvasRenderingContext2D) {}

  beginPath(color: string): void {
    this.ctx.beginPath();
    this.ctx.strokeStyle = color;
    this.ctx.lineWidth = 1.5;
  }

  moveTo(x: number, y: number): void {
    this.ctx.moveTo(x, y);
  }

  lineTo(x: number, y: number): void {
    this.ctx.lineTo(x, y);
  }

  stroke(): void {
    this.ctx.stroke();
  }

  marker(x: number, y: number, kind: "start" | "end"): void {
    this.ctx.fillStyle = kind === "start" ? "#06d6a0" : "#ef476f";
    this.ctx.beginPath();
    this.ctx.arc(x, y, 3, 0, 2 * Math.PI);
    this.ctx.fill();
  }

  edgeArrow(side: "left" | "right" | "top" | "bottom", at: number): void {
    const { canvas } = this.ctx;
    const m = 6;
    const pos: Record<string, [number, number]> = {
      left: [m, at],
      right: [canvas.width - m, at],
      top: [at, m],
      bottom: [at, canvas.height - m],
    };
    const [x, y] = pos[side]!;
    this.ctx.fillStyle = "#ffd166";
    this.ctx.beginPath();
    this.ctx.arc(x, y, 2.5, 0, 2 * Math.PI);
    this.ctx.fill();
  }
}

interface AppState {
  session: SessionClient | null;
  twin: SessionClient | null; // persistence-off shadow for the comparison view
  sketch: SketchState;
  drawing: boolean;
  scene: SceneRecord;
  horizon: number;
  chunkSize: number;
  lastFrame: number;
  tracks: Record<string, TrackPointRecord[]>;
  memory: MemoryChunkRecord[];
  twinMemory: MemoryChunkRecord[];
}

function defaultScene(): SceneRecord {
  return {
    frame: [256, 256],
    background: { seed: 1, depth: 10.0 },
    objects: [{ id: "obj", pos: [0, 0, 4], half_extent: 0.25, texture_seed: 7 }],
  };
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

export function startApp(baseUrl: string): void {
  const state: AppState = {
    session: null,
    twin: null,
    sketch: emptySketch(),
    drawing: false,
    scene: defaultScene(),
    horizon: 32,
    chunkSize: 8,
    lastFrame: -1,
    tracks: {},
    memory: [],
    twinMemory: [],
  };

  const canvas = el<HTMLCanvasElement>("frame-canvas");
  const ctx = canvas.getContext("2d")!;
  const status = el<HTMLDivElement>("status");
  const timeline = el<HTMLDivElement>("memory-timeline");
  const stepBtn = el<HTMLButtonElement>("step-btn");
  const newBtn = el<HTMLButtonElement>("new-session-btn");
  const toggle = el<HTMLInputElement>("persistence-toggle");
  const presetSelect = el<HTMLSelectElement>("camera-preset");

  function say(text: string): void {
    status.textContent = text;
  }

  function buildCameraScript(): ReturnType<CameraScriptBuilder["compile"]> {
    const [w, h] = state.scene.frame;
    const k9 = intrinsicsMatrix(w, h);
    const preset = presetSelect.value;
    if (preset === "pan-away") {
      return panAwayAndBack(state.horizon, k9);
    }
    const builder = new CameraScriptBuilder(state.horizon, k9);
    if (preset === "orbit") {
      builder.orbit([0, 0, 4], 30, state.horizon);
    } else if (preset === "dolly") {
      builder.dolly(1.0, state.horizon);
    } else {
      builder.hold(state.horizon);
    }
    return builder.compile();
  }

  async function refreshFrame(): Promise<void> {
    if (!state.session || state.lastFrame < 0) {
      return;
    }
    const img = new Image();
    img.onload = () => {
      ctx.drawImage(img, 0, 0);
      const sink = new CanvasSink(ctx);
      for (const points of Object.values(state.tracks)) {
        overlayAnchoredTrack(sink, points, {
          width: canvas.width,
          height: canvas.height,
        });
      }
    };
    img.src = state.session.frameUrl(state.lastFrame);
  }

  function renderTimeline(): void {
    const current = latestTimeline(state.memory);
    timeline.innerHTML = "";
    if (!current) {
      timeline.textContent = "memory: empty";
      return;
    }
    for (const cell of current.cells) {
      const div = document.createElement("div");
      div.className = "mem-cell " + (cell.retained ? "kept" : "masked");
      div.title = `frame ${cell.frame}: similarity ${cell.similarity.toFixed(3)}` +
        (cell.inZone ? " (pre-exit zone)" : "");
      timeline.appendChild(div);
    }
    if (state.twin) {
      const diff = diffTimelines(state.memory, state.twinMemory);
      const note = document.createElement("div");
      note.className = "mem-diff";
      note.textContent =
        `masked only with persistence: [${diff.framesOnlyMaskedInA.join(", ")}]` +
        (diff.similarityMismatch ? " (similarity mismatch!)" : "");
      timeline.appendChild(note);
    }
  }

  async function newSession(): Promise<void> {
    const overrides = {
      horizon: state.horizon,
      chunk_size: state.chunkSize,
      refine_depth: false,
    };
    state.session = await SessionClient.create(baseUrl, { ...overrides, state_persistence: true });
    state.twin = toggle.checked
      ? await SessionClient.create(baseUrl, { ...overrides, state_persistence: false })
      : null;
    const script = buildCameraScript();
    for (const client of [state.session, state.twin]) {
      if (!client) continue;
      await client.setScene(state.scene);
      await client.setCamera(script);
    }
    state.tracks = {};
    state.memory = [];
    state.twinMemory = [];
    state.lastFrame = -1;
    say(`session ${state.session.id} ready; click the object and drag a path`);
  }

  async function submitSketch(): Promise<void> {
    if (!state.session || state.sketch.polyline.length < 2) {
      return;
    }
    try {
      const traj = sketchToTrajectory(state.sketch, FPS);
      const result = await state.session.addTrajectory(traj);
      if (state.twin) {
        await state.twin.addTrajectory(traj);
      }
      say(`trajectory bound to ${result.object_id}`);
    } catch (err) {
      say(String(err));
    }
    state.sketch = emptySketch();
  }

  async function step(): Promise<void> {
    if (!state.session) {
      return;
    }
    stepBtn.disabled = true;
    try {
      const result = await state.session.step();
      if (state.twin) {
        await state.twin.step();
        state.twinMemory = (await state.twin.memory()).chunks;
      }
      if (result.done && result.chunk === undefined) {
        say("rollout complete");
        return;
      }
      state.lastFrame = (result.frame_end ?? 1) - 1;
      const tracks = await state.session.tracks();
      state.tracks = tracks.tracks;
      state.memory = (await state.session.memory()).chunks;
      await refreshFrame();
      renderTimeline();
      say(
        `chunk ${result.chunk}: frames [${result.frame_start}, ${result.frame_end})` +
          (result.done ? " (done)" : ""),
      );
    } finally {
      stepBtn.disabled = false;
    }
  }

  canvas.addEventListener("pointerdown", (ev) => {
    const rect = canvas.getBoundingClientRect();
    state.sketch = beginStroke(
      state.sketch,
      ev.clientX - rect.left,
      ev.clientY - rect.top,
      performance.now(),
    );
    state.drawing = true;
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!state.drawing) {
      return;
    }
    const rect = canvas.getBoundingClientRect();
    state.sketch = extendStroke(
      state.sketch,
      ev.clientX - rect.left,
      ev.clientY - rect.top,
      performance.now(),
    );
  });
  canvas.addEventListener("pointerup", () => {
    state.drawing = false;
    void submitSketch();
  });

  stepBtn.addEventListener("click", () => void step());
  newBtn.addEventListener("click", () => void newSession());
  toggle.addEventListener("change", () => void newSession());

  void healthz(baseUrl).then((ok) => {
    say(ok ? "service reachable; create a session to begin" : `service not reachable at ${baseUrl}`);
  });
}

declare global {
  interface Window {
    startApp: typeof startApp;
  }
}

if (typeof window !== "undefined") {
  window.startApp = startApp;
}
