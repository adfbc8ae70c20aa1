// Wire types mirroring the session service JSON. The frontend displays what
// the service returns; it never recomputes geometry on its own.

export interface SessionConfig {
  horizon: number;
  chunk_size: number;
  state_persistence: boolean;
  refine_depth: boolean;
  tau: number;
  preexit_k: number;
  sigma_c: number;
  cell_size: number;
  seed: number;
  [key: string]: unknown;
}

export interface SessionCreated {
  id: string;
  config: SessionConfig;
}

export interface SceneObjectRecord {
  id: string;
  pos: [number, number, number];
  half_extent: number;
  texture_seed: number;
}

export interface SceneRecord {
  frame: [number, number];
  background: { seed: number; depth: number };
  objects: SceneObjectRecord[];
}

export interface CameraFrameRecord {
  frame: number;
  K: number[]; // 9 numbers, row-major
  E: number[]; // 16 numbers, row-major world-to-camera
}

export interface TrajectoryRecord {
  track_id: string;
  click: [number, number];
  points: Array<[number, number, number]>; // [t, x, y]
}

export interface TrackPointRecord {
  t: number;
  pixel: [number, number] | null;
  depth: number;
  visible: boolean;
}

export interface OffscreenEventRecord {
  track_id: string;
  t0: number;
  t1: number | null;
}

export interface MemoryEntryRecord {
  frame: number;
  similarity: number;
  in_preexit_zone: boolean;
  retained: boolean;
}

export interface MemoryChunkRecord {
  chunk: number;
  frame_start: number;
  frame_end: number;
  current_pose_frame: number;
  entries: MemoryEntryRecord[];
}

export interface StepResult {
  chunk?: number;
  frame_start?: number;
  frame_end?: number;
  frames?: string[];
  tracks?: Record<string, TrackPointRecord[]>;
  memory?: MemoryChunkRecord;
  events?: OffscreenEventRecord[];
  done: boolean;
  chunks?: number;
}

export interface TracksResponse {
  tracks: Record<string, TrackPointRecord[]>;
  selections: Record<string, string>;
}

export interface MemoryResponse {
  chunks: MemoryChunkRecord[];
}

export interface EventsResponse {
  events: OffscreenEventRecord[];
}

export interface MetricsResponse {
  te: number | null;
  rpe_rot: number | null;
  rpe_trans: number | null;
  rpe_cam: number | null;
  psnr: number | string | null;
  ssim: number | null;
  frames: number;
  covisible: number;
}
