// Thin typed client over the session HTTP API.

import type {
  CameraFrameRecord,
  EventsResponse,
  MemoryResponse,
  MetricsResponse,
  SceneRecord,
  SessionConfig,
  SessionCreated,
  StepResult,
  TracksResponse,
  TrajectoryRecord,
} from "./types";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function request<T>(url: string, method: string, body?: unknown): Promise<T> {
  const resp = await fetch(url, {
    method,
    headers: body === undefined ? undefined : { "Content-Type": "application/json" },
    body: body === undefined ? undefined : JSON.stringify(body),
  });
  const text = await resp.text();
  let parsed: unknown = null;
  try {
    parsed = text ? JSON.parse(text) : null;
  } catch {
    parsed = null;
  }
  if (!resp.ok) {
    const message =
      parsed && typeof parsed === "object" && "error" in parsed
        ? String((parsed as { error: unknown }).error)
        : `${method} ${url} failed with ${resp.status}`;
    throw new ApiError(resp.status, message);
  }
  return parsed as T;
}

export class SessionClient {
  constructor(
    readonly baseUrl: string,
    readonly id: string,
  ) {}

  static async create(baseUrl: string, overrides: Partial<SessionConfig> = {}): Promise<SessionClient> {
    const created = await request<SessionCreated>(`${baseUrl}/sessions`, "POST", overrides);
    return new SessionClient(baseUrl, created.id);
  }

  private url(path: string): string {
    return `${this.baseUrl}/sessions/${this.id}${path}`;
  }

  setScene(scene: SceneRecord): Promise<{ ok: boolean; objects: number }> {
    return request(this.url("/scene"), "POST", scene);
  }

  setCamera(frames: CameraFrameRecord[]): Promise<{ ok: boolean; frames: number }> {
    return request(this.url("/camera"), "POST", frames);
  }

  addTrajectory(traj: TrajectoryRecord): Promise<{ ok: boolean; track_id: string; object_id: string }> {
    return request(this.url("/trajectory"), "POST", traj);
  }

  step(chunk?: number): Promise<StepResult> {
    return request(this.url("/step"), "POST", chunk === undefined ? {} : { chunk });
  }

  async stepAll(): Promise<StepResult[]> {
    const chunks: StepResult[] = [];
    for (;;) {
      const result = await this.step();
      if (result.chunk !== undefined) {
        chunks.push(result);
      }
      if (result.done) {
        return chunks;
      }
    }
  }

  tracks(): Promise<TracksResponse> {
    return request(this.url("/tracks"), "GET");
  }

  memory(): Promise<MemoryResponse> {
    return request(this.url("/memory"), "GET");
  }

  events(): Promise<EventsResponse> {
    return request(this.url("/events"), "GET");
  }

  metrics(): Promise<MetricsResponse> {
    return request(this.url("/metrics"), "GET");
  }

  frameUrl(t: number): string {
    return this.url(`/frames/${t}`);
  }
}

export async function healthz(baseUrl: string): Promise<boolean> {
  try {
    const body = await request<{ status: string }>(`${baseUrl}/healthz`, "GET");
    return body.status === "ok";
  } catch {
    return false;
  }
}
