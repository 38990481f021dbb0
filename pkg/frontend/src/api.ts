// Typed client for the documented v1 HTTP API and nothing else.

import {
  DrawingPayload,
  DrawingRecord,
  SceneInfo,
  SessionState,
  SubmitResponse,
  ValidationVerdict,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: unknown
  ) {
    super(`HTTP ${status}: ${JSON.stringify(detail)}`);
  }
}

export class Client {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = fetch
  ) {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown
  ): Promise<T> {
    const r = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers: body !== undefined ? { "Content-Type": "application/json" } : {},
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    const payload = await r.json();
    if (!r.ok) throw new ApiError(r.status, payload.detail ?? payload);
    return payload as T;
  }

  createSession(
    task: string,
    mScenes: number,
    seed: number,
    config?: Record<string, unknown>
  ): Promise<SessionState> {
    return this.request("POST", "/v1/sessions", {
      task,
      m_scenes: mScenes,
      seed,
      config,
    });
  }

  sessionState(id: string): Promise<SessionState> {
    return this.request("GET", `/v1/sessions/${id}`);
  }

  nextScene(id: string): Promise<SceneInfo> {
    return this.request("GET", `/v1/sessions/${id}/scenes/next`);
  }

  imageUrl(scene: SceneInfo): string {
    return `${this.baseUrl}${scene.image_url}`;
  }

  submitDrawing(id: string, payload: DrawingPayload): Promise<SubmitResponse> {
    return this.request("POST", `/v1/sessions/${id}/drawings`, payload);
  }

  fetchDrawing(id: string, sceneId: string): Promise<DrawingRecord> {
    return this.request("GET", `/v1/sessions/${id}/drawings/${sceneId}`);
  }

  runStage(id: string, stage: string, idempotencyKey?: string): Promise<unknown> {
    return this.request("POST", `/v1/sessions/${id}/stages/${stage}`, {
      idempotency_key: idempotencyKey,
    });
  }

  validate(body: {
    stroke: [number, number][];
    end_effector_pixel: [number, number];
    width: number;
    height: number;
  }): Promise<ValidationVerdict> {
    return this.request("POST", "/v1/validate", body);
  }

  eventsUrl(id: string, after: number): string {
    return `${this.baseUrl}/v1/sessions/${id}/events?after=${after}`;
  }
}
