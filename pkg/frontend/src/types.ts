// Payload shapes of the v1 HTTP API (see docs/http_api.md).

export interface SessionState {
  session_id: string;
  task: string;
  status: string;
  pending_scenes: number;
  received_drawings: number;
  running_stage: string | null;
  error: string | null;
  artifacts: Record<string, string>;
}

export interface SceneInfo {
  done: boolean;
  scene_id: string;
  remaining: number;
  image_url: string;
  width: number;
  height: number;
  end_effector_pixel: [number, number];
  object_pixels: Record<string, [number, number]>;
  initial_rotation: [number, number, number];
  initial_gripper: number;
  n_waypoints: number;
}

export interface DrawingPayload {
  scene_id: string;
  stroke: [number, number][];
  rotation_keypoints: [number, [number, number, number]][];
  gripper_events: [number, number][];
  idempotency_key?: string;
}

export interface SubmitResponse {
  accepted: boolean;
  scene_id: string;
  n_waypoints: number;
  replaces_previous: boolean;
  remaining: number;
  waypoints: WaypointRecord[];
}

export interface WaypointRecord {
  pixel: [number, number];
  rotation: [number, number, number];
  gripper: number;
}

export interface DrawingRecord {
  kind: "drawing";
  scene_id: string;
  waypoints: WaypointRecord[];
}

export interface ValidationVerdict {
  ok: boolean;
  reason?: string;
  expected_pixel?: [number, number];
}

export interface ProgressEvent {
  seq: number;
  type: string;
  stage?: string;
  epoch?: number;
  loss?: number;
  policy?: string;
  instance?: number;
  success?: number;
  segments?: Record<string, boolean>;
  error?: string;
  [key: string]: unknown;
}
