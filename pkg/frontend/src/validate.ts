// Client-side stroke validation. Anything accepted here must also pass
// the server's rules (the UI may only be stricter); the shared fixture
// suite in ../fixtures/validation_strokes.json enforces that subset
// property against a live server.

import { Pt, polylineLength } from "./geometry.js";

export const START_PROXIMITY_PX = 15.0;
// UI-only: refuse strokes with less ink than this; too short to mean a
// trajectory even though the server would take them.
export const MIN_INK_PX = 10.0;

export interface StrokeVerdict {
  ok: boolean;
  reason?: string;
  expected_pixel?: [number, number];
}

export function validateStroke(
  stroke: Pt[],
  endEffectorPixel: [number, number],
  width: number,
  height: number
): StrokeVerdict {
  if (!Array.isArray(stroke) || stroke.length < 2) {
    return { ok: false, reason: "stroke needs at least 2 samples" };
  }
  for (const [u, v] of stroke) {
    if (!Number.isFinite(u) || !Number.isFinite(v)) {
      return { ok: false, reason: "stroke samples must be finite numbers" };
    }
    if (u < 0 || u >= width || v < 0 || v >= height) {
      return { ok: false, reason: "stroke leaves the image bounds" };
    }
  }
  const start = stroke[0];
  const d = Math.hypot(
    start[0] - endEffectorPixel[0],
    start[1] - endEffectorPixel[1]
  );
  if (d > START_PROXIMITY_PX) {
    return {
      ok: false,
      reason: "start point is not on the end-effector",
      expected_pixel: endEffectorPixel,
    };
  }
  const length = polylineLength(stroke);
  if (length === 0) {
    return { ok: false, reason: "stroke has no extent" };
  }
  if (length < MIN_INK_PX) {
    return { ok: false, reason: "stroke is too short to be a trajectory" };
  }
  return { ok: true };
}
