// Schematic gripper wireframe rotated client-side and projected onto the
// preview canvas. The preview looks straight down: world +x renders as
// image +u, world +y as image +v (v grows downward on canvas, matching
// the backend's image convention).

import { apply, eulerToMatrix, Vec3 } from "./rotation.js";

type Segment3 = [Vec3, Vec3];

// Fixed polyline model; forward is +x, fingers open along +x.
const GRIPPER_MODEL: Segment3[] = [
  [[-0.6, 0, 0], [0, 0, 0]], // wrist
  [[0, -0.35, 0], [0, 0.35, 0]], // palm bar
  [[0, -0.35, 0], [0.5, -0.35, 0]], // finger
  [[0, 0.35, 0], [0.5, 0.35, 0]], // finger
  [[0, 0, -0.18], [0, 0, 0.18]], // roll indicator
];

export const FORWARD_AXIS: Vec3 = [1, 0, 0];

export interface Projected {
  segments: [number, number][][];
  forward: [number, number]; // unit image-plane direction of the forward axis
}

export function projectWireframe(euler: Vec3, scale = 60): Projected {
  const m = eulerToMatrix(euler);
  const segments = GRIPPER_MODEL.map((seg) =>
    seg.map((v) => {
      const r = apply(m, v);
      return [r[0] * scale, r[1] * scale] as [number, number];
    })
  );
  const f = apply(m, FORWARD_AXIS);
  const norm = Math.hypot(f[0], f[1]);
  const forward: [number, number] =
    norm > 1e-12 ? [f[0] / norm, f[1] / norm] : [0, 0];
  return { segments, forward };
}

/** World-frame forward axis after rotation; the convention fixture pins
 * (0, 0, pi/2) to [0, 1, 0]. */
export function forwardAxisWorld(euler: Vec3): Vec3 {
  return apply(eulerToMatrix(euler), FORWARD_AXIS);
}
