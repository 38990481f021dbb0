// Freehand stroke capture model: pure state, no DOM, so it is testable.

import { Pt, arcFractions, dist, nearestVertex } from "./geometry.js";

export const MAX_SUBMIT_SAMPLES = 500;

export class StrokeRecorder {
  samples: Pt[] = [];
  private history: Pt[][] = [];

  begin(p: Pt): void {
    this.history.push([...this.samples]);
    this.samples = [p];
  }

  extend(p: Pt): void {
    const last = this.samples[this.samples.length - 1];
    if (!last || dist(last, p) > 0.25) {
      this.samples.push(p);
    }
  }

  /** Undo removes the last stroke entirely. */
  undo(): void {
    this.samples = this.history.pop() ?? [];
  }

  clear(): void {
    this.history.push([...this.samples]);
    this.samples = [];
  }

  /** Pointer samples decimated for submission; the server's resampler is
   * authoritative, this only bounds the payload. */
  decimated(): Pt[] {
    const pts = this.samples;
    if (pts.length <= MAX_SUBMIT_SAMPLES) return [...pts];
    const out: Pt[] = [];
    const step = (pts.length - 1) / (MAX_SUBMIT_SAMPLES - 1);
    for (let i = 0; i < MAX_SUBMIT_SAMPLES; i++) {
      out.push(pts[Math.round(i * step)]);
    }
    return out;
  }
}

export interface RotationKeypoint {
  index: number; // into the submitted (decimated) stroke
  rotation: [number, number, number];
}

export interface GripperEvent {
  index: number;
  value: number; // 1 close, 0 open
}

export class Annotations {
  keypoints: RotationKeypoint[] = [];
  gripperEvents: GripperEvent[] = [];
  selected: number | null = null;

  select(p: Pt, stroke: Pt[]): number {
    this.selected = nearestVertex(p, stroke);
    return this.selected;
  }

  setRotation(rotation: [number, number, number]): void {
    if (this.selected === null) return;
    const existing = this.keypoints.find((k) => k.index === this.selected);
    if (existing) {
      existing.rotation = rotation;
    } else {
      this.keypoints.push({ index: this.selected, rotation });
      this.keypoints.sort((a, b) => a.index - b.index);
    }
  }

  addGripperEvent(value: number): void {
    if (this.selected === null) return;
    this.gripperEvents = this.gripperEvents.filter(
      (e) => e.index !== this.selected
    );
    this.gripperEvents.push({ index: this.selected, value });
    this.gripperEvents.sort((a, b) => a.index - b.index);
  }

  /** Hold-last preview: [start, end) index spans where the gripper is
   * closed, mirroring the server's interpolation semantics. */
  closedSpans(total: number, initial = 0): [number, number][] {
    const spans: [number, number][] = [];
    let state = initial;
    let openIndex = state === 1 ? 0 : -1;
    for (const e of this.gripperEvents) {
      if (e.value === 1 && state === 0) {
        openIndex = e.index;
        state = 1;
      } else if (e.value === 0 && state === 1) {
        spans.push([openIndex, e.index]);
        state = 0;
      }
    }
    if (state === 1) spans.push([openIndex, total]);
    return spans;
  }
}

/** Map raw-stroke annotation indices to the resampled grid the way the
 * server does: by arc-length fraction, strictly increasing. */
export function mapIndicesToResampled(
  stroke: Pt[],
  rawIndices: number[],
  n: number
): number[] {
  const fractions = arcFractions(stroke);
  const out: number[] = [];
  let prev = -1;
  for (const idx of rawIndices) {
    let j = Math.round(fractions[idx] * (n - 1));
    j = Math.max(j, prev + 1);
    j = Math.min(j, n - 1);
    if (j <= prev) j = prev;
    out.push(j);
    prev = j;
  }
  return out;
}
