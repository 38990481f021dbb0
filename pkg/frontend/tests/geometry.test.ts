import { describe, expect, it } from "vitest";
import {
  arcFractions,
  hausdorff,
  nearestVertex,
  polylineLength,
  resamplePolyline,
  Pt,
} from "../src/geometry.js";

describe("resamplePolyline", () => {
  it("splits a segment uniformly", () => {
    const out = resamplePolyline([[0, 0], [10, 0]], 3);
    expect(out).toEqual([[0, 0], [5, 0], [10, 0]]);
  });

  it("preserves endpoints on an L-path", () => {
    const out = resamplePolyline([[0, 0], [0, 4], [3, 4]], 8);
    expect(out[0]).toEqual([0, 0]);
    expect(out[7]).toEqual([3, 4]);
    for (let i = 1; i < out.length; i++) {
      const d = Math.hypot(out[i][0] - out[i - 1][0], out[i][1] - out[i - 1][1]);
      expect(d).toBeCloseTo(1.0, 9);
    }
  });

  it("rejects degenerate strokes", () => {
    expect(() => resamplePolyline([[1, 1], [1, 1]], 4)).toThrow();
  });
});

describe("hausdorff", () => {
  it("is zero for identical polylines", () => {
    const pts: Pt[] = [[0, 0], [5, 5], [10, 0]];
    expect(hausdorff(pts, pts)).toBe(0);
  });

  it("measures vertical offset between parallel lines", () => {
    const a: Pt[] = [[0, 0], [10, 0]];
    const b: Pt[] = [[0, 3], [10, 3]];
    expect(hausdorff(a, b)).toBeCloseTo(3, 9);
  });

  it("resampled stroke stays within a pixel of its source", () => {
    const stroke: Pt[] = [];
    for (let i = 0; i <= 200; i++) {
      const t = i / 200;
      stroke.push([100 + 600 * t, 300 + 100 * Math.sin(4 * t)]);
    }
    const resampled = resamplePolyline(stroke, 75);
    expect(hausdorff(stroke, resampled)).toBeLessThan(1.0);
  });
});

describe("helpers", () => {
  it("polylineLength sums segments", () => {
    expect(polylineLength([[0, 0], [3, 4], [3, 10]])).toBeCloseTo(11, 12);
  });

  it("arcFractions are monotone from 0 to 1", () => {
    const f = arcFractions([[0, 0], [2, 0], [4, 0], [10, 0]]);
    expect(f[0]).toBe(0);
    expect(f[f.length - 1]).toBeCloseTo(1, 12);
    for (let i = 1; i < f.length; i++) expect(f[i]).toBeGreaterThanOrEqual(f[i - 1]);
  });

  it("nearestVertex picks the closest sample", () => {
    expect(nearestVertex([4.4, 0], [[0, 0], [2, 0], [4, 0], [6, 0]])).toBe(2);
  });
});
