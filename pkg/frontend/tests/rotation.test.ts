import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";
import { apply, eulerToMatrix, Vec3 } from "../src/rotation.js";
import { forwardAxisWorld, projectWireframe } from "../src/wireframe.js";

const fixture = JSON.parse(
  readFileSync(new URL("../../fixtures/rotation_convention.json", import.meta.url), "utf-8")
);

describe("rotation convention fixture", () => {
  for (const vec of fixture.vectors) {
    it(vec.note, () => {
      const got = apply(eulerToMatrix(vec.euler as Vec3), vec.axis as Vec3);
      for (let i = 0; i < 3; i++) {
        expect(got[i]).toBeCloseTo(vec.expected[i], 9);
      }
    });
  }

  it("yaw pi/2 renders the forward axis along image +v", () => {
    const projected = projectWireframe([0, 0, Math.PI / 2]);
    // Image v grows downward and corresponds to world +y in the preview.
    expect(projected.forward[0]).toBeCloseTo(0, 9);
    expect(projected.forward[1]).toBeCloseTo(1, 9);
  });

  it("identity keeps the forward axis along image +u", () => {
    const projected = projectWireframe([0, 0, 0]);
    expect(projected.forward[0]).toBeCloseTo(1, 9);
    expect(projected.forward[1]).toBeCloseTo(0, 9);
  });

  it("matrices are orthonormal", () => {
    const m = eulerToMatrix([0.3, -0.7, 1.2]);
    for (let i = 0; i < 3; i++) {
      for (let j = 0; j < 3; j++) {
        let dot = 0;
        for (let k = 0; k < 3; k++) dot += m[k][i] * m[k][j];
        expect(dot).toBeCloseTo(i === j ? 1 : 0, 9);
      }
    }
  });

  it("forwardAxisWorld matches the fixture head vector", () => {
    const f = forwardAxisWorld([0, 0, Math.PI / 2]);
    expect(f[0]).toBeCloseTo(0, 9);
    expect(f[1]).toBeCloseTo(1, 9);
    expect(f[2]).toBeCloseTo(0, 9);
  });
});
