import { describe, expect, it } from "vitest";

import { ENV_KINDS, fkPoints, isEnvKind, workspaceRadius } from "../src/fk.js";
import type { EnvKind, FkParams } from "../src/fk.js";
import vectors from "../src/fk_vectors.json";

interface FkCase {
  qpos: number[];
  points: number[][];
}

const fixture = vectors as Record<string, { params: FkParams; cases: FkCase[] }>;

describe("forward kinematics against the server export", () => {
  it("covers every env kind", () => {
    expect(Object.keys(fixture).sort()).toEqual([...ENV_KINDS].sort());
  });

  for (const kind of ENV_KINDS) {
    it(`matches all ${kind} vectors to 1e-6`, () => {
      const entry = fixture[kind]!;
      expect(entry.cases.length).toBeGreaterThan(0);
      for (const c of entry.cases) {
        const pts = fkPoints(kind, c.qpos, entry.params);
        expect(pts.length).toBe(c.points.length);
        for (let i = 0; i < pts.length; i++) {
          const want = c.points[i]!;
          expect(Math.abs(pts[i]![0] - want[0]!)).toBeLessThan(1e-6);
          expect(Math.abs(pts[i]![1] - want[1]!)).toBeLessThan(1e-6);
        }
      }
    });
  }
});

describe("kinematic identities", () => {
  it("reacher at zero angles lies along +x", () => {
    const pts = fkPoints("reacher", [0, 0], { link_lengths: [0.5, 0.5] });
    expect(pts).toEqual([[0, 0], [0.5, 0], [1.0, 0]]);
  });

  it("pendulum at zero angle points straight up", () => {
    const pts = fkPoints("pendulum", [0], { length: 1.0 });
    expect(pts[1]![0]).toBeCloseTo(0, 12);
    expect(pts[1]![1]).toBeCloseTo(1.0, 12);
  });

  it("cartpole tip rides the cart", () => {
    const at = (x: number) => fkPoints("cartpole", [x, 0.3], { pole_length: 0.5 });
    const a = at(0);
    const b = at(1.5);
    expect(b[1]![0] - a[1]![0]).toBeCloseTo(1.5, 12);
    expect(b[1]![1]).toBeCloseTo(a[1]![1], 12);
  });

  it("reacher tip stays inside the workspace disk", () => {
    const params = { link_lengths: [0.5, 0.5] };
    const radius = workspaceRadius("reacher", params)!;
    for (const c of fixture.reacher!.cases) {
      const pts = fkPoints("reacher", c.qpos, params);
      const tip = pts[pts.length - 1]!;
      expect(Math.hypot(tip[0], tip[1])).toBeLessThanOrEqual(radius + 1e-9);
    }
  });

  it("workspace radius exists only for the reacher", () => {
    const kinds: EnvKind[] = ["pendulum", "cartpole", "pointmass"];
    for (const kind of kinds) {
      expect(workspaceRadius(kind, {})).toBeNull();
    }
    expect(isEnvKind("reacher")).toBe(true);
    expect(isEnvKind("walker")).toBe(false);
  });
});
