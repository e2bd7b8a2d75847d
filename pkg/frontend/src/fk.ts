/**
 * Forward kinematics mirrored from the server's environments.
 *
 * The formulas are duplicated on purpose: the client must be able to
 * draw from qpos alone, and the duplication is pinned by tests against
 * fk_vectors.json, a checked-in snapshot of the server's /fk_vectors
 * export (the server side of that handshake is asserted in the Python
 * suite, so the two implementations cannot drift apart silently).
 *
 * Conventions: angle 0 is upright for the pendulum and the cartpole
 * pole (tip at +y); reacher joint angles are relative, measured from
 * the +x axis, tip chain built by cumulative summation.
 */

export type EnvKind = "pendulum" | "cartpole" | "pointmass" | "reacher";

export const ENV_KINDS: readonly EnvKind[] = [
  "pendulum",
  "cartpole",
  "pointmass",
  "reacher",
];

export interface FkParams {
  length?: number;
  pole_length?: number;
  link_lengths?: number[];
}

export type Point = [number, number];

export function isEnvKind(s: string): s is EnvKind {
  return (ENV_KINDS as readonly string[]).includes(s);
}

/** Joint positions for one configuration, base first, tip last. */
export function fkPoints(kind: EnvKind, qpos: readonly number[], params: FkParams): Point[] {
  switch (kind) {
    case "pendulum": {
      const l = params.length ?? 1.0;
      const th = qpos[0] ?? 0;
      return [[0, 0], [l * Math.sin(th), l * Math.cos(th)]];
    }
    case "cartpole": {
      const l = params.pole_length ?? 0.5;
      const x = qpos[0] ?? 0;
      const th = qpos[1] ?? 0;
      return [[x, 0], [x + l * Math.sin(th), l * Math.cos(th)]];
    }
    case "pointmass":
      return [[qpos[0] ?? 0, qpos[1] ?? 0]];
    case "reacher": {
      const lengths = params.link_lengths ?? [0.5, 0.5];
      const pts: Point[] = [[0, 0]];
      let x = 0;
      let y = 0;
      let angle = 0;
      for (let i = 0; i < lengths.length; i++) {
        angle += qpos[i] ?? 0;
        x += (lengths[i] ?? 0) * Math.cos(angle);
        y += (lengths[i] ?? 0) * Math.sin(angle);
        pts.push([x, y]);
      }
      return pts;
    }
  }
}

/** Radius of the reachable disk for goal clamping; null when the env has no goal. */
export function workspaceRadius(kind: EnvKind, params: FkParams): number | null {
  if (kind === "reacher") {
    const lengths = params.link_lengths ?? [0.5, 0.5];
    return lengths.reduce((a, b) => a + b, 0);
  }
  return null;
}
