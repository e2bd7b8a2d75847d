/**
 * Mouse gestures to wire commands.
 *
 * Impulse mapping: a drag of (dx, dy) world meters becomes a velocity
 * impulse of DRAG_GAIN * (dx, dy) on the env's dragged coordinates
 * (linear, gain documented below), then clamps to the wire cap. Planar
 * envs take both components on qvel[0..1]; the pendulum and the
 * cartpole take the horizontal component on qvel[0].
 *
 * Goal mapping: a click becomes setgoal at the world point, clamped to
 * the reachable workspace (reacher: disk of summed link lengths;
 * point mass: the server's square goal bound).
 */

import type { EnvKind, FkParams } from "./fk.js";
import { workspaceRadius } from "./fk.js";
import type { PerturbCommand, SetGoalCommand } from "./protocol.js";
import { perturbCommand, setGoalCommand } from "./protocol.js";

/** Impulse (m/s or rad/s) per meter of drag. */
export const DRAG_GAIN = 4.0;

/** Drags shorter than this are clicks, not impulses. */
export const DRAG_DEADBAND = 1e-3;

/** Server-side square bound on point-mass goal coordinates. */
export const POINTMASS_GOAL_BOUND = 10.0;

/** Null when the drag is too short to map an impulse. */
export function dragToPerturb(kind: EnvKind, dx: number, dy: number): PerturbCommand | null {
  if (Math.hypot(dx, dy) < DRAG_DEADBAND) {
    return null;
  }
  const gx = DRAG_GAIN * dx;
  const gy = DRAG_GAIN * dy;
  switch (kind) {
    case "pointmass":
    case "reacher":
      return perturbCommand([0, 1], [gx, gy]);
    case "pendulum":
    case "cartpole":
      return perturbCommand([0], [gx]);
  }
}

export interface ClampedGoal {
  command: SetGoalCommand;
  /** True when the click fell outside the workspace and was pulled to its boundary. */
  clamped: boolean;
}

/** Null for envs without a movable goal. */
export function clickToGoal(kind: EnvKind, params: FkParams, x: number, y: number): ClampedGoal | null {
  if (kind === "reacher") {
    const radius = workspaceRadius(kind, params);
    if (radius === null) {
      return null;
    }
    const r = Math.hypot(x, y);
    if (r > radius && r > 0) {
      const s = radius / r;
      return { command: setGoalCommand(x * s, y * s), clamped: true };
    }
    return { command: setGoalCommand(x, y), clamped: false };
  }
  if (kind === "pointmass") {
    const b = POINTMASS_GOAL_BOUND;
    const cx = Math.min(b, Math.max(-b, x));
    const cy = Math.min(b, Math.max(-b, y));
    return { command: setGoalCommand(cx, cy), clamped: cx !== x || cy !== y };
  }
  return null;
}
