/**
 * Wire types for the live service: inbound state/error frames and
 * outbound command frames, with edge validation on both directions.
 * Field names and semantics are the server's compatibility contract.
 */

export interface StateFrame {
  type: "state";
  tick: number;
  time_s: number;
  qpos: number[];
  qvel: number[];
  eval: number;
  reward: number;
  latency_s: number;
  paused: boolean;
}

export interface ErrorFrame {
  type: "error";
  message: string;
}

export type ServerFrame = StateFrame | ErrorFrame;

export interface PerturbCommand {
  type: "perturb";
  dims: number[];
  impulse: number[];
}

export interface SetGoalCommand {
  type: "setgoal";
  xy: [number, number];
}

export interface SimpleCommand {
  type: "reset" | "pause" | "resume";
}

export type Command = PerturbCommand | SetGoalCommand | SimpleCommand;

/** Per-component cap on perturb impulses; mirrors the server clamp. */
export const IMPULSE_MAX = 5.0;

function finiteNumber(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

function finiteArray(v: unknown): v is number[] {
  return Array.isArray(v) && v.length > 0 && v.every(finiteNumber);
}

/**
 * Parse one server frame. Returns null for anything malformed rather
 * than throwing: a bad frame must never take down the render loop.
 */
export function parseFrame(raw: string): ServerFrame | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null || Array.isArray(data)) {
    return null;
  }
  const obj = data as Record<string, unknown>;
  if (obj.type === "error") {
    return typeof obj.message === "string" ? { type: "error", message: obj.message } : null;
  }
  if (obj.type !== "state") {
    return null;
  }
  if (
    !finiteNumber(obj.tick) ||
    !finiteNumber(obj.time_s) ||
    !finiteArray(obj.qpos) ||
    !finiteArray(obj.qvel) ||
    !finiteNumber(obj.eval) ||
    !finiteNumber(obj.reward) ||
    !finiteNumber(obj.latency_s)
  ) {
    return null;
  }
  return {
    type: "state",
    tick: obj.tick,
    time_s: obj.time_s,
    qpos: obj.qpos,
    qvel: obj.qvel,
    eval: obj.eval,
    reward: obj.reward,
    latency_s: obj.latency_s,
    paused: obj.paused === true,
  };
}

const clamp = (v: number, lo: number, hi: number) => Math.min(hi, Math.max(lo, v));

/** Build a perturb command, clamping each component to the wire cap. */
export function perturbCommand(dims: number[], impulse: number[]): PerturbCommand {
  if (dims.length === 0 || dims.length !== impulse.length) {
    throw new Error(`perturb needs matched nonempty dims/impulse, got ${dims.length}/${impulse.length}`);
  }
  return {
    type: "perturb",
    dims: [...dims],
    impulse: impulse.map((v) => clamp(v, -IMPULSE_MAX, IMPULSE_MAX)),
  };
}

export function setGoalCommand(x: number, y: number): SetGoalCommand {
  if (!finiteNumber(x) || !finiteNumber(y)) {
    throw new Error(`setgoal needs finite coordinates, got (${x}, ${y})`);
  }
  return { type: "setgoal", xy: [x, y] };
}

export function encodeCommand(cmd: Command): string {
  return JSON.stringify(cmd);
}

/** One-line label for the command history pane. */
export function describeCommand(cmd: Command): string {
  switch (cmd.type) {
    case "perturb":
      return `perturb [${cmd.impulse.map((v) => v.toFixed(2)).join(", ")}]`;
    case "setgoal":
      return `goal (${cmd.xy[0].toFixed(2)}, ${cmd.xy[1].toFixed(2)})`;
    default:
      return cmd.type;
  }
}
