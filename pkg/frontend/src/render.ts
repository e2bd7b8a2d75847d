/**
 * Canvas renderer: one frame drawn as a pure function of the scene
 * model (plus the transient drag overlay owned by the input layer).
 * No client-side physics; bodies come straight from qpos through the
 * mirrored forward kinematics.
 *
 * Draws against a minimal 2D-context interface so the scene can be
 * rendered headless by tests with a recording stub.
 */

import type { EnvKind, FkParams, Point } from "./fk.js";
import { fkPoints, isEnvKind, workspaceRadius } from "./fk.js";
import type { SceneStore } from "./scene.js";

export interface Ctx2D {
  save(): void;
  restore(): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  rect(x: number, y: number, w: number, h: number): void;
  stroke(): void;
  fill(): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
  setLineDash(segments: number[]): void;
  lineWidth: number;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  font: string;
  globalAlpha: number;
}

export interface Viewport {
  width: number;
  height: number;
}

export interface DragOverlay {
  /** World coordinates of the gesture so far. */
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

interface Frame2World {
  scale: number;
  cx: number;
  cy: number;
}

/** World half-extent shown per env; rendering fits it into the viewport. */
function worldHalfSpan(kind: EnvKind, params: FkParams): number {
  switch (kind) {
    case "pendulum":
      return 1.5 * (params.length ?? 1.0);
    case "cartpole":
      return 2.6;
    case "pointmass":
      return 2.2;
    case "reacher":
      return 1.35 * (workspaceRadius(kind, params) ?? 1.0);
  }
}

function mapping(kind: EnvKind, params: FkParams, vp: Viewport): Frame2World {
  const half = worldHalfSpan(kind, params);
  const scale = Math.min(vp.width, vp.height) / (2 * half);
  return { scale, cx: vp.width / 2, cy: vp.height / 2 };
}

export function worldToScreen(m: Frame2World, x: number, y: number): Point {
  return [m.cx + x * m.scale, m.cy - y * m.scale];
}

export function screenToWorld(m: Frame2World, px: number, py: number): Point {
  return [(px - m.cx) / m.scale, (m.cy - py) / m.scale];
}

/** The transform the input layer must use to invert mouse positions. */
export function viewMapping(store: SceneStore, vp: Viewport): Frame2World | null {
  if (!isEnvKind(store.kind)) {
    return null;
  }
  return mapping(store.kind, store.params, vp);
}

const COLORS = {
  background: "#10141a",
  body: "#e8e3d3",
  joint: "#8ecae6",
  goal: "#f4a261",
  rail: "#3a4454",
  text: "#c9d1d9",
  dim: "#5c6773",
  error: "#e05d44",
  drag: "#8ecae6",
};

function drawChain(ctx: Ctx2D, m: Frame2World, pts: Point[]): void {
  ctx.strokeStyle = COLORS.body;
  ctx.lineWidth = 5;
  ctx.beginPath();
  const [sx, sy] = worldToScreen(m, pts[0]![0], pts[0]![1]);
  ctx.moveTo(sx, sy);
  for (let i = 1; i < pts.length; i++) {
    const [x, y] = worldToScreen(m, pts[i]![0], pts[i]![1]);
    ctx.lineTo(x, y);
  }
  ctx.stroke();
  ctx.fillStyle = COLORS.joint;
  for (const [wx, wy] of pts) {
    const [x, y] = worldToScreen(m, wx, wy);
    ctx.beginPath();
    ctx.arc(x, y, 6, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function drawBodies(ctx: Ctx2D, kind: EnvKind, params: FkParams, qpos: number[], m: Frame2World): void {
  const pts = fkPoints(kind, qpos, params);
  if (kind === "cartpole") {
    const [rx0, ry] = worldToScreen(m, -worldHalfSpan(kind, params), 0);
    const [rx1] = worldToScreen(m, worldHalfSpan(kind, params), 0);
    ctx.strokeStyle = COLORS.rail;
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(rx0, ry);
    ctx.lineTo(rx1, ry);
    ctx.stroke();
    const [cx, cy] = worldToScreen(m, pts[0]![0], pts[0]![1]);
    ctx.fillStyle = COLORS.body;
    ctx.fillRect(cx - 22, cy - 12, 44, 24);
  }
  if (kind === "pointmass") {
    const [x, y] = worldToScreen(m, pts[0]![0], pts[0]![1]);
    ctx.fillStyle = COLORS.body;
    ctx.beginPath();
    ctx.arc(x, y, 9, 0, 2 * Math.PI);
    ctx.fill();
    return;
  }
  drawChain(ctx, m, pts);
}

function drawGoal(ctx: Ctx2D, kind: EnvKind, params: FkParams, m: Frame2World): void {
  if (kind !== "reacher") {
    return;
  }
  const radius = workspaceRadius(kind, params);
  if (radius !== null) {
    const [cx, cy] = worldToScreen(m, 0, 0);
    ctx.strokeStyle = COLORS.dim;
    ctx.lineWidth = 1;
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    ctx.arc(cx, cy, radius * m.scale, 0, 2 * Math.PI);
    ctx.stroke();
    ctx.setLineDash([]);
  }
}

export function drawGoalMarker(ctx: Ctx2D, m: Frame2World, x: number, y: number): void {
  const [sx, sy] = worldToScreen(m, x, y);
  ctx.strokeStyle = COLORS.goal;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.arc(sx, sy, 8, 0, 2 * Math.PI);
  ctx.stroke();
  ctx.beginPath();
  ctx.moveTo(sx - 11, sy);
  ctx.lineTo(sx + 11, sy);
  ctx.moveTo(sx, sy - 11);
  ctx.lineTo(sx, sy + 11);
  ctx.stroke();
}

function banner(ctx: Ctx2D, vp: Viewport, text: string): void {
  ctx.fillStyle = COLORS.error;
  ctx.fillRect(0, 0, vp.width, 28);
  ctx.fillStyle = "#ffffff";
  ctx.font = "13px monospace";
  ctx.fillText(text, 10, 19);
}

function hud(ctx: Ctx2D, vp: Viewport, store: SceneStore): void {
  ctx.fillStyle = COLORS.text;
  ctx.font = "12px monospace";
  const s = store.latest;
  const lines: string[] = [];
  if (s !== null) {
    lines.push(
      `${store.kind}  tick ${s.tick}  t ${s.time_s.toFixed(2)}s` + (s.paused ? "  PAUSED" : ""),
      `eval ${s.eval.toFixed(4)}  reward ${s.reward.toFixed(4)}  latency ${(s.latency_s * 1e3).toFixed(1)}ms`,
    );
  } else {
    lines.push(`${store.kind}  waiting for first frame`);
  }
  lines.push("drag: impulse   click: goal   space: pause   R: reset");
  lines.forEach((line, i) => ctx.fillText(line, 10, vp.height - 10 - 16 * (lines.length - 1 - i)));

  const recent = store.history.slice(-5);
  recent.forEach((rec, i) => {
    const ack = rec.ackTick === null ? "..." : `ack ${rec.ackTick}`;
    ctx.fillStyle = rec.ackTick === null ? COLORS.dim : COLORS.text;
    ctx.fillText(`${rec.label}  ${ack}`, vp.width - 230, 20 + 16 * i);
  });
}

/** Draw one complete frame of the scene model. */
export function render(ctx: Ctx2D, vp: Viewport, store: SceneStore, drag: DragOverlay | null = null): void {
  ctx.save();
  ctx.globalAlpha = 1;
  ctx.fillStyle = COLORS.background;
  ctx.fillRect(0, 0, vp.width, vp.height);

  if (!isEnvKind(store.kind)) {
    banner(ctx, vp, `unknown env kind "${store.kind}"`);
    ctx.restore();
    return;
  }
  const kind: EnvKind = store.kind;
  const m = mapping(kind, store.params, vp);

  const disconnected = store.connection !== "open";
  if (disconnected) {
    ctx.globalAlpha = 0.45;
  }

  drawGoal(ctx, kind, store.params, m);
  if (store.lastGoal !== null && (kind === "pointmass" || kind === "reacher")) {
    drawGoalMarker(ctx, m, store.lastGoal[0], store.lastGoal[1]);
  }
  const s = store.latest;
  if (s !== null) {
    drawBodies(ctx, kind, store.params, s.qpos, m);
  }
  if (drag !== null) {
    const [x0, y0] = worldToScreen(m, drag.x0, drag.y0);
    const [x1, y1] = worldToScreen(m, drag.x1, drag.y1);
    ctx.strokeStyle = COLORS.drag;
    ctx.lineWidth = 2;
    ctx.setLineDash([6, 4]);
    ctx.beginPath();
    ctx.moveTo(x0, y0);
    ctx.lineTo(x1, y1);
    ctx.stroke();
    ctx.setLineDash([]);
  }

  ctx.globalAlpha = 1;
  if (disconnected) {
    ctx.fillStyle = COLORS.dim;
    ctx.font = "14px monospace";
    const label =
      store.connection === "connecting"
        ? `reconnecting (attempt ${Math.max(1, store.reconnectAttempts)})...`
        : "disconnected";
    ctx.fillText(label, vp.width / 2 - 70, 24);
  }
  if (store.banner !== null) {
    banner(ctx, vp, store.banner);
  }
  hud(ctx, vp, store);
  ctx.restore();
}
