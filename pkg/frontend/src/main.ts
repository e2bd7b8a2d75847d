/**
 * Entry point: resolve the service address from the URL query
 * (?host=...&port=...), fetch the env kind and kinematic parameters,
 * then run the render loop and feed operator gestures back as wire
 * commands.
 */

import { LiveClient } from "./client.js";
import type { FkParams } from "./fk.js";
import { isEnvKind } from "./fk.js";
import { clickToGoal, dragToPerturb, DRAG_DEADBAND } from "./gestures.js";
import type { DragOverlay } from "./render.js";
import { render, screenToWorld, viewMapping } from "./render.js";
import { SceneStore } from "./scene.js";

interface Endpoint {
  host: string;
  port: string;
}

function endpointFromQuery(): Endpoint {
  const q = new URLSearchParams(window.location.search);
  return {
    host: q.get("host") ?? window.location.hostname ?? "127.0.0.1",
    port: q.get("port") ?? "8800",
  };
}

async function fetchSetup(ep: Endpoint): Promise<{ kind: string; params: FkParams }> {
  const base = `http://${ep.host}:${ep.port}`;
  const status = (await (await fetch(`${base}/status`)).json()) as { env?: string };
  const kind = status.env ?? "unknown";
  let params: FkParams = {};
  if (isEnvKind(kind)) {
    const vectors = (await (await fetch(`${base}/fk_vectors`)).json()) as Record<
      string,
      { params: FkParams }
    >;
    params = vectors[kind]?.params ?? {};
  }
  return { kind, params };
}

function run(store: SceneStore, client: LiveClient, canvas: HTMLCanvasElement): void {
  const ctx = canvas.getContext("2d");
  if (ctx === null) {
    throw new Error("canvas 2d context unavailable");
  }
  let drag: DragOverlay | null = null;

  const viewport = () => ({ width: canvas.width, height: canvas.height });
  const resize = () => {
    canvas.width = window.innerWidth;
    canvas.height = window.innerHeight;
  };
  window.addEventListener("resize", resize);
  resize();

  const toWorld = (ev: MouseEvent): [number, number] | null => {
    const m = viewMapping(store, viewport());
    if (m === null) {
      return null;
    }
    const rect = canvas.getBoundingClientRect();
    return screenToWorld(m, ev.clientX - rect.left, ev.clientY - rect.top);
  };

  canvas.addEventListener("mousedown", (ev) => {
    const w = toWorld(ev);
    if (w !== null) {
      drag = { x0: w[0], y0: w[1], x1: w[0], y1: w[1] };
    }
  });
  canvas.addEventListener("mousemove", (ev) => {
    if (drag !== null) {
      const w = toWorld(ev);
      if (w !== null) {
        drag.x1 = w[0];
        drag.y1 = w[1];
      }
    }
  });
  const finish = (ev: MouseEvent) => {
    if (drag === null) {
      return;
    }
    const d = drag;
    drag = null;
    const w = toWorld(ev);
    if (w !== null) {
      d.x1 = w[0];
      d.y1 = w[1];
    }
    if (!isEnvKind(store.kind)) {
      return;
    }
    const dx = d.x1 - d.x0;
    const dy = d.y1 - d.y0;
    if (Math.hypot(dx, dy) >= DRAG_DEADBAND) {
      const cmd = dragToPerturb(store.kind, dx, dy);
      if (cmd !== null) {
        client.send(cmd);
      }
      return;
    }
    const goal = clickToGoal(store.kind, store.params, d.x0, d.y0);
    if (goal !== null) {
      client.send(goal.command);
    }
  };
  canvas.addEventListener("mouseup", finish);
  canvas.addEventListener("mouseleave", (ev) => {
    if (drag !== null) {
      finish(ev);
    }
  });

  window.addEventListener("keydown", (ev) => {
    if (ev.code === "Space") {
      ev.preventDefault();
      const paused = store.latest?.paused ?? false;
      client.send({ type: paused ? "resume" : "pause" });
    } else if (ev.key === "r" || ev.key === "R") {
      client.send({ type: "reset" });
    }
  });

  const frame = () => {
    render(ctx, viewport(), store, drag);
    window.requestAnimationFrame(frame);
  };
  window.requestAnimationFrame(frame);
}

async function boot(): Promise<void> {
  const canvas = document.getElementById("scene") as HTMLCanvasElement | null;
  if (canvas === null) {
    throw new Error("missing #scene canvas");
  }
  const ep = endpointFromQuery();
  let kind = "unknown";
  let params: FkParams = {};
  try {
    ({ kind, params } = await fetchSetup(ep));
  } catch {
    // keep going: the store renders the failure and the socket retries
  }
  const store = new SceneStore(kind, params);
  if (kind === "unknown") {
    store.banner = `cannot reach ${ep.host}:${ep.port}/status`;
  }
  const client = new LiveClient(`ws://${ep.host}:${ep.port}/ws`, store);
  client.connect();
  run(store, client, canvas);
}

void boot();
