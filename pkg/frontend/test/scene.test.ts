import { describe, expect, it } from "vitest";

import type { StateFrame } from "../src/protocol.js";
import { SceneStore } from "../src/scene.js";

function frame(tick: number, extra: Partial<StateFrame> = {}): StateFrame {
  return {
    type: "state",
    tick,
    time_s: tick * 0.02,
    qpos: [0.1 * tick, 0],
    qvel: [0, 0],
    eval: 0.2,
    reward: -0.2,
    latency_s: 0.003,
    paused: false,
    ...extra,
  };
}

describe("latest-value cell", () => {
  it("keeps only the newest frame", () => {
    const store = new SceneStore("pointmass", {});
    store.applyFrame(frame(1));
    store.applyFrame(frame(2));
    store.applyFrame(frame(3));
    expect(store.latest!.tick).toBe(3);
  });

  it("drops stale or replayed ticks", () => {
    const store = new SceneStore("pointmass", {});
    store.applyFrame(frame(5));
    store.applyFrame(frame(4));
    store.applyFrame(frame(5));
    expect(store.latest!.tick).toBe(5);
    expect(store.latest!.qpos[0]).toBeCloseTo(0.5, 12);
    expect(store.staleFrames).toBe(2);
  });
});

describe("command history", () => {
  it("echoes every command with its acknowledgment tick", () => {
    const store = new SceneStore("pointmass", {});
    store.applyFrame(frame(10));
    const rec = store.commandSent({ type: "perturb", dims: [0], impulse: [1] });
    expect(rec.sentTick).toBe(10);
    expect(rec.ackTick).toBeNull();
    store.applyFrame(frame(11));
    expect(rec.ackTick).toBe(11);
  });

  it("acknowledges commands sent before any frame on the first frame", () => {
    const store = new SceneStore("pointmass", {});
    const rec = store.commandSent({ type: "reset" });
    expect(rec.sentTick).toBeNull();
    store.applyFrame(frame(1));
    expect(rec.ackTick).toBe(1);
  });

  it("does not acknowledge on a stale frame", () => {
    const store = new SceneStore("pointmass", {});
    store.applyFrame(frame(10));
    const rec = store.commandSent({ type: "pause" });
    store.applyFrame(frame(9));
    expect(rec.ackTick).toBeNull();
  });

  it("caps the history length", () => {
    const store = new SceneStore("pointmass", {});
    for (let i = 0; i < 60; i++) {
      store.commandSent({ type: "pause" });
    }
    expect(store.history.length).toBe(50);
    expect(store.history[0]!.seq).toBe(10);
  });

  it("remembers the last commanded goal for rendering", () => {
    const store = new SceneStore("pointmass", {});
    expect(store.lastGoal).toBeNull();
    store.commandSent({ type: "setgoal", xy: [0.4, -0.2] });
    expect(store.lastGoal).toEqual([0.4, -0.2]);
  });
});

describe("surfaced problems and connection state", () => {
  it("shows server error frames in the banner", () => {
    const store = new SceneStore("pointmass", {});
    store.applyFrame({ type: "error", message: "command queue full" });
    expect(store.banner).toBe("command queue full");
  });

  it("counts reconnect attempts and clears on open", () => {
    const store = new SceneStore("pointmass", {});
    store.connectionChanged("connecting");
    store.connectionChanged("closed");
    store.connectionChanged("connecting");
    expect(store.reconnectAttempts).toBe(2);
    store.connectionChanged("open");
    expect(store.reconnectAttempts).toBe(0);
    expect(store.banner).toBeNull();
  });
});

describe("recorded message log replay", () => {
  it("reduces a scripted session to the expected model", () => {
    const store = new SceneStore("reacher", { link_lengths: [0.5, 0.5] });
    store.connectionChanged("open");
    const log: string[] = [
      JSON.stringify(frame(1)),
      JSON.stringify(frame(2, { paused: true })),
      '{"type": "error", "message": "planner exploded"}',
      JSON.stringify(frame(3, { paused: true })),
    ];
    const sent = store.commandSent({ type: "setgoal", xy: [0.2, 0.1] });
    for (const raw of log) {
      const parsed = JSON.parse(raw) as StateFrame | { type: "error"; message: string };
      store.applyFrame(parsed as never);
    }
    expect(store.latest!.tick).toBe(3);
    expect(store.latest!.paused).toBe(true);
    expect(store.banner).toBe("planner exploded");
    expect(sent.ackTick).toBe(1);
    expect(store.lastGoal).toEqual([0.2, 0.1]);
  });
});
