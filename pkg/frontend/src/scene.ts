/**
 * Client-side model of the running scene: the latest state frame
 * (latest-value cell, stale ticks dropped), connection status, surfaced
 * errors, and the outbound command history with acknowledgment ticks.
 *
 * The store holds no predictive state and runs no physics; rendering
 * is a pure function of this model, which is what makes the whole
 * client testable against recorded message logs.
 */

import type { FkParams } from "./fk.js";
import type { Command, ServerFrame, StateFrame } from "./protocol.js";
import { describeCommand } from "./protocol.js";

export type Connection = "connecting" | "open" | "closed";

export interface CommandRecord {
  seq: number;
  label: string;
  /** Latest server tick seen when the command left, null before the first frame. */
  sentTick: number | null;
  /** First state tick received after the send; null until then. */
  ackTick: number | null;
}

const HISTORY_CAP = 50;

export class SceneStore {
  kind: string;
  params: FkParams;
  latest: StateFrame | null = null;
  connection: Connection = "connecting";
  reconnectAttempts = 0;
  /** Most recent surfaced problem (server error frame or send failure). */
  banner: string | null = null;
  history: CommandRecord[] = [];
  staleFrames = 0;
  /** Last goal the operator commanded; the frames themselves carry no goal. */
  lastGoal: [number, number] | null = null;
  private seq = 0;

  constructor(kind: string, params: FkParams) {
    this.kind = kind;
    this.params = params;
  }

  /** Apply one parsed server frame; stale state ticks are dropped. */
  applyFrame(frame: ServerFrame): void {
    if (frame.type === "error") {
      this.banner = frame.message;
      return;
    }
    if (this.latest !== null && frame.tick <= this.latest.tick) {
      this.staleFrames += 1;
      return;
    }
    this.latest = frame;
    for (const rec of this.history) {
      if (rec.ackTick === null && (rec.sentTick === null || frame.tick > rec.sentTick)) {
        rec.ackTick = frame.tick;
      }
    }
  }

  /** Record an outbound command at the moment it is handed to the socket. */
  commandSent(cmd: Command): CommandRecord {
    if (cmd.type === "setgoal") {
      this.lastGoal = [cmd.xy[0], cmd.xy[1]];
    }
    const rec: CommandRecord = {
      seq: this.seq++,
      label: describeCommand(cmd),
      sentTick: this.latest === null ? null : this.latest.tick,
      ackTick: null,
    };
    this.history.push(rec);
    if (this.history.length > HISTORY_CAP) {
      this.history.splice(0, this.history.length - HISTORY_CAP);
    }
    return rec;
  }

  sendFailed(reason: string): void {
    this.banner = reason;
  }

  connectionChanged(state: Connection): void {
    this.connection = state;
    if (state === "open") {
      this.reconnectAttempts = 0;
      this.banner = null;
    } else if (state === "connecting") {
      this.reconnectAttempts += 1;
    }
  }
}
