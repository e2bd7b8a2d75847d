/**
 * Socket lifecycle around the scene store: connect, reconnect with
 * capped backoff, frame dispatch, and sends with one queued retry
 * before the failure is surfaced.
 *
 * The WebSocket constructor and the timer are injected so the whole
 * state machine runs under test with scripted fakes.
 */

import type { Command } from "./protocol.js";
import { encodeCommand, parseFrame } from "./protocol.js";
import type { SceneStore } from "./scene.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
}

export interface LiveClientOptions {
  makeSocket?: (url: string) => SocketLike;
  schedule?: (fn: () => void, ms: number) => void;
}

const BACKOFF_BASE_MS = 500;
const BACKOFF_CAP_MS = 5000;
const RETRY_DELAY_MS = 250;

export class LiveClient {
  private readonly url: string;
  private readonly store: SceneStore;
  private readonly makeSocket: (url: string) => SocketLike;
  private readonly schedule: (fn: () => void, ms: number) => void;
  private socket: SocketLike | null = null;
  private retryQueue: Command[] = [];
  private stopped = false;

  constructor(url: string, store: SceneStore, opts: LiveClientOptions = {}) {
    this.url = url;
    this.store = store;
    this.makeSocket = opts.makeSocket ?? ((u) => new WebSocket(u) as unknown as SocketLike);
    this.schedule = opts.schedule ?? ((fn, ms) => setTimeout(fn, ms));
  }

  connect(): void {
    if (this.stopped) {
      return;
    }
    this.store.connectionChanged("connecting");
    const sock = this.makeSocket(this.url);
    this.socket = sock;
    sock.onopen = () => {
      this.store.connectionChanged("open");
      const queued = this.retryQueue;
      this.retryQueue = [];
      for (const cmd of queued) {
        this.transmit(cmd, false);
      }
    };
    sock.onmessage = (ev) => {
      if (typeof ev.data !== "string") {
        return;
      }
      const frame = parseFrame(ev.data);
      if (frame !== null) {
        this.store.applyFrame(frame);
      }
    };
    sock.onclose = () => {
      if (this.socket !== sock) {
        return;
      }
      this.socket = null;
      this.store.connectionChanged("closed");
      if (!this.stopped) {
        const n = this.store.reconnectAttempts;
        const delay = Math.min(BACKOFF_CAP_MS, BACKOFF_BASE_MS * 2 ** n);
        this.schedule(() => this.connect(), delay);
      }
    };
  }

  /** Record the command in the history and push it down the socket. */
  send(cmd: Command): void {
    this.store.commandSent(cmd);
    this.transmit(cmd, true);
  }

  private transmit(cmd: Command, mayRetry: boolean): void {
    const sock = this.socket;
    if (sock === null || this.store.connection !== "open") {
      this.afterFailure(cmd, mayRetry, "not connected");
      return;
    }
    try {
      sock.send(encodeCommand(cmd));
    } catch (err) {
      this.afterFailure(cmd, mayRetry, err instanceof Error ? err.message : String(err));
    }
  }

  private afterFailure(cmd: Command, mayRetry: boolean, reason: string): void {
    if (mayRetry) {
      // one retry total: either this timer (socket still open) or the
      // next onopen drain pops it, both with mayRetry off
      this.retryQueue.push(cmd);
      this.schedule(() => this.flushRetries(), RETRY_DELAY_MS);
    } else {
      this.store.sendFailed(`command lost after retry: ${reason}`);
    }
  }

  private flushRetries(): void {
    if (this.store.connection !== "open" || this.socket === null) {
      return;
    }
    const queued = this.retryQueue;
    this.retryQueue = [];
    for (const cmd of queued) {
      this.transmit(cmd, false);
    }
  }

  close(): void {
    this.stopped = true;
    this.socket?.close();
  }
}
