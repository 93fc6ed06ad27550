/** Live reading feed. NdjsonStream consumes the gateway's newline-delimited
 * JSON stream endpoint; tests substitute any other ReadingSource. */

import type { ReadingMsg, StreamStatus } from "./types.js";

export interface ReadingSource {
  start(): void;
  stop(): void;
  onReading(fn: (msg: ReadingMsg) => void): void;
  onStatus(fn: (status: StreamStatus) => void): void;
}

// Flip to "degraded" when the stream stays silent this long.
export const GAP_LIMIT_MS = 10_000;
const RECONNECT_DELAY_MS = 2_000;
const WATCHDOG_TICK_MS = 1_000;

export class NdjsonStream implements ReadingSource {
  private readingFns: Array<(msg: ReadingMsg) => void> = [];
  private statusFns: Array<(status: StreamStatus) => void> = [];
  private status: StreamStatus = "connecting";
  private lastMessageAt = 0;
  private watchdog: ReturnType<typeof setInterval> | null = null;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private abort: AbortController | null = null;
  private running = false;

  constructor(
    private readonly url: string,
    private readonly fetchFn: typeof fetch = (...args) => fetch(...args),
    private readonly now: () => number = () => Date.now(),
  ) {}

  onReading(fn: (msg: ReadingMsg) => void): void {
    this.readingFns.push(fn);
  }

  onStatus(fn: (status: StreamStatus) => void): void {
    this.statusFns.push(fn);
  }

  start(): void {
    if (this.running) return;
    this.running = true;
    this.lastMessageAt = this.now();
    this.watchdog = setInterval(() => this.checkGap(), WATCHDOG_TICK_MS);
    void this.connect();
  }

  stop(): void {
    this.running = false;
    if (this.watchdog !== null) clearInterval(this.watchdog);
    this.watchdog = null;
    if (this.reconnectTimer !== null) clearTimeout(this.reconnectTimer);
    this.reconnectTimer = null;
    this.abort?.abort();
    this.abort = null;
  }

  private setStatus(status: StreamStatus): void {
    if (status === this.status) return;
    this.status = status;
    for (const fn of this.statusFns) fn(status);
  }

  private checkGap(): void {
    if (!this.running) return;
    if (this.now() - this.lastMessageAt > GAP_LIMIT_MS) {
      this.setStatus("degraded");
    }
  }

  private async connect(): Promise<void> {
    if (!this.running) return;
    this.abort = new AbortController();
    try {
      const resp = await this.fetchFn(this.url, { signal: this.abort.signal });
      if (!resp.ok || resp.body === null) throw new Error(`stream HTTP ${resp.status}`);
      const reader = resp.body.getReader();
      const decoder = new TextDecoder();
      let buffer = "";
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        buffer += decoder.decode(value, { stream: true });
        let nl: number;
        while ((nl = buffer.indexOf("\n")) >= 0) {
          const line = buffer.slice(0, nl).trim();
          buffer = buffer.slice(nl + 1);
          if (line === "") continue;
          this.handleLine(line);
        }
      }
    } catch {
      // fall through to reconnect
    }
    if (!this.running) return;
    this.setStatus("degraded");
    this.reconnectTimer = setTimeout(() => void this.connect(), RECONNECT_DELAY_MS);
  }

  private handleLine(line: string): void {
    let msg: ReadingMsg;
    try {
      msg = JSON.parse(line) as ReadingMsg;
    } catch {
      return; // skip torn or malformed lines
    }
    this.lastMessageAt = this.now();
    this.setStatus("live");
    for (const fn of this.readingFns) fn(msg);
  }
}
