/** Shared test machinery: the recorded gateway session, a fetch stub that
 * replays it, and a hand-driven stream so tests never need a live gateway. */

import { GatewayClient } from "../src/api.js";
import { DashboardApp } from "../src/app.js";
import type { ReadingSource } from "../src/stream.js";
import type { ReadingMsg, StreamStatus } from "../src/types.js";

export interface Recorded {
  status: number;
  body: unknown;
}

export interface SessionFixture {
  recorded_at: string;
  scenario: string;
  stream: ReadingMsg[];
  devices: Recorded;
  comfort: Record<string, Recorded>;
  occupancy: Recorded;
  predictions: Recorded;
  latest: Record<string, Recorded>;
  relay: Record<"manual_on" | "auto_conflict" | "clear" | "unknown", Recorded>;
  bands: Record<"ok" | "bad", Recorded>;
  feedback: Record<"post" | "list", Recorded>;
}

import sessionJson from "./fixtures/session.json";

export const session: SessionFixture = sessionJson as unknown as SessionFixture;

export function jsonResponse(rec: Recorded): Response {
  return new Response(JSON.stringify(rec.body), {
    status: rec.status,
    headers: { "Content-Type": "application/json" },
  });
}

export interface Route {
  method: string;
  path: string;
  reply: () => Response | Promise<Response>;
}

export interface CallLog {
  method: string;
  url: string;
  body: string | null;
}

const NOT_FOUND: Recorded = { status: 404, body: { error: "NOT_FOUND", detail: "no route" } };
const NO_DATA: Recorded = { status: 404, body: { error: "NO_DATA", detail: "no readings" } };

function defaultReply(method: string, url: URL): Response {
  const path = url.pathname;
  const room = url.searchParams.get("room") ?? "";
  if (method === "GET" && path === "/api/v1/devices") {
    return jsonResponse(session.devices);
  }
  if (method === "GET" && path === "/api/v1/comfort") {
    const rec = session.comfort[room];
    return jsonResponse(rec ?? NO_DATA);
  }
  if (method === "GET" && path === "/api/v1/readings/latest") {
    const rec = session.latest[room];
    return jsonResponse(rec ?? NO_DATA);
  }
  if (method === "GET" && path === "/api/v1/occupancy") {
    return jsonResponse(session.occupancy);
  }
  if (method === "GET" && path === "/api/v1/predictions") {
    if (room === "dorm1" && url.searchParams.get("metric") === "temperature") {
      return jsonResponse(session.predictions);
    }
    return jsonResponse(NO_DATA);
  }
  if (method === "GET" && path === "/api/v1/feedback") {
    if (room === "dorm1") return jsonResponse(session.feedback.list);
    return jsonResponse({ status: 200, body: { feedback: [] } });
  }
  if (method === "POST" && path.startsWith("/api/v1/relays/")) {
    return jsonResponse(session.relay.manual_on);
  }
  if (method === "PUT" && path === "/api/v1/comfort-bands") {
    return jsonResponse(session.bands.ok);
  }
  if (method === "POST" && path === "/api/v1/feedback") {
    return jsonResponse(session.feedback.post);
  }
  return jsonResponse(NOT_FOUND);
}

/** Fetch stub replaying the recorded session, ahead of per-test overrides. */
export function fixtureFetch(overrides: Route[] = []): {
  fetchFn: typeof fetch;
  calls: CallLog[];
} {
  const calls: CallLog[] = [];
  const fetchFn = (async (input: RequestInfo | URL, init?: RequestInit) => {
    const urlStr = typeof input === "string" ? input : input instanceof URL ? input.href : input.url;
    const method = (init?.method ?? "GET").toUpperCase();
    const body = typeof init?.body === "string" ? init.body : null;
    calls.push({ method, url: urlStr, body });
    const url = new URL(urlStr, "http://gateway.test");
    for (const route of overrides) {
      if (route.method === method && url.pathname === route.path) {
        return route.reply();
      }
    }
    return defaultReply(method, url);
  }) as typeof fetch;
  return { fetchFn, calls };
}

export function deferred<T>(): { promise: Promise<T>; resolve: (value: T) => void } {
  let resolve!: (value: T) => void;
  const promise = new Promise<T>((res) => {
    resolve = res;
  });
  return { promise, resolve };
}

export class FakeStream implements ReadingSource {
  started = false;
  private readingFns: Array<(msg: ReadingMsg) => void> = [];
  private statusFns: Array<(status: StreamStatus) => void> = [];

  start(): void {
    this.started = true;
  }

  stop(): void {
    this.started = false;
  }

  onReading(fn: (msg: ReadingMsg) => void): void {
    this.readingFns.push(fn);
  }

  onStatus(fn: (status: StreamStatus) => void): void {
    this.statusFns.push(fn);
  }

  push(msg: ReadingMsg): void {
    for (const fn of this.readingFns) fn(msg);
  }

  setStatus(status: StreamStatus): void {
    for (const fn of this.statusFns) fn(status);
  }
}

export interface Mounted {
  app: DashboardApp;
  root: HTMLElement;
  stream: FakeStream;
  calls: CallLog[];
}

export async function mountApp(overrides: Route[] = []): Promise<Mounted> {
  const { fetchFn, calls } = fixtureFetch(overrides);
  const client = new GatewayClient("", fetchFn);
  const stream = new FakeStream();
  const root = document.createElement("div");
  document.body.appendChild(root);
  const app = new DashboardApp(root, client, stream);
  await app.start();
  return { app, root, stream, calls };
}

export function byTestId(root: ParentNode, id: string): HTMLElement | null {
  return root.querySelector(`[data-testid="${id}"]`);
}

export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
