/** GatewayClient units: request shapes on the wire and error mapping. */

import { describe, expect, it } from "vitest";

import { ApiError, GatewayClient } from "../src/api.js";
import type { DeviceListResponse } from "../src/types.js";
import { fixtureFetch, jsonResponse, session } from "./helpers.js";

function client(overrides: Parameters<typeof fixtureFetch>[0] = []) {
  const { fetchFn, calls } = fixtureFetch(overrides);
  return { client: new GatewayClient("http://gw:18080", fetchFn), calls };
}

describe("request shapes", () => {
  it("hits the documented paths with encoded query params", async () => {
    const { client: c, calls } = client();
    await c.devices();
    // a room name with a space exercises encoding; the 404 itself is fine
    await c.comfort("dorm 1").catch(() => null);
    await c.predictions("dorm1", "temperature");
    await c.latest("lab");
    await c.feedback("dorm1");
    expect(calls.map((x) => x.url)).toEqual([
      "http://gw:18080/api/v1/devices",
      "http://gw:18080/api/v1/comfort?room=dorm%201",
      "http://gw:18080/api/v1/predictions?room=dorm1&metric=temperature",
      "http://gw:18080/api/v1/readings/latest?room=lab",
      "http://gw:18080/api/v1/feedback?room=dorm1",
    ]);
    expect(calls.every((x) => x.method === "GET" && x.body === null)).toBe(true);
  });

  it("serializes relay commands, band edits and feedback as JSON bodies", async () => {
    const { client: c, calls } = client();
    await c.setRelay("lab-lights", { mode: "manual", state: "on" });
    await c.setRelay("lab-lights", { mode: "clear" });
    await c.putBands({ humidity: { lo: 40, hi: 50, span: 15 } });
    await c.postFeedback("dorm1", -1, "stuffy");
    expect(calls.map((x) => [x.method, x.url.replace("http://gw:18080", ""), x.body])).toEqual([
      ["POST", "/api/v1/relays/lab-lights", '{"mode":"manual","state":"on"}'],
      ["POST", "/api/v1/relays/lab-lights", '{"mode":"clear"}'],
      ["PUT", "/api/v1/comfort-bands", '{"humidity":{"lo":40,"hi":50,"span":15}}'],
      ["POST", "/api/v1/feedback", '{"room":"dorm1","vote":-1,"note":"stuffy"}'],
    ]);
  });

  it("returns bodies verbatim", async () => {
    const { client: c } = client();
    const listing = await c.devices();
    expect(listing).toEqual(session.devices.body as DeviceListResponse);
  });
});

describe("error mapping", () => {
  it("raises ApiError carrying status, code and detail from the gateway", async () => {
    const { client: c } = client([
      {
        method: "POST",
        path: "/api/v1/relays/lab-lights",
        reply: () => jsonResponse(session.relay.auto_conflict),
      },
    ]);
    const err = await c
      .setRelay("lab-lights", { mode: "auto", state: "off" })
      .then(() => null, (e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(409);
    expect((err as ApiError).code).toBe("MANUAL_OVERRIDE");
    expect((err as ApiError).detail).toBe("relay pinned on by manual override");
  });

  it("maps a dead socket to status 0", async () => {
    const failing = (() => Promise.reject(new TypeError("fetch failed"))) as unknown as typeof fetch;
    const c = new GatewayClient("http://gw:18080", failing);
    const err = await c.devices().then(() => null, (e: unknown) => e);
    expect((err as ApiError).status).toBe(0);
    expect((err as ApiError).code).toBe("UNREACHABLE");
  });

  it("falls back to the HTTP status when the error body is not JSON", async () => {
    const html = (() =>
      Promise.resolve(
        new Response("<h1>boom</h1>", { status: 500, statusText: "Internal Server Error" }),
      )) as unknown as typeof fetch;
    const c = new GatewayClient("http://gw:18080", html);
    const err = await c.devices().then(() => null, (e: unknown) => e);
    expect((err as ApiError).status).toBe(500);
    expect((err as ApiError).code).toBe("HTTP_500");
  });
});
