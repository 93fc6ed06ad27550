/** Typed client for the gateway HTTP API. Every dashboard number comes
 * through here; nothing is computed client-side. */

import type {
  ApiErrorBody,
  BandSpec,
  BandsResponse,
  ComfortResponse,
  DeviceListResponse,
  FeedbackListResponse,
  FeedbackPostResponse,
  LatestResponse,
  MetricName,
  OccupancyResponse,
  PredictionsResponse,
  RelayRequest,
  RelayResponse,
} from "./types.js";

export type FetchFn = typeof fetch;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    readonly detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

export class GatewayClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchFn = (...args) => fetch(...args),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.baseUrl + path, {
        method,
        headers: body === undefined ? undefined : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, "UNREACHABLE", String(err));
    }
    if (!resp.ok) {
      let parsed: ApiErrorBody = { error: "HTTP_" + resp.status, detail: resp.statusText };
      try {
        parsed = (await resp.json()) as ApiErrorBody;
      } catch {
        // non-JSON error body; keep the status-derived shape
      }
      throw new ApiError(resp.status, parsed.error, parsed.detail);
    }
    return (await resp.json()) as T;
  }

  devices(): Promise<DeviceListResponse> {
    return this.request("GET", "/api/v1/devices");
  }

  comfort(room: string): Promise<ComfortResponse> {
    return this.request("GET", `/api/v1/comfort?room=${encodeURIComponent(room)}`);
  }

  occupancy(room: string): Promise<OccupancyResponse> {
    return this.request("GET", `/api/v1/occupancy?room=${encodeURIComponent(room)}`);
  }

  predictions(room: string, metric: MetricName): Promise<PredictionsResponse> {
    return this.request(
      "GET",
      `/api/v1/predictions?room=${encodeURIComponent(room)}&metric=${metric}`,
    );
  }

  latest(room: string): Promise<LatestResponse> {
    return this.request("GET", `/api/v1/readings/latest?room=${encodeURIComponent(room)}`);
  }

  setRelay(relayId: string, req: RelayRequest): Promise<RelayResponse> {
    return this.request("POST", `/api/v1/relays/${encodeURIComponent(relayId)}`, req);
  }

  putBands(bands: Record<string, BandSpec>): Promise<BandsResponse> {
    return this.request("PUT", "/api/v1/comfort-bands", bands);
  }

  postFeedback(room: string, vote: number, note: string): Promise<FeedbackPostResponse> {
    return this.request("POST", "/api/v1/feedback", { room, vote, note });
  }

  feedback(room: string): Promise<FeedbackListResponse> {
    return this.request("GET", `/api/v1/feedback?room=${encodeURIComponent(room)}`);
  }
}
