/** JSON shapes of the gateway HTTP API (/api/v1). */

export type MetricName =
  | "temperature"
  | "humidity"
  | "light"
  | "pressure"
  | "door"
  | "motion"
  | "relay"
  | "outdoor_temperature"
  | "camera_count"
  | "presence";

export type ComfortFlag = "ok" | "below_band" | "above_band";
export type DeviceState = "online" | "stale" | "offline";
export type RelayActual = "on" | "off" | "unknown";
export type RelayMode = "auto" | "manual";

/** One reading, as stored rows, latest listings and stream lines carry it. */
export interface ReadingMsg {
  device_id: string;
  room_id: string;
  metric: MetricName;
  value: number;
  unit: string;
  ts: string;
}

export interface DeviceInfo {
  device_id: string;
  protocol: string;
  room_id: string;
  metrics: MetricName[];
  poll_interval: number | null;
  state: DeviceState;
  last_seen: string | null;
}

export interface DeviceListResponse {
  devices: DeviceInfo[];
}

export interface MetricComfort {
  score: number;
  flag: ComfortFlag;
  mean_value: number;
  count: number;
}

export interface ComfortResponse {
  room: string;
  window_s: number;
  overall: number | null;
  metrics: Partial<Record<MetricName, MetricComfort>>;
  light: string | null;
  occupancy: number | null;
  presence: boolean | null;
}

export interface OccupancyStep {
  ts: string;
  count: number;
}

export interface OccupancyResponse {
  room: string;
  count: number;
  steps: OccupancyStep[];
  annotations: { kind: string; value: number; ts: string }[];
}

export interface PredictionsResponse {
  room: string;
  metric: MetricName;
  hours: (number | null)[];
}

export interface LatestResponse {
  room: string;
  readings: ReadingMsg[];
}

export interface RelayInfo {
  relay_id: string;
  actual: RelayActual;
  mode: RelayMode;
  manual_expires: string | null;
  pending: boolean;
}

export interface RelayResponse {
  relay: RelayInfo;
  sent?: boolean;
}

export type RelayRequest =
  | { mode: "manual"; state: "on" | "off" }
  | { mode: "auto"; state: "on" | "off" }
  | { mode: "clear" };

export interface BandSpec {
  lo: number;
  hi: number;
  span: number;
}

export interface BandsResponse {
  bands: Record<string, BandSpec>;
}

export interface FeedbackEntry {
  room: string;
  vote: number;
  note: string;
  ts: string;
}

export interface FeedbackListResponse {
  feedback: FeedbackEntry[];
}

export interface FeedbackPostResponse {
  ok: boolean;
  count: number;
}

export interface ApiErrorBody {
  error: string;
  detail: string;
}

export type StreamStatus = "connecting" | "live" | "degraded";
