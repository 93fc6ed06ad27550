/** Dashboard state and the pure functions that evolve it. Values are taken
 * verbatim from API payloads; no comfort, occupancy or prediction math here. */

import type {
  ComfortResponse,
  DeviceInfo,
  LatestResponse,
  MetricName,
  PredictionsResponse,
  ReadingMsg,
  RelayInfo,
  RelayResponse,
  StreamStatus,
} from "./types.js";

export interface TileState {
  device_id: string;
  value: number;
  unit: string;
  ts: string;
}

export interface RoomState {
  room: string;
  tiles: Map<MetricName, TileState>;
  comfort: ComfortResponse | null;
  prediction: PredictionsResponse | null;
}

export interface DashboardState {
  rooms: Map<string, RoomState>;
  relays: Map<string, RelayInfo>;
  // relay ids with a POST in flight; rendered as pending until the reply lands
  relayInflight: Set<string>;
  relayErrors: Map<string, string>;
  devices: DeviceInfo[];
  outdoor: TileState | null;
  streamStatus: StreamStatus;
  bandError: string | null;
  bandNotice: string | null;
}

export function newState(): DashboardState {
  return {
    rooms: new Map(),
    relays: new Map(),
    relayInflight: new Set(),
    relayErrors: new Map(),
    devices: [],
    outdoor: null,
    streamStatus: "connecting",
    bandError: null,
    bandNotice: null,
  };
}

export function roomState(state: DashboardState, room: string): RoomState {
  let rs = state.rooms.get(room);
  if (rs === undefined) {
    rs = { room, tiles: new Map(), comfort: null, prediction: null };
    state.rooms.set(room, rs);
  }
  return rs;
}

export function applyDevices(state: DashboardState, devices: DeviceInfo[]): void {
  state.devices = devices;
  for (const dev of devices) {
    if (dev.room_id !== "") roomState(state, dev.room_id);
    if (dev.metrics.includes("relay") && !state.relays.has(dev.device_id)) {
      state.relays.set(dev.device_id, {
        relay_id: dev.device_id,
        actual: "unknown",
        mode: "auto",
        manual_expires: null,
        pending: false,
      });
    }
  }
}

export function applyReading(state: DashboardState, msg: ReadingMsg): void {
  const tile: TileState = {
    device_id: msg.device_id,
    value: msg.value,
    unit: msg.unit,
    ts: msg.ts,
  };
  if (msg.room_id === "") {
    // the weather feed has no room; ISO Z timestamps order lexicographically
    if (state.outdoor === null || state.outdoor.ts <= msg.ts) state.outdoor = tile;
    return;
  }
  const rs = roomState(state, msg.room_id);
  const prev = rs.tiles.get(msg.metric);
  if (prev === undefined || prev.ts <= msg.ts) rs.tiles.set(msg.metric, tile);
  if (msg.metric === "relay") {
    const relay = state.relays.get(msg.device_id);
    if (relay !== undefined) relay.actual = msg.value >= 0.5 ? "on" : "off";
  }
}

export function applyLatest(state: DashboardState, resp: LatestResponse): void {
  for (const msg of resp.readings) applyReading(state, msg);
}

export function applyComfort(state: DashboardState, resp: ComfortResponse): void {
  roomState(state, resp.room).comfort = resp;
}

export function applyPrediction(state: DashboardState, resp: PredictionsResponse): void {
  roomState(state, resp.room).prediction = resp;
}

export function applyRelay(state: DashboardState, resp: RelayResponse): void {
  state.relays.set(resp.relay.relay_id, resp.relay);
  state.relayInflight.delete(resp.relay.relay_id);
  state.relayErrors.delete(resp.relay.relay_id);
}

/** Predicted value for the hour of the room's newest reading, if any. */
export function predictionNow(rs: RoomState): number | null {
  if (rs.prediction === null) return null;
  let newest = "";
  for (const tile of rs.tiles.values()) {
    if (tile.ts > newest) newest = tile.ts;
  }
  if (newest === "") return null;
  const hour = new Date(newest).getUTCHours();
  return rs.prediction.hours[hour] ?? null;
}

export function sortedRooms(state: DashboardState): RoomState[] {
  return [...state.rooms.values()].sort((a, b) => a.room.localeCompare(b.room));
}

export function sortedRelays(state: DashboardState): RelayInfo[] {
  return [...state.relays.values()].sort((a, b) => a.relay_id.localeCompare(b.relay_id));
}
