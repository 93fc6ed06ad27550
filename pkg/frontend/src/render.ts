/** DOM renderers. Each section is rebuilt from state on change; at desk scale
 * (a handful of rooms) a full rebuild is cheaper than diffing. */

import type { DashboardState, RoomState, TileState } from "./state.js";
import { predictionNow, sortedRelays, sortedRooms } from "./state.js";
import type { ComfortFlag, FeedbackEntry, MetricName, RelayInfo } from "./types.js";

export interface RenderHandlers {
  onRelayToggle: (relayId: string, next: "on" | "off") => void;
  onRelayClear: (relayId: string) => void;
  onBandSave: (metric: string, lo: number, hi: number, span: number) => void;
  onFeedback: (room: string, vote: number, note: string) => void;
}

/** Client-side gate for the band editor. Returns null when acceptable. */
export function validateBands(lo: number, hi: number, span: number): string | null {
  if (!Number.isFinite(lo) || !Number.isFinite(hi) || !Number.isFinite(span)) {
    return "band values must be numbers";
  }
  if (lo >= hi) return `band needs lo < hi, got [${lo}, ${hi}]`;
  if (span <= 0) return `band span must be positive, got ${span}`;
  return null;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls !== undefined) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function testId(node: HTMLElement, id: string): void {
  node.setAttribute("data-testid", id);
}

const METRIC_ORDER: MetricName[] = [
  "temperature",
  "humidity",
  "light",
  "pressure",
  "presence",
  "motion",
  "door",
  "camera_count",
  "relay",
];

function flagClass(flag: ComfortFlag | null): string {
  if (flag === "below_band") return "flag-below";
  if (flag === "above_band") return "flag-above";
  if (flag === "ok") return "flag-ok";
  return "flag-none";
}

function fmtValue(metric: MetricName, tile: TileState): string {
  if (metric === "presence" || metric === "motion" || metric === "door") {
    return tile.value >= 0.5 ? "yes" : "no";
  }
  if (metric === "relay") return tile.value >= 0.5 ? "on" : "off";
  if (metric === "camera_count") return `${Math.round(tile.value)}`;
  return `${tile.value.toFixed(1)} ${tile.unit}`;
}

function renderTile(room: RoomState, metric: MetricName, tile: TileState): HTMLElement {
  const comfort = room.comfort?.metrics[metric];
  const card = el("div", `tile ${flagClass(comfort?.flag ?? null)}`);
  testId(card, `tile-${room.room}-${metric}`);
  card.appendChild(el("div", "tile-metric", metric.replace("_", " ")));
  const valueEl = el("div", "tile-value", fmtValue(metric, tile));
  testId(valueEl, `tile-value-${room.room}-${metric}`);
  card.appendChild(valueEl);
  if (comfort !== undefined) {
    const flagEl = el("div", "tile-flag", comfort.flag.replace("_", " "));
    testId(flagEl, `tile-flag-${room.room}-${metric}`);
    card.appendChild(flagEl);
  }
  card.appendChild(el("div", "tile-ts", tile.ts));
  return card;
}

function renderRoomCard(room: RoomState): HTMLElement {
  const card = el("section", "room");
  testId(card, `room-${room.room}`);
  const head = el("header", "room-head");
  head.appendChild(el("h2", undefined, room.room));

  const badges = el("div", "room-badges");
  const comfort = room.comfort;
  if (comfort !== null) {
    if (comfort.overall !== null) {
      const score = el("span", "badge", `comfort ${comfort.overall.toFixed(2)}`);
      testId(score, `comfort-overall-${room.room}`);
      badges.appendChild(score);
    }
    if (comfort.light !== null) {
      const light = el("span", "badge", `light ${comfort.light}`);
      testId(light, `comfort-light-${room.room}`);
      badges.appendChild(light);
    }
    if (comfort.occupancy !== null) {
      const occ = el("span", "badge", `occupancy ${comfort.occupancy}`);
      testId(occ, `occupancy-${room.room}`);
      badges.appendChild(occ);
    }
    if (comfort.presence !== null) {
      const pres = el("span", "badge", comfort.presence ? "present" : "away");
      testId(pres, `presence-${room.room}`);
      badges.appendChild(pres);
    }
  }
  const predicted = predictionNow(room);
  if (predicted !== null && room.prediction !== null) {
    const pred = el(
      "span",
      "badge badge-pred",
      `${room.prediction.metric} this hour ~ ${predicted.toFixed(1)}`,
    );
    testId(pred, `prediction-${room.room}`);
    badges.appendChild(pred);
  }
  head.appendChild(badges);
  card.appendChild(head);

  const grid = el("div", "tiles");
  for (const metric of METRIC_ORDER) {
    const tile = room.tiles.get(metric);
    if (tile !== undefined) grid.appendChild(renderTile(room, metric, tile));
  }
  if (grid.childElementCount === 0) {
    grid.appendChild(el("p", "empty", "no readings yet"));
  }
  card.appendChild(grid);
  return card;
}

export function renderRooms(container: HTMLElement, state: DashboardState): void {
  container.replaceChildren();
  const rooms = sortedRooms(state);
  if (rooms.length === 0) {
    const empty = el("p", "empty", "no rooms reported yet; waiting for the gateway");
    testId(empty, "rooms-empty");
    container.appendChild(empty);
    return;
  }
  for (const room of rooms) container.appendChild(renderRoomCard(room));
}

function renderRelayRow(relay: RelayInfo, state: DashboardState, handlers: RenderHandlers): HTMLElement {
  const row = el("div", "relay");
  testId(row, `relay-${relay.relay_id}`);
  row.appendChild(el("span", "relay-name", relay.relay_id));

  const actual = el("span", `relay-actual relay-${relay.actual}`, relay.actual);
  testId(actual, `relay-actual-${relay.relay_id}`);
  row.appendChild(actual);

  const mode = el("span", "badge", relay.mode);
  testId(mode, `relay-mode-${relay.relay_id}`);
  row.appendChild(mode);
  if (relay.mode === "manual" && relay.manual_expires !== null) {
    row.appendChild(el("span", "relay-expires", `until ${relay.manual_expires}`));
  }

  const inflight = state.relayInflight.has(relay.relay_id);
  if (inflight || relay.pending) {
    const pending = el("span", "badge badge-pending", "pending");
    testId(pending, `relay-pending-${relay.relay_id}`);
    row.appendChild(pending);
  }

  const next = relay.actual === "on" ? "off" : "on";
  const toggle = el("button", "relay-toggle", `turn ${next}`);
  testId(toggle, `relay-toggle-${relay.relay_id}`);
  toggle.disabled = inflight;
  toggle.addEventListener("click", () => handlers.onRelayToggle(relay.relay_id, next));
  row.appendChild(toggle);

  if (relay.mode === "manual") {
    const clear = el("button", "relay-clear", "back to auto");
    testId(clear, `relay-clear-${relay.relay_id}`);
    clear.disabled = inflight;
    clear.addEventListener("click", () => handlers.onRelayClear(relay.relay_id));
    row.appendChild(clear);
  }

  const err = state.relayErrors.get(relay.relay_id);
  if (err !== undefined) {
    const msg = el("span", "error", err);
    testId(msg, `relay-error-${relay.relay_id}`);
    row.appendChild(msg);
  }
  return row;
}

export function renderRelays(
  container: HTMLElement,
  state: DashboardState,
  handlers: RenderHandlers,
): void {
  container.replaceChildren();
  const relays = sortedRelays(state);
  if (relays.length === 0) return;
  container.appendChild(el("h2", undefined, "relays"));
  for (const relay of relays) {
    container.appendChild(renderRelayRow(relay, state, handlers));
  }
}

export function renderStatus(container: HTMLElement, state: DashboardState): void {
  container.replaceChildren();
  const badge = el("span", `status status-${state.streamStatus}`, state.streamStatus);
  testId(badge, "stream-status");
  container.appendChild(badge);
  if (state.outdoor !== null) {
    const out = el(
      "span",
      "badge",
      `outdoor ${state.outdoor.value.toFixed(1)} ${state.outdoor.unit}`,
    );
    testId(out, "outdoor");
    container.appendChild(out);
  }
}

export function renderBandEditor(
  container: HTMLElement,
  state: DashboardState,
  handlers: RenderHandlers,
): void {
  container.replaceChildren();
  container.appendChild(el("h2", undefined, "comfort bands"));
  const form = el("form", "band-form");
  testId(form, "band-form");

  const metricSel = el("select");
  testId(metricSel, "band-metric");
  for (const m of ["temperature", "humidity"]) {
    const opt = el("option", undefined, m);
    opt.value = m;
    metricSel.appendChild(opt);
  }
  form.appendChild(metricSel);

  const fields: Record<string, HTMLInputElement> = {};
  for (const name of ["lo", "hi", "span"]) {
    const input = el("input");
    input.type = "number";
    input.step = "any";
    input.placeholder = name;
    testId(input, `band-${name}`);
    fields[name] = input;
    form.appendChild(input);
  }

  const save = el("button", undefined, "save band");
  save.type = "submit";
  testId(save, "band-save");
  form.appendChild(save);

  const err = el("p", "error");
  testId(err, "band-error");
  err.hidden = state.bandError === null;
  if (state.bandError !== null) err.textContent = state.bandError;
  form.appendChild(err);

  const notice = el("p", "notice");
  testId(notice, "band-notice");
  notice.hidden = state.bandNotice === null;
  if (state.bandNotice !== null) notice.textContent = state.bandNotice;
  form.appendChild(notice);

  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    handlers.onBandSave(
      metricSel.value,
      parseFloat(fields["lo"]!.value),
      parseFloat(fields["hi"]!.value),
      parseFloat(fields["span"]!.value),
    );
  });
  container.appendChild(form);
}

export function renderFeedback(
  container: HTMLElement,
  state: DashboardState,
  feedbackByRoom: Map<string, FeedbackEntry[]>,
  handlers: RenderHandlers,
): void {
  container.replaceChildren();
  container.appendChild(el("h2", undefined, "comfort feedback"));
  const form = el("form", "feedback-form");
  testId(form, "feedback-form");

  const roomSel = el("select");
  testId(roomSel, "feedback-room");
  for (const room of sortedRooms(state)) {
    const opt = el("option", undefined, room.room);
    opt.value = room.room;
    roomSel.appendChild(opt);
  }
  form.appendChild(roomSel);

  const voteSel = el("select");
  testId(voteSel, "feedback-vote");
  const votes: Array<[string, string]> = [
    ["1", "comfortable"],
    ["0", "neutral"],
    ["-1", "uncomfortable"],
  ];
  for (const [value, label] of votes) {
    const opt = el("option", undefined, label);
    opt.value = value;
    voteSel.appendChild(opt);
  }
  form.appendChild(voteSel);

  const note = el("input");
  note.type = "text";
  note.placeholder = "note (optional)";
  testId(note, "feedback-note");
  form.appendChild(note);

  const send = el("button", undefined, "send");
  send.type = "submit";
  testId(send, "feedback-send");
  form.appendChild(send);

  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    handlers.onFeedback(roomSel.value, parseInt(voteSel.value, 10), note.value);
    note.value = "";
  });
  container.appendChild(form);

  const list = el("ul", "feedback-list");
  testId(list, "feedback-list");
  for (const [room, entries] of [...feedbackByRoom.entries()].sort()) {
    for (const entry of entries) {
      const item = el(
        "li",
        undefined,
        `${room}: ${entry.vote > 0 ? "+1" : entry.vote < 0 ? "-1" : "0"} ${entry.note} (${entry.ts})`,
      );
      list.appendChild(item);
    }
  }
  container.appendChild(list);
}
