/** Wires API client, reading stream and renderers together. The constructor
 * takes the stream as an interface so tests can drive recorded sessions. */

import { ApiError, GatewayClient } from "./api.js";
import {
  renderBandEditor,
  renderFeedback,
  renderRelays,
  renderRooms,
  renderStatus,
  validateBands,
} from "./render.js";
import type { RenderHandlers } from "./render.js";
import type { DashboardState } from "./state.js";
import {
  applyComfort,
  applyDevices,
  applyLatest,
  applyPrediction,
  applyReading,
  applyRelay,
  newState,
} from "./state.js";
import type { ReadingSource } from "./stream.js";
import type { FeedbackEntry, MetricName } from "./types.js";

const COMFORT_REFRESH_MS = 15_000;
const PREDICTION_METRIC: MetricName = "temperature";

export class DashboardApp {
  readonly state: DashboardState = newState();
  private readonly feedback = new Map<string, FeedbackEntry[]>();
  private readonly sections = {
    status: document.createElement("div"),
    rooms: document.createElement("main"),
    relays: document.createElement("section"),
    bands: document.createElement("section"),
    feedback: document.createElement("section"),
  };
  private refreshTimer: ReturnType<typeof setInterval> | null = null;
  private readonly handlers: RenderHandlers = {
    onRelayToggle: (relayId, next) => this.toggleRelay(relayId, next),
    onRelayClear: (relayId) => this.clearRelay(relayId),
    onBandSave: (metric, lo, hi, span) => this.saveBand(metric, lo, hi, span),
    onFeedback: (room, vote, note) => this.sendFeedback(room, vote, note),
  };

  constructor(
    private readonly root: HTMLElement,
    private readonly client: GatewayClient,
    private readonly stream: ReadingSource,
    private readonly refreshMs: number = COMFORT_REFRESH_MS,
  ) {}

  async start(): Promise<void> {
    this.sections.status.className = "statusbar";
    this.sections.rooms.className = "rooms";
    this.sections.relays.className = "relays";
    this.sections.bands.className = "bands";
    this.sections.feedback.className = "feedback";
    this.root.replaceChildren(
      this.sections.status,
      this.sections.rooms,
      this.sections.relays,
      this.sections.bands,
      this.sections.feedback,
    );

    this.stream.onReading((msg) => {
      applyReading(this.state, msg);
      renderRooms(this.sections.rooms, this.state);
      renderRelays(this.sections.relays, this.state, this.handlers);
      renderStatus(this.sections.status, this.state);
    });
    this.stream.onStatus((status) => {
      this.state.streamStatus = status;
      renderStatus(this.sections.status, this.state);
    });

    await this.initialLoad();
    this.renderAll();
    this.stream.start();
    this.refreshTimer = setInterval(() => void this.refreshComfort(), this.refreshMs);
  }

  stop(): void {
    this.stream.stop();
    if (this.refreshTimer !== null) clearInterval(this.refreshTimer);
    this.refreshTimer = null;
  }

  private async initialLoad(): Promise<void> {
    try {
      const listing = await this.client.devices();
      applyDevices(this.state, listing.devices);
    } catch {
      return; // gateway unreachable; the stream watchdog will show degraded
    }
    const rooms = [...this.state.rooms.keys()];
    await Promise.all(
      rooms.map(async (room) => {
        try {
          applyLatest(this.state, await this.client.latest(room));
        } catch {
          // a room can exist with no stored readings yet
        }
        try {
          applyComfort(this.state, await this.client.comfort(room));
        } catch {
          // comfort needs data in the window; skip until there is some
        }
        try {
          applyPrediction(this.state, await this.client.predictions(room, PREDICTION_METRIC));
        } catch {
          // no profile learned yet
        }
        try {
          const listing = await this.client.feedback(room);
          this.feedback.set(room, listing.feedback);
        } catch {
          // feedback listing is optional decoration
        }
      }),
    );
  }

  private async refreshComfort(): Promise<void> {
    for (const room of this.state.rooms.keys()) {
      try {
        applyComfort(this.state, await this.client.comfort(room));
        applyPrediction(this.state, await this.client.predictions(room, PREDICTION_METRIC));
      } catch {
        continue;
      }
    }
    renderRooms(this.sections.rooms, this.state);
  }

  renderAll(): void {
    renderStatus(this.sections.status, this.state);
    renderRooms(this.sections.rooms, this.state);
    renderRelays(this.sections.relays, this.state, this.handlers);
    renderBandEditor(this.sections.bands, this.state, this.handlers);
    renderFeedback(this.sections.feedback, this.state, this.feedback, this.handlers);
  }

  private toggleRelay(relayId: string, next: "on" | "off"): void {
    this.state.relayInflight.add(relayId);
    this.state.relayErrors.delete(relayId);
    renderRelays(this.sections.relays, this.state, this.handlers);
    void this.client
      .setRelay(relayId, { mode: "manual", state: next })
      .then((resp) => applyRelay(this.state, resp))
      .catch((err) => {
        this.state.relayInflight.delete(relayId);
        this.state.relayErrors.set(relayId, this.describe(err));
      })
      .then(() => renderRelays(this.sections.relays, this.state, this.handlers));
  }

  private clearRelay(relayId: string): void {
    this.state.relayInflight.add(relayId);
    this.state.relayErrors.delete(relayId);
    renderRelays(this.sections.relays, this.state, this.handlers);
    void this.client
      .setRelay(relayId, { mode: "clear" })
      .then((resp) => applyRelay(this.state, resp))
      .catch((err) => {
        this.state.relayInflight.delete(relayId);
        this.state.relayErrors.set(relayId, this.describe(err));
      })
      .then(() => renderRelays(this.sections.relays, this.state, this.handlers));
  }

  private saveBand(metric: string, lo: number, hi: number, span: number): void {
    this.state.bandNotice = null;
    const problem = validateBands(lo, hi, span);
    if (problem !== null) {
      // rejected before any request leaves the browser
      this.state.bandError = `${metric}: ${problem}`;
      renderBandEditor(this.sections.bands, this.state, this.handlers);
      return;
    }
    this.state.bandError = null;
    void this.client
      .putBands({ [metric]: { lo, hi, span } })
      .then(() => {
        this.state.bandNotice = `${metric} band saved`;
        return this.refreshComfort();
      })
      .catch((err) => {
        this.state.bandError = this.describe(err);
      })
      .then(() => renderBandEditor(this.sections.bands, this.state, this.handlers));
  }

  private sendFeedback(room: string, vote: number, note: string): void {
    void this.client
      .postFeedback(room, vote, note)
      .then(() => this.client.feedback(room))
      .then((listing) => {
        this.feedback.set(room, listing.feedback);
        renderFeedback(this.sections.feedback, this.state, this.feedback, this.handlers);
      })
      .catch(() => {
        // leave the previous listing in place
      });
  }

  private describe(err: unknown): string {
    if (err instanceof ApiError) return err.detail;
    return String(err);
  }
}
