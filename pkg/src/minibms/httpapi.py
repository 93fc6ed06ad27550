"""HTTP/1.1 JSON API over the gateway: reads, stream, relays, bands, feedback.

Mutations are idempotent under retry: re-posting a relay command whose state
already matches sends no second wire frame, and re-putting the same comfort
bands is a no-op. A relay command in auto mode that contradicts an active
manual override of the opposite state is refused with 409.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .analytics import (
    AnalyticsError,
    ComfortBand,
    FeedbackRecord,
    classify_light,
    comfort_report,
    occupancy_ledger,
    predict_day,
    presence,
)
from .automation import AutomationError, RelayCommand
from .gateway import Gateway, GatewayError
from .model import Metric, iso_ts, parse_ts

log = logging.getLogger(__name__)

API_PREFIX = "/api/v1"


class ApiError(Exception):
    def __init__(self, status: int, code: str, detail: str = ""):
        super().__init__(f"{status} {code}: {detail}")
        self.status = status
        self.code = code
        self.detail = detail


def _parse_instant(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        pass
    try:
        return parse_ts(text)
    except ValueError:
        raise ApiError(400, "BAD_TIMESTAMP",
                       f"{text!r} is neither epoch seconds nor ISO-8601 Z") from None


def _parse_metric(text: str) -> Metric:
    try:
        return Metric(text)
    except ValueError:
        raise ApiError(400, "BAD_METRIC", text) from None


class ApiServer:
    def __init__(self, gateway: Gateway, host: str = "127.0.0.1", port: int = 0):
        self.gateway = gateway
        self._stopping = threading.Event()
        api = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):
                log.debug("api: " + fmt, *args)

            def _reply(self, status: int, payload: dict, *, close: bool = False):
                body = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                if close:
                    self.send_header("Connection", "close")
                self.end_headers()
                self.wfile.write(body)

            def _body(self) -> dict:
                length = int(self.headers.get("Content-Length") or 0)
                raw = self.rfile.read(length) if length else b""
                if not raw:
                    raise ApiError(400, "EMPTY_BODY", "expected a JSON body")
                try:
                    parsed = json.loads(raw)
                except json.JSONDecodeError as err:
                    raise ApiError(400, "BAD_JSON", str(err)) from None
                if not isinstance(parsed, dict):
                    raise ApiError(400, "BAD_JSON", "body must be an object")
                return parsed

            def _dispatch(self, method: str):
                parsed = urlparse(self.path)
                params = {k: v[-1] for k, v in parse_qs(parsed.query).items()}
                try:
                    handler = api._route(method, parsed.path)
                    if handler is None:
                        raise ApiError(404, "NOT_FOUND", parsed.path)
                    handler(self, params)
                except ApiError as err:
                    self._reply(err.status, {"error": err.code, "detail": err.detail})
                except (BrokenPipeError, ConnectionResetError):
                    pass
                except Exception:
                    log.exception("api: unhandled error for %s %s", method, self.path)
                    self._reply(500, {"error": "INTERNAL", "detail": ""})

            def do_GET(self):
                self._dispatch("GET")

            def do_POST(self):
                self._dispatch("POST")

            def do_PUT(self):
                self._dispatch("PUT")

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        name="api-server", daemon=True)

    # --- lifecycle ---------------------------------------------------------

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self):
        self._thread.start()
        return self

    def stop(self):
        self._stopping.set()
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(2.0)

    # --- routing -----------------------------------------------------------

    def _route(self, method: str, path: str):
        if not path.startswith(API_PREFIX):
            return None
        rest = path[len(API_PREFIX):]
        if method == "GET":
            flat = {
                "/devices": self._get_devices,
                "/readings": self._get_readings,
                "/readings/latest": self._get_latest,
                "/comfort": self._get_comfort,
                "/occupancy": self._get_occupancy,
                "/predictions": self._get_predictions,
                "/stream": self._get_stream,
                "/feedback": self._get_feedback,
            }
            return flat.get(rest)
        if method == "POST":
            if rest.startswith("/relays/") and "/" not in rest[len("/relays/"):]:
                relay_id = rest[len("/relays/"):]
                return lambda handler, params: self._post_relay(handler, relay_id)
            if rest == "/feedback":
                return self._post_feedback
        if method == "PUT" and rest == "/comfort-bands":
            return self._put_bands
        return None

    # --- helpers -----------------------------------------------------------

    def _now(self) -> float:
        return self.gateway.clock.now()

    def _require_room(self, params: dict) -> str:
        room = params.get("room")
        if not room:
            raise ApiError(400, "MISSING_PARAM", "room is required")
        if room not in self.gateway.registry.rooms():
            raise ApiError(404, "UNKNOWN_ROOM", room)
        return room

    def _room_window(self, room: str, window_s: float, now: float):
        readings = []
        for record in self.gateway.room_devices(room):
            readings.extend(self.gateway.store.query(
                device=record.device_id, from_ts=now - window_s, to_ts=now + 1))
        readings.sort(key=lambda r: (r.ts, r.device_id))
        return readings

    @staticmethod
    def _relay_json(state, now: float) -> dict:
        return {
            "relay_id": state.relay_id,
            "actual": state.actual,
            "mode": state.mode,
            "manual_expires": (iso_ts(state.manual_expires)
                               if state.manual_expires is not None else None),
            "pending": state.pending is not None,
        }

    # --- GET handlers ------------------------------------------------------

    def _get_devices(self, handler, params):
        handler._reply(200, {"devices": self.gateway.device_summaries(self._now())})

    def _get_readings(self, handler, params):
        now = self._now()
        to_ts = _parse_instant(params["to"]) if "to" in params else now + 1
        from_ts = _parse_instant(params["from"]) if "from" in params else now - 3600
        if from_ts > to_ts:
            raise ApiError(400, "BAD_RANGE", "from must not exceed to")
        metric = _parse_metric(params["metric"]) if "metric" in params else None
        device = params.get("device")
        if device is not None and self.gateway.registry.maybe(device) is None \
                and not (self.gateway.store.root / device).is_dir():
            raise ApiError(404, "UNKNOWN_DEVICE", device)
        rows = self.gateway.store.query(device=device, metric=metric,
                                        from_ts=from_ts, to_ts=to_ts)
        handler._reply(200, {"readings": [r.to_json() for r in rows]})

    def _get_latest(self, handler, params):
        room = self._require_room(params)
        rows = self.gateway.latest_for_room(room)
        handler._reply(200, {"room": room,
                             "readings": [r.to_json() for r in rows]})

    def _get_comfort(self, handler, params):
        room = self._require_room(params)
        now = self._now()
        window_s = float(params.get("window", 3600))
        readings = self._room_window(room, window_s, now)
        report = comfort_report(readings, self.gateway.bands)
        try:
            light = classify_light(readings)
        except AnalyticsError:
            light = None
        watched = self.gateway.watched_macs.get(room)
        present = None
        if watched is not None:
            present = presence(self.gateway.scan_history(room), watched, now)
        handler._reply(200, {
            "room": room,
            "window_s": window_s,
            "overall": report.overall,
            "metrics": {
                metric.value: {
                    "score": mc.score,
                    "flag": mc.flag,
                    "mean_value": mc.mean_value,
                    "count": mc.count,
                } for metric, mc in report.metrics.items()
            },
            "light": light,
            "occupancy": self.gateway.occupancy_count(room),
            "presence": present,
        })

    def _get_occupancy(self, handler, params):
        room = self._require_room(params)
        series = occupancy_ledger(self.gateway.occupancy_events(room),
                                  start_ts=self.gateway.sim_start)
        handler._reply(200, {
            "room": room,
            "count": self.gateway.occupancy_count(room),
            "steps": [{"ts": iso_ts(ts), "count": count}
                      for ts, count in series.steps],
            "annotations": [{"kind": e.kind, "value": e.value, "ts": iso_ts(e.ts)}
                            for e in series.annotations],
        })

    def _get_predictions(self, handler, params):
        room = self._require_room(params)
        if "metric" not in params:
            raise ApiError(400, "MISSING_PARAM", "metric is required")
        metric = _parse_metric(params["metric"])
        hours = predict_day(self.gateway.profile, room, metric)
        handler._reply(200, {"room": room, "metric": metric.value, "hours": hours})

    def _get_feedback(self, handler, params):
        handler._reply(200, {"feedback": [
            {"room": f.room_id, "vote": f.vote, "note": f.note, "ts": iso_ts(f.ts)}
            for f in self.gateway.feedback
        ]})

    def _get_stream(self, handler, params):
        token, feed = self.gateway.subscribe()
        try:
            handler.send_response(200)
            handler.send_header("Content-Type", "application/x-ndjson")
            handler.send_header("Cache-Control", "no-cache")
            handler.send_header("Connection", "close")
            handler.end_headers()
            handler.wfile.flush()
            while not self._stopping.is_set():
                try:
                    line = feed.get(timeout=0.25)
                except queue.Empty:
                    continue
                handler.wfile.write(line.encode() + b"\n")
                handler.wfile.flush()
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass
        finally:
            self.gateway.unsubscribe(token)

    # --- mutations ---------------------------------------------------------

    def _post_relay(self, handler, relay_id: str):
        body = handler._body()
        mode = body.get("mode")
        state = body.get("state")
        if mode not in ("manual", "auto", "clear"):
            raise ApiError(400, "BAD_MODE", "mode must be manual, auto or clear")
        engine = self.gateway.engine
        if engine is None:
            raise ApiError(503, "NO_AUTOMATION", "automation engine not attached")
        now = self._now()
        try:
            relay = engine.state(relay_id)
        except AutomationError:
            raise ApiError(404, "UNKNOWN_RELAY", relay_id) from None

        if mode == "clear":
            engine.apply_manual(relay_id, None, now, clear=True)
            handler._reply(200, {"relay": self._relay_json(relay, now)})
            return

        if state not in ("on", "off"):
            raise ApiError(400, "BAD_STATE", "state must be on or off")

        manual_active = (relay.mode == "manual"
                         and (relay.manual_expires is None
                              or now < relay.manual_expires))
        if mode == "manual":
            if manual_active and relay.actual == state:
                relay.manual_expires = now + engine.manual_hold_s
                handler._reply(200, {"relay": self._relay_json(relay, now),
                                     "sent": False})
                return
            command = engine.apply_manual(relay_id, state, now)
            sent = self.gateway.send_relay_command(command, now)
            handler._reply(200, {"relay": self._relay_json(relay, now),
                                 "sent": sent})
            return

        # mode == "auto": programmatic actuation that respects manual override
        if manual_active:
            if relay.actual != state:
                raise ApiError(409, "MANUAL_OVERRIDE",
                               f"relay pinned {relay.actual} by manual override")
            handler._reply(200, {"relay": self._relay_json(relay, now),
                                 "sent": False})
            return
        if relay.actual == state:
            handler._reply(200, {"relay": self._relay_json(relay, now),
                                 "sent": False})
            return
        try:
            sent = self.gateway.send_relay_command(
                RelayCommand(relay_id, state, reason="api"), now)
        except GatewayError:
            raise ApiError(404, "UNKNOWN_RELAY", relay_id) from None
        handler._reply(200, {"relay": self._relay_json(relay, now), "sent": sent})

    def _post_feedback(self, handler, params):
        body = handler._body()
        room = body.get("room")
        if not room or room not in self.gateway.registry.rooms():
            raise ApiError(404, "UNKNOWN_ROOM", str(room))
        vote = body.get("vote")
        if vote not in (-1, 0, 1):
            raise ApiError(400, "BAD_VOTE", "vote must be -1, 0 or 1")
        note = body.get("note", "")
        if not isinstance(note, str):
            raise ApiError(400, "BAD_NOTE", "note must be a string")
        record = FeedbackRecord(room_id=room, vote=vote, note=note, ts=self._now())
        self.gateway.add_feedback(record)
        handler._reply(200, {"ok": True, "count": len(self.gateway.feedback)})

    def _put_bands(self, handler, params):
        body = handler._body()
        updates: dict[Metric, ComfortBand] = {}
        for name, spec in body.items():
            metric = _parse_metric(name)
            if not isinstance(spec, dict):
                raise ApiError(400, "BAD_BAND", f"{name}: expected an object")
            try:
                band = ComfortBand(metric, float(spec["lo"]), float(spec["hi"]),
                                   float(spec["span"]))
            except (KeyError, TypeError, ValueError) as err:
                raise ApiError(400, "BAD_BAND", f"{name}: {err}") from None
            updates[metric] = band
        if not updates:
            raise ApiError(400, "BAD_BAND", "no bands supplied")
        self.gateway.bands.update(updates)
        handler._reply(200, {"bands": {
            m.value: {"lo": b.lo, "hi": b.hi, "span": b.span}
            for m, b in self.gateway.bands.items()
        }})
