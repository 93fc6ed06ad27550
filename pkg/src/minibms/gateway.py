"""Central gateway: device registry, polling, event intake, orchestration.

Pulls BLE-style sensors on fixed-rate schedules, accepts Z-Wave-style push
frames and mesh-delivered payloads, and fans every accepted reading out to
the store (first, durably), the live stream, the latest-value table, the
hourly profiles, and the automation engine's snapshot inputs.

Liveness: a device is online while now - last_seen <= 2x its poll interval
(push devices use a 300 s base), stale up to 5x, offline beyond. Five
consecutive poll faults suspend polling until the device shows life again.
"""

from __future__ import annotations

import json
import heapq
import logging
import socket
import threading
from dataclasses import dataclass, field
from queue import SimpleQueue

from . import wire
from .analytics import (
    AnalyticsError,
    ComfortBand,
    DEFAULT_BANDS,
    FeedbackRecord,
    HourlyProfile,
    OccupancyEvent,
    WeatherClient,
    update_profile,
)
from .automation import AutomationEngine, RelayCommand, Snapshot
from .clock import SimClock
from .devices import read_ble_frame, recv_exact
from .model import (
    DeviceDescriptor,
    DeviceProtocol,
    Metric,
    Reading,
    format_mac,
    iso_ts,
    parse_mac,
    validate_reading,
)
from .tstore import StoreError, TimeSeriesStore

log = logging.getLogger(__name__)

POLL_TIMEOUT_SIM_S = 2.0
PUSH_BASE_INTERVAL_S = 300.0  # liveness base for push (non-polled) devices
FAULT_LIMIT = 5
DEFAULT_POLL_INTERVAL_S = 60.0

CHAR_BY_METRIC = {
    Metric.TEMPERATURE: wire.CHAR_TEMPERATURE,
    Metric.HUMIDITY: wire.CHAR_HUMIDITY,
    Metric.LIGHT: wire.CHAR_LIGHT,
    Metric.PRESSURE: wire.CHAR_PRESSURE,
}
METRIC_BY_CHAR = {v: k for k, v in CHAR_BY_METRIC.items()}


class GatewayError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass
class DeviceRecord:
    descriptor: DeviceDescriptor
    endpoint: tuple[str, int] | None = None
    last_seen: float | None = None
    consecutive_faults: int = 0
    suspended: bool = False

    @property
    def device_id(self) -> str:
        return self.descriptor.device_id


@dataclass
class PollJob:
    device_id: str
    metric: Metric
    char_id: int
    interval: float
    next_due: float


class Registry:
    """Device table with liveness derived from last_seen."""

    def __init__(self):
        self._devices: dict[str, DeviceRecord] = {}
        self._by_address: dict[tuple[DeviceProtocol, int], str] = {}
        self._lock = threading.Lock()

    def register(self, descriptor: DeviceDescriptor,
                 endpoint: tuple[str, int] | None = None) -> DeviceRecord:
        try:
            descriptor.validate()
        except ValueError as err:
            raise GatewayError("INVALID_DESCRIPTOR", str(err)) from None
        if not isinstance(descriptor.protocol, DeviceProtocol):
            raise GatewayError("UNSUPPORTED_PROTOCOL", str(descriptor.protocol))
        with self._lock:
            if descriptor.device_id in self._devices:
                raise GatewayError("DUPLICATE_ID", descriptor.device_id)
            record = DeviceRecord(descriptor=descriptor, endpoint=endpoint)
            self._devices[descriptor.device_id] = record
            if isinstance(descriptor.address, int):
                self._by_address[(descriptor.protocol, descriptor.address)] = \
                    descriptor.device_id
            return record

    def get(self, device_id: str) -> DeviceRecord:
        try:
            return self._devices[device_id]
        except KeyError:
            raise GatewayError("UNKNOWN_DEVICE", device_id) from None

    def maybe(self, device_id: str) -> DeviceRecord | None:
        return self._devices.get(device_id)

    def by_address(self, protocol: DeviceProtocol, address: int) -> DeviceRecord | None:
        device_id = self._by_address.get((protocol, address))
        return self._devices.get(device_id) if device_id else None

    def mark_seen(self, device_id: str, now: float):
        record = self.get(device_id)
        record.last_seen = now
        record.consecutive_faults = 0
        record.suspended = False

    def liveness(self, record: DeviceRecord, now: float) -> str:
        if record.suspended:
            return "offline"
        if record.last_seen is None:
            return "offline"
        base = (record.descriptor.poll_interval
                if record.descriptor.protocol is DeviceProtocol.BLE_SIM
                and record.descriptor.poll_interval
                else PUSH_BASE_INTERVAL_S)
        age = now - record.last_seen
        if age <= 2 * base:
            return "online"
        if age <= 5 * base:
            return "stale"
        return "offline"

    def devices(self) -> list[DeviceRecord]:
        return [self._devices[k] for k in sorted(self._devices)]

    def rooms(self) -> set[str]:
        return {r.descriptor.room_id for r in self._devices.values()
                if r.descriptor.room_id}


class Gateway:
    def __init__(self, store: TimeSeriesStore, clock, *, sim_start: float,
                 bands: dict[Metric, ComfortBand] | None = None,
                 weather: WeatherClient | None = None,
                 watched_macs: dict[str, str] | None = None):
        self.store = store
        self.clock = clock
        self.sim_start = sim_start
        self.registry = Registry()
        self.engine: AutomationEngine | None = None
        self.bands: dict[Metric, ComfortBand] = dict(bands or DEFAULT_BANDS)
        self.weather = weather
        self.watched_macs = dict(watched_macs or {})  # room_id -> MAC
        self.feedback: list[FeedbackRecord] = []
        self.profile = HourlyProfile()
        self.ingested = 0

        self._latest: dict[tuple[str, Metric], Reading] = {}
        self._occ_events: dict[str, list[OccupancyEvent]] = {}
        self._occ_counts: dict[str, int] = {}
        self._scan_history: dict[str, list[tuple[float, tuple[str, ...]]]] = {}
        self._jobs: list[tuple[float, str, int, PollJob]] = []
        self._conns: dict[str, socket.socket] = {}
        self._zw_seq: dict[str, int] = {}
        self._subscribers: dict[int, SimpleQueue] = {}
        self._next_sub = 0
        self._last_weather_ts: float | None = None
        self._lock = threading.RLock()
        # wall-clock guard for socket reads; sim timeout is logical
        if isinstance(clock, SimClock):
            self._io_guard = max(0.05, POLL_TIMEOUT_SIM_S / clock.compression)
        else:
            self._io_guard = 1.0

    # --- registration ------------------------------------------------------

    def register_device(self, descriptor: DeviceDescriptor,
                        endpoint: tuple[str, int] | None = None,
                        now: float | None = None) -> DeviceRecord:
        record = self.registry.register(descriptor, endpoint)
        if descriptor.room_id:
            self._occ_events.setdefault(descriptor.room_id, [])
            self._occ_counts.setdefault(descriptor.room_id, 0)
        if descriptor.protocol is DeviceProtocol.BLE_SIM:
            if endpoint is None:
                raise GatewayError("INVALID_DESCRIPTOR",
                                   f"{descriptor.device_id}: ble device needs an endpoint")
            start = self.sim_start if now is None else now
            interval = descriptor.poll_interval or DEFAULT_POLL_INTERVAL_S
            for metric in descriptor.metrics:
                if metric in CHAR_BY_METRIC:
                    char = CHAR_BY_METRIC[metric]
                elif metric is Metric.PRESENCE:
                    char = 0  # served by SCAN, not a characteristic READ
                else:
                    raise GatewayError("INVALID_DESCRIPTOR",
                                       f"{descriptor.device_id}: {metric.value} "
                                       "is not pollable over ble_sim")
                job = PollJob(device_id=descriptor.device_id, metric=metric,
                              char_id=char, interval=interval, next_due=start)
                heapq.heappush(self._jobs, (job.next_due, job.device_id,
                                            job.char_id, job))
        return record

    def attach_engine(self, engine: AutomationEngine):
        self.engine = engine

    def poll_jobs(self) -> list[PollJob]:
        return [entry[3] for entry in sorted(self._jobs)]

    # --- polling -----------------------------------------------------------

    def next_due(self) -> float | None:
        return self._jobs[0][0] if self._jobs else None

    def run_due(self, now: float) -> int:
        """Execute every poll job due by `now`; fixed-rate rescheduling."""
        executed = 0
        while self._jobs and self._jobs[0][0] <= now:
            _, _, _, job = heapq.heappop(self._jobs)
            record = self.registry.get(job.device_id)
            if not record.suspended:
                self.poll_once(job, job.next_due)
                executed += 1
            job.next_due += job.interval  # no drift accumulation
            heapq.heappush(self._jobs, (job.next_due, job.device_id,
                                        job.char_id, job))
        return executed

    def _connection(self, record: DeviceRecord) -> socket.socket | None:
        device_id = record.device_id
        conn = self._conns.get(device_id)
        if conn is not None:
            return conn
        if record.endpoint is None:
            return None
        try:
            conn = socket.create_connection(record.endpoint, timeout=self._io_guard)
            conn.settimeout(self._io_guard)
        except OSError:
            return None
        self._conns[device_id] = conn
        return conn

    def _drop_connection(self, device_id: str):
        conn = self._conns.pop(device_id, None)
        if conn is not None:
            try:
                conn.close()
            except OSError:
                pass

    def _fault(self, record: DeviceRecord, code: str) -> str:
        record.consecutive_faults += 1
        log.warning("%s: poll fault %s (%d consecutive)",
                    record.device_id, code, record.consecutive_faults)
        if record.consecutive_faults >= FAULT_LIMIT and not record.suspended:
            record.suspended = True
            log.warning("%s: %d consecutive faults, polling suspended",
                        record.device_id, record.consecutive_faults)
        self._drop_connection(record.device_id)
        return code

    def poll_once(self, job: PollJob, now: float) -> str:
        record = self.registry.get(job.device_id)
        conn = self._connection(record)
        if conn is None:
            return self._fault(record, "TIMEOUT")
        if job.metric is Metric.PRESENCE:
            request = wire.BleRequest(op=wire.OP_SCAN, char_id=0)
        else:
            request = wire.BleRequest(op=wire.OP_READ, char_id=job.char_id)
        try:
            conn.sendall(wire.encode_ble(request))
        except OSError:
            return self._fault(record, "TIMEOUT")
        raw = read_ble_frame(conn)
        if raw is None:
            return self._fault(record, "TIMEOUT")
        try:
            frame = wire.decode_ble(raw)
        except wire.DecodeError as err:
            return self._fault(record, err.code)

        if job.metric is Metric.PRESENCE:
            if not isinstance(frame, wire.BleScanResponse):
                return self._fault(record, "BAD_FRAME")
            return self._ingest_scan(record, frame, now)
        if not isinstance(frame, wire.BleResponse):
            return self._fault(record, "BAD_FRAME")
        if frame.status == wire.STATUS_UNKNOWN_CHAR:
            return self._fault(record, "UNKNOWN_CHAR")
        reading = Reading(device_id=record.device_id,
                          room_id=record.descriptor.room_id,
                          metric=job.metric, value=frame.value,
                          ts=float(frame.ts))
        self.registry.mark_seen(record.device_id, now)
        self._ingest(reading)
        return "ok"

    def _ingest_scan(self, record: DeviceRecord, frame: wire.BleScanResponse,
                     now: float) -> str:
        room = record.descriptor.room_id
        macs = tuple(format_mac(m) for m in frame.macs)
        history = self._scan_history.setdefault(room, [])
        history.append((now, macs))
        if len(history) > 5000:
            del history[:1000]
        self.registry.mark_seen(record.device_id, now)
        watched = self.watched_macs.get(room)
        if watched is not None:
            target = parse_mac(watched)
            seen = any(wire_mac == target for wire_mac in frame.macs)
            self._ingest(Reading(device_id=record.device_id, room_id=room,
                                 metric=Metric.PRESENCE,
                                 value=1.0 if seen else 0.0, ts=now))
        return "ok"

    # --- intake ------------------------------------------------------------

    def intake_zwave(self, frame: wire.ZwaveFrame, now: float) -> str:
        record = self.registry.by_address(DeviceProtocol.ZWAVE_SIM, frame.node_id)
        if record is None:
            log.warning("UNKNOWN_NODE: z-wave frame from unregistered node %d",
                        frame.node_id)
            return "unknown_node"
        self.registry.mark_seen(record.device_id, now)
        room = record.descriptor.room_id
        on = frame.value == wire.ZW_ON
        if frame.cmd_class == wire.CMD_DOOR:
            kind = "door_open" if on else "door_closed"
            self._note_occupancy(OccupancyEvent(room, kind, 1 if on else 0, now))
            self._ingest(Reading(record.device_id, room, Metric.DOOR,
                                 1.0 if on else 0.0, now))
        elif frame.cmd_class == wire.CMD_MOTION:
            self._note_occupancy(OccupancyEvent(room, "motion", 1 if on else 0, now))
            self._ingest(Reading(record.device_id, room, Metric.MOTION,
                                 1.0 if on else 0.0, now))
        elif frame.cmd_class == wire.CMD_RELAY_ACK:
            if self.engine is None:
                log.warning("relay ack with no automation engine attached")
                return "ok"
            try:
                self.engine.reconcile_ack(record.device_id, frame.value, now)
            except Exception as err:
                log.warning("relay %s: %s", record.device_id, err)
                return "unexpected_ack"
            self._ingest(Reading(record.device_id, room, Metric.RELAY,
                                 1.0 if on else 0.0, now))
        else:
            log.warning("%s: unexpected z-wave command class 0x%02X",
                        record.device_id, frame.cmd_class)
            return "bad_command"
        return "ok"

    def intake_mesh(self, src: int, payload: bytes, now: float) -> str:
        record = self.registry.by_address(DeviceProtocol.ZIGBEE_SIM, src)
        if record is None:
            log.warning("UNKNOWN_NODE: mesh payload from unregistered node %d", src)
            return "unknown_node"
        try:
            metric_name, value, ts = wire.decode_mesh_reading(payload)
        except wire.DecodeError as err:
            log.warning("%s: undecodable mesh payload (%s)", record.device_id, err.code)
            return "bad_payload"
        self.registry.mark_seen(record.device_id, now)
        self._ingest(Reading(record.device_id, record.descriptor.room_id,
                             Metric(metric_name), value, float(ts)))
        return "ok"

    def intake_camera(self, device_id: str, count: int, now: float) -> str:
        record = self.registry.get(device_id)
        room = record.descriptor.room_id
        self.registry.mark_seen(device_id, now)
        self._note_occupancy(OccupancyEvent(room, "camera_count", count, now))
        self._ingest(Reading(device_id, room, Metric.CAMERA_COUNT, float(count), now))
        return "ok"

    def _note_occupancy(self, event: OccupancyEvent):
        with self._lock:
            self._occ_events.setdefault(event.room_id, []).append(event)
            if event.kind == "camera_count":
                self._occ_counts[event.room_id] = max(0, event.value)

    def _ingest(self, reading: Reading):
        problems = validate_reading(reading)
        if problems:
            log.warning("%s: dropping invalid reading (%s)",
                        reading.device_id, "; ".join(problems))
            return
        try:
            self.store.append(reading)  # durable before anything is visible
        except StoreError as err:
            log.warning("%s: store rejected reading (%s)", reading.device_id, err)
            return
        with self._lock:
            self.ingested += 1
            key = (reading.room_id, reading.metric)
            held = self._latest.get(key)
            if held is None or reading.ts >= held.ts:
                self._latest[key] = reading
        update_profile(self.profile, reading)
        self._publish(reading)

    # --- stream ------------------------------------------------------------

    def subscribe(self) -> tuple[int, SimpleQueue]:
        with self._lock:
            self._next_sub += 1
            queue: SimpleQueue = SimpleQueue()
            self._subscribers[self._next_sub] = queue
            return self._next_sub, queue

    def unsubscribe(self, token: int):
        with self._lock:
            self._subscribers.pop(token, None)

    def _publish(self, reading: Reading):
        with self._lock:
            targets = list(self._subscribers.values())
        if not targets:
            return
        line = json.dumps(reading.to_json(), separators=(",", ":"))
        for queue in targets:
            queue.put(line)

    # --- automation --------------------------------------------------------

    def snapshot(self, now: float) -> Snapshot:
        with self._lock:
            metrics = {key: r.value for key, r in self._latest.items()}
            occupancy = dict(self._occ_counts)
        return Snapshot(now=now, metrics=metrics, occupancy=occupancy)

    def automation_tick(self, now: float) -> list[RelayCommand]:
        if self.engine is None:
            return []
        commands = self.engine.evaluate(self.snapshot(now))
        commands += self.engine.check_timeouts(now)
        for command in commands:
            self.send_relay_command(command, now)
        return commands

    def send_relay_command(self, command: RelayCommand, now: float) -> bool:
        record = self.registry.get(command.relay_id)
        node = record.descriptor.address
        seq = self._zw_seq.get(command.relay_id, 0)
        self._zw_seq[command.relay_id] = (seq + 1) & 0xFF
        frame = wire.ZwaveFrame(node_id=node, cmd_class=wire.CMD_RELAY_SET,
                                value=wire.ZW_ON if command.target == "on" else wire.ZW_OFF,
                                seq=seq)
        if self.engine is not None:
            self.engine.note_sent(command.relay_id, command.target, now)
        conn = self._connection(record)
        if conn is None:
            log.warning("relay %s: unreachable, command not sent", command.relay_id)
            return False
        try:
            conn.sendall(wire.encode_zwave(frame))
        except OSError:
            self._drop_connection(command.relay_id)
            log.warning("relay %s: send failed", command.relay_id)
            return False
        # wait for the ack inline; interleaved push frames are consumed too
        for _ in range(8):
            raw = recv_exact(conn, 6)
            if raw is None:
                return True  # no ack yet; timeout path takes over
            try:
                ack = wire.decode_zwave(raw)
            except wire.DecodeError as err:
                log.warning("relay %s: undecodable frame (%s)", command.relay_id, err.code)
                continue
            self.intake_zwave(ack, now)
            if ack.cmd_class == wire.CMD_RELAY_ACK and ack.node_id == node:
                return True
        return True

    def drain_zwave(self, device_id: str, count: int, now: float) -> int:
        """Read exactly `count` push frames from a device connection."""
        record = self.registry.get(device_id)
        conn = self._connection(record)
        if conn is None:
            log.warning("%s: cannot drain, no connection", device_id)
            return 0
        got = 0
        for _ in range(count):
            raw = recv_exact(conn, 6)
            if raw is None:
                break
            try:
                frame = wire.decode_zwave(raw)
            except wire.DecodeError as err:
                log.warning("%s: dropping undecodable push frame (%s)",
                            device_id, err.code)
                continue
            self.intake_zwave(frame, now)
            got += 1
        return got

    # --- weather -----------------------------------------------------------

    def refresh_weather(self, now: float) -> bool:
        if self.weather is None:
            return False
        try:
            sample = self.weather.fetch_outdoor(now)
        except AnalyticsError as err:
            log.warning("weather: %s", err)
            return False
        if sample.reading.ts == self._last_weather_ts:
            return False  # cached sample already recorded
        self._last_weather_ts = sample.reading.ts
        self._ingest(sample.reading)
        return True

    # --- shared read state for the API layer --------------------------------

    def latest_for_room(self, room_id: str) -> list[Reading]:
        with self._lock:
            rows = [r for (room, _), r in self._latest.items() if room == room_id]
        return sorted(rows, key=lambda r: r.metric.value)

    def occupancy_events(self, room_id: str) -> list[OccupancyEvent]:
        with self._lock:
            return list(self._occ_events.get(room_id, []))

    def occupancy_count(self, room_id: str) -> int:
        with self._lock:
            return self._occ_counts.get(room_id, 0)

    def scan_history(self, room_id: str) -> list[tuple[float, tuple[str, ...]]]:
        with self._lock:
            return list(self._scan_history.get(room_id, []))

    def add_feedback(self, record: FeedbackRecord):
        with self._lock:
            self.feedback.append(record)

    def room_devices(self, room_id: str) -> list[DeviceRecord]:
        return [r for r in self.registry.devices()
                if r.descriptor.room_id == room_id]

    def device_summaries(self, now: float) -> list[dict]:
        out = []
        for record in self.registry.devices():
            d = record.descriptor
            out.append({
                "device_id": d.device_id,
                "protocol": d.protocol.value,
                "room_id": d.room_id,
                "metrics": [m.value for m in d.metrics],
                "poll_interval": d.poll_interval,
                "state": self.registry.liveness(record, now),
                "last_seen": iso_ts(record.last_seen) if record.last_seen is not None else None,
            })
        return out

    def close(self):
        for device_id in list(self._conns):
            self._drop_connection(device_id)
