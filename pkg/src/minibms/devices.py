"""Socket-served device simulators standing in for the BLE and Z-Wave hardware.

Each device owns one TCP listen endpoint and serves one peer at a time;
frame handling within a device is serialized. Under a stepped clock the
devices never act on their own: scripted pushes are triggered by the
simulation driver, so timestamps come out of the frozen sim instant.
"""

from __future__ import annotations

import logging
import math
import socket
import threading

from . import wire
from .model import Metric
from .signals import SimDeviceConfig

log = logging.getLogger(__name__)

CHAR_BY_METRIC = {
    Metric.TEMPERATURE: wire.CHAR_TEMPERATURE,
    Metric.HUMIDITY: wire.CHAR_HUMIDITY,
    Metric.LIGHT: wire.CHAR_LIGHT,
    Metric.PRESSURE: wire.CHAR_PRESSURE,
}
METRIC_BY_CHAR = {v: k for k, v in CHAR_BY_METRIC.items()}

CMD_BY_METRIC = {Metric.DOOR: wire.CMD_DOOR, Metric.MOTION: wire.CMD_MOTION}


def recv_exact(sock: socket.socket, n: int) -> bytes | None:
    """Read exactly n bytes; None on EOF/timeout/reset."""
    buf = b""
    while len(buf) < n:
        try:
            chunk = sock.recv(n - len(buf))
        except (socket.timeout, OSError):
            return None
        if not chunk:
            return None
        buf += chunk
    return buf


def read_ble_frame(sock: socket.socket) -> bytes | None:
    """Read one BLE frame off a stream using the kind byte for sizing."""
    head = recv_exact(sock, 1)
    if head is None:
        return None
    kind = head[0]
    if kind == wire.BLE_REQUEST:
        rest = recv_exact(sock, 3)
    elif kind == wire.BLE_RESPONSE:
        rest = recv_exact(sock, 11)
    elif kind == wire.BLE_SCAN_RESPONSE:
        count = recv_exact(sock, 1)
        if count is None:
            return None
        tail = recv_exact(sock, 6 * count[0] + 1)
        rest = count + tail if tail is not None else None
    else:
        return head  # will fail BAD_SOF in decode
    return head + rest if rest is not None else None


class _SocketDevice:
    """Listen/accept scaffolding shared by the simulated devices."""

    def __init__(self, cfg: SimDeviceConfig, clock, host: str = "127.0.0.1", port: int = 0):
        self.cfg = cfg
        self.clock = clock
        self.device_id = cfg.descriptor.device_id
        self._listener = socket.create_server((host, port))
        self.endpoint = self._listener.getsockname()[:2]
        self._conn: socket.socket | None = None
        self._write_lock = threading.Lock()
        self._stopping = threading.Event()
        self._peer_ready = threading.Event()
        self._thread = threading.Thread(target=self._accept_loop,
                                        name=f"dev-{self.device_id}", daemon=True)

    def start(self):
        self._thread.start()
        return self

    def stop(self):
        self._stopping.set()
        try:
            self._listener.shutdown(socket.SHUT_RDWR)  # wakes a blocked accept()
        except OSError:
            pass
        try:
            self._listener.close()
        except OSError:
            pass
        with self._write_lock:
            conn = self._conn  # serve loop may clear the attribute concurrently
        if conn is not None:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                conn.close()
            except OSError:
                pass
        self._thread.join(timeout=2.0)

    def wait_peer(self, timeout: float = 2.0) -> bool:
        """Block until a peer connection has been accepted."""
        return self._peer_ready.wait(timeout)

    def _accept_loop(self):
        self._listener.settimeout(0.5)
        while not self._stopping.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            conn.settimeout(None)
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._conn = conn
            self._peer_ready.set()
            try:
                self._serve(conn)
            except OSError:
                pass
            finally:
                if self._conn is conn:
                    self._conn = None
                    self._peer_ready.clear()
                try:
                    conn.close()
                except OSError:
                    pass

    def _serve(self, conn: socket.socket):  # pragma: no cover - overridden
        raise NotImplementedError

    def _send(self, data: bytes) -> bool:
        with self._write_lock:
            conn = self._conn
            if conn is None:
                log.warning("%s: no peer connected, dropping %d bytes", self.device_id, len(data))
                return False
            try:
                conn.sendall(data)
                return True
            except OSError:
                log.warning("%s: peer write failed", self.device_id)
                return False


class BleDevice(_SocketDevice):
    """Serves READ / SUBSCRIBE / SCAN over the BLE-like framing."""

    def __init__(self, cfg, clock, host="127.0.0.1", port=0):
        super().__init__(cfg, clock, host, port)
        for metric in cfg.signals:
            if metric not in CHAR_BY_METRIC:
                raise ValueError(f"{self.device_id}: metric {metric.value} is not a BLE characteristic")

    def _response(self, char_id: int) -> bytes:
        now = self.clock.now()
        metric = METRIC_BY_CHAR.get(char_id)
        model = self.cfg.signals.get(metric) if metric is not None else None
        if model is None:
            frame = wire.BleResponse(char_id=char_id, status=wire.STATUS_UNKNOWN_CHAR,
                                     value_raw=0, ts=math.floor(now))
        else:
            raw = wire.fixed_point_raw(model.value_at(metric, now))
            frame = wire.BleResponse(char_id=char_id, status=wire.STATUS_OK,
                                     value_raw=raw, ts=math.floor(now))
        return wire.encode_ble(frame)

    def _scan_response(self) -> bytes:
        macs = self.cfg.macs_at(self.clock.now())
        return wire.encode_ble(wire.BleScanResponse(macs=macs))

    def _serve(self, conn: socket.socket):
        while not self._stopping.is_set():
            raw = recv_exact(conn, 4)
            if raw is None:
                return
            try:
                frame = wire.decode_ble(raw)
            except wire.DecodeError as e:
                log.warning("%s: malformed request (%s), no reply", self.device_id, e.code)
                continue
            if not isinstance(frame, wire.BleRequest):
                log.warning("%s: unexpected frame kind from peer", self.device_id)
                continue
            if frame.op == wire.OP_READ:
                self._send(self._response(frame.char_id))
            elif frame.op == wire.OP_SCAN:
                self._send(self._scan_response())
            elif frame.op == wire.OP_SUBSCRIBE:
                self._send(self._response(frame.char_id))
                self._start_pusher(frame.char_id)
            else:
                log.warning("%s: unknown op 0x%02X, no reply", self.device_id, frame.op)

    def _start_pusher(self, char_id: int):
        # Autonomous notify stream only makes sense against a wall-paced
        # clock; a stepped clock has no passage of time between events.
        compression = getattr(self.clock, "compression", None)
        if compression is None:
            return
        interval = self.cfg.descriptor.poll_interval or 60.0
        wall_period = interval / compression

        def push_loop():
            while not self._stopping.wait(wall_period):
                if not self._send(self._response(char_id)):
                    return

        threading.Thread(target=push_loop, daemon=True,
                         name=f"sub-{self.device_id}-{char_id}").start()


class ZwaveDevice(_SocketDevice):
    """Plays a door/motion event script and actuates a relay with acks."""

    def __init__(self, cfg, clock, host="127.0.0.1", port=0):
        super().__init__(cfg, clock, host, port)
        self.node_id = cfg.descriptor.address
        push_metrics = [m for m in cfg.descriptor.metrics if m in CMD_BY_METRIC]
        self._push_cmd = CMD_BY_METRIC[push_metrics[0]] if push_metrics else None
        self._seq = 0
        self._emitted = 0
        self.relay_state = wire.ZW_OFF

    def _next_seq(self) -> int:
        seq = self._seq
        self._seq = (self._seq + 1) & 0xFF  # wraps 255 -> 0
        return seq

    def emit_due(self, now: float) -> int:
        """Push every scripted event with ts <= now that was not yet sent."""
        sent = 0
        while self._emitted < len(self.cfg.events):
            ts, value = self.cfg.events[self._emitted]
            if ts > now:
                break
            if self._push_cmd is None:
                log.warning("%s: scripted event but no push metric", self.device_id)
            else:
                frame = wire.ZwaveFrame(
                    node_id=self.node_id,
                    cmd_class=self._push_cmd,
                    value=wire.ZW_ON if value else wire.ZW_OFF,
                    seq=self._next_seq(),
                )
                if self._send(wire.encode_zwave(frame)):
                    sent += 1
            self._emitted += 1
        return sent

    def pending_events(self) -> int:
        return len(self.cfg.events) - self._emitted

    def _serve(self, conn: socket.socket):
        while not self._stopping.is_set():
            raw = recv_exact(conn, 6)
            if raw is None:
                return
            try:
                frame = wire.decode_zwave(raw)
            except wire.DecodeError as e:
                log.warning("%s: bad frame from peer (%s), ignored", self.device_id, e.code)
                continue
            if frame.cmd_class == wire.CMD_RELAY_SET:
                self.relay_state = frame.value
                ack = wire.ZwaveFrame(node_id=self.node_id, cmd_class=wire.CMD_RELAY_ACK,
                                      value=frame.value, seq=frame.seq)
                self._send(wire.encode_zwave(ack))
            else:
                log.warning("%s: unsupported cmd_class 0x%02X ignored", self.device_id, frame.cmd_class)
