"""Shared domain vocabulary: metrics, readings, device descriptors."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum


class Metric(str, Enum):
    TEMPERATURE = "temperature"
    HUMIDITY = "humidity"
    LIGHT = "light"
    PRESSURE = "pressure"
    DOOR = "door"
    MOTION = "motion"
    RELAY = "relay"
    OUTDOOR_TEMPERATURE = "outdoor_temperature"
    CAMERA_COUNT = "camera_count"
    PRESENCE = "presence"


_UNITS = {
    Metric.TEMPERATURE: "C",
    Metric.HUMIDITY: "%RH",
    Metric.LIGHT: "lux",
    Metric.PRESSURE: "mbar",
    Metric.DOOR: "bool",
    Metric.MOTION: "bool",
    Metric.RELAY: "bool",
    Metric.OUTDOOR_TEMPERATURE: "C",
    Metric.CAMERA_COUNT: "persons",
    Metric.PRESENCE: "bool",
}

BINARY_METRICS = frozenset(
    {Metric.DOOR, Metric.MOTION, Metric.RELAY, Metric.PRESENCE}
)

# Validation gates per metric: (lo, hi), either side may be None.
_RANGES = {
    Metric.TEMPERATURE: (-60.0, 60.0),
    Metric.OUTDOOR_TEMPERATURE: (-60.0, 60.0),
    Metric.HUMIDITY: (0.0, 100.0),
    Metric.LIGHT: (0.0, None),
    Metric.PRESSURE: (800.0, 1200.0),
    Metric.CAMERA_COUNT: (0.0, None),
}


def canonical_unit(metric: Metric) -> str:
    return _UNITS[Metric(metric)]


def metric_range(metric: Metric) -> tuple[float | None, float | None]:
    """Validation-gate bounds for a metric; binary metrics clamp to [0, 1]."""
    if metric in BINARY_METRICS:
        return (0.0, 1.0)
    return _RANGES.get(metric, (None, None))


class DeviceProtocol(str, Enum):
    BLE_SIM = "ble_sim"
    ZWAVE_SIM = "zwave_sim"
    ZIGBEE_SIM = "zigbee_sim"


def iso_ts(ts: float) -> str:
    """Sim-epoch seconds to ISO-8601 UTC at whole-second precision."""
    dt = datetime.fromtimestamp(math.floor(ts), tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_ts(text: str) -> float:
    dt = datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ")
    return dt.replace(tzinfo=timezone.utc).timestamp()


def day_of(ts: float) -> str:
    return datetime.fromtimestamp(math.floor(ts), tz=timezone.utc).strftime("%Y-%m-%d")


def hour_of(ts: float) -> int:
    return datetime.fromtimestamp(math.floor(ts), tz=timezone.utc).hour


_MAC_RE = re.compile(r"^([0-9A-Fa-f]{2}:){5}[0-9A-Fa-f]{2}$")


def parse_mac(text: str) -> bytes:
    if not _MAC_RE.match(text):
        raise ValueError(f"bad MAC address: {text!r}")
    return bytes(int(p, 16) for p in text.split(":"))


def format_mac(mac: bytes) -> str:
    if len(mac) != 6:
        raise ValueError("MAC must be 6 bytes")
    return ":".join(f"{b:02X}" for b in mac)


@dataclass(frozen=True)
class Reading:
    """One timestamped measurement in its metric's canonical unit."""

    device_id: str
    room_id: str
    metric: Metric
    value: float
    ts: float  # sim-clock seconds since Unix epoch, UTC

    @property
    def unit(self) -> str:
        return canonical_unit(self.metric)

    def to_json(self) -> dict:
        return {
            "device_id": self.device_id,
            "room_id": self.room_id,
            "metric": self.metric.value,
            "value": self.value,
            "unit": self.unit,
            "ts": iso_ts(self.ts),
        }


def validate_reading(r: Reading) -> list[str]:
    """Return every violated invariant; the reading is valid iff empty."""
    violations = []
    if not math.isfinite(r.value):
        violations.append("value not finite")
        return violations
    if r.metric in BINARY_METRICS and r.value not in (0.0, 1.0):
        violations.append(f"{r.metric.value} must be 0 or 1")
    rng = _RANGES.get(r.metric)
    if rng is not None:
        lo, hi = rng
        if lo is not None and r.value < lo:
            if hi is None:
                violations.append(f"{r.metric.value} non-negative")
            else:
                violations.append(f"{r.metric.value} range [{lo:g}, {hi:g}]")
        elif hi is not None and r.value > hi:
            violations.append(f"{r.metric.value} range [{lo:g}, {hi:g}]")
    return violations


@dataclass(frozen=True)
class DeviceDescriptor:
    """Registry entry binding a device id to protocol, address, and room."""

    device_id: str
    protocol: DeviceProtocol
    address: bytes | int  # 6-byte MAC (ble), u8 node id (zwave), u16 node id (zigbee)
    room_id: str
    metrics: tuple[Metric, ...] = field(default_factory=tuple)
    poll_interval: float | None = None  # sim seconds, ble_sim only

    def validate(self) -> None:
        if self.protocol is DeviceProtocol.BLE_SIM:
            if not isinstance(self.address, bytes) or len(self.address) != 6:
                raise ValueError(f"{self.device_id}: ble_sim address must be a 6-byte MAC")
        elif self.protocol is DeviceProtocol.ZWAVE_SIM:
            if not isinstance(self.address, int) or not 0 <= self.address <= 0xFF:
                raise ValueError(f"{self.device_id}: zwave_sim address must be a u8 node id")
        elif self.protocol is DeviceProtocol.ZIGBEE_SIM:
            if not isinstance(self.address, int) or not 0 <= self.address <= 0xFFFF:
                raise ValueError(f"{self.device_id}: zigbee_sim address must be a u16 node id")
        else:  # pragma: no cover - enum is closed
            raise ValueError(f"unsupported protocol {self.protocol}")
