"""Bit-exact wire formats for the three simulated protocols.

BLE-like frames (CRC-8 integrity):
    request        B1 | op | char_id | crc                        (4 bytes)
    response       B2 | char_id | status | value:i32le | ts:u32le | crc  (12 bytes)
    scan_response  B3 | count | count*6 MAC bytes | crc           (3 + 6n bytes)

Z-Wave-like frames (XOR integrity):
    5A | node_id | cmd_class | value | seq | chk                  (6 bytes)

Mesh frames (XOR integrity):
    5B | type | src:u16le | dst:u16le | seq | ttl | hops | plen | payload | chk

The trailing integrity byte always covers every preceding byte. Values on
the wire are signed 32-bit little-endian fixed-point x100.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import reduce
from operator import xor

BLE_REQUEST = 0xB1
BLE_RESPONSE = 0xB2
BLE_SCAN_RESPONSE = 0xB3

OP_READ = 0x01
OP_SUBSCRIBE = 0x02
OP_SCAN = 0x03

CHAR_TEMPERATURE = 0x01
CHAR_HUMIDITY = 0x02
CHAR_LIGHT = 0x03
CHAR_PRESSURE = 0x04

STATUS_OK = 0x00
STATUS_UNKNOWN_CHAR = 0x01

ZWAVE_SOF = 0x5A
CMD_DOOR = 0x20
CMD_MOTION = 0x30
CMD_RELAY_SET = 0x40
CMD_RELAY_ACK = 0x41
ZW_OFF = 0x00
ZW_ON = 0xFF

MESH_SOF = 0x5B
MESH_DATA = 0x00
MESH_RREQ = 0x01
MESH_RREP = 0x02
MESH_BROADCAST = 0xFFFF
MESH_MAX_PAYLOAD = 64


class DecodeError(ValueError):
    """Frame rejected; `code` names the first failed check."""

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code


class EncodeError(ValueError):
    pass


# CRC-8, polynomial 0x07, init 0x00, MSB-first, no reflection, no final XOR.
def _build_crc8_table() -> list[int]:
    table = []
    for byte in range(256):
        reg = byte
        for _ in range(8):
            reg = ((reg << 1) ^ 0x07 if reg & 0x80 else reg << 1) & 0xFF
        table.append(reg)
    return table


_CRC8_TABLE = _build_crc8_table()


def crc8(data: bytes) -> int:
    reg = 0x00
    for b in data:
        reg = _CRC8_TABLE[reg ^ b]
    return reg


def xor_checksum(data: bytes) -> int:
    return reduce(xor, data, 0x00)


def fixed_point_raw(value: float) -> int:
    """round(value*100) to nearest, ties away from zero, as a signed 32-bit int."""
    scaled = abs(value) * 100.0
    raw = int(scaled + 0.5)
    if value < 0:
        raw = -raw
    if not -(2**31) <= raw < 2**31:
        raise EncodeError(f"fixed-point overflow: {value}")
    return raw


def encode_fixed_point(value: float) -> bytes:
    return struct.pack("<i", fixed_point_raw(value))


def decode_fixed_point(data: bytes) -> float:
    (raw,) = struct.unpack("<i", data)
    return raw / 100.0


@dataclass(frozen=True)
class BleRequest:
    op: int
    char_id: int


@dataclass(frozen=True)
class BleResponse:
    char_id: int
    status: int
    value_raw: int  # fixed-point x100
    ts: int  # sim epoch seconds

    @property
    def value(self) -> float:
        return self.value_raw / 100.0


@dataclass(frozen=True)
class BleScanResponse:
    macs: tuple[bytes, ...]


BleFrame = "BleRequest | BleResponse | BleScanResponse"


def encode_ble(frame) -> bytes:
    if isinstance(frame, BleRequest):
        body = bytes([BLE_REQUEST, frame.op, frame.char_id])
    elif isinstance(frame, BleResponse):
        body = bytes([BLE_RESPONSE, frame.char_id, frame.status])
        body += struct.pack("<iI", frame.value_raw, frame.ts)
    elif isinstance(frame, BleScanResponse):
        if any(len(m) != 6 for m in frame.macs):
            raise EncodeError("MAC entries must be 6 bytes")
        if len(frame.macs) > 0xFF:
            raise EncodeError("too many MACs for one scan response")
        body = bytes([BLE_SCAN_RESPONSE, len(frame.macs)]) + b"".join(frame.macs)
    else:
        raise EncodeError(f"not a BLE frame: {frame!r}")
    return body + bytes([crc8(body)])


def decode_ble(data: bytes):
    if len(data) < 3:
        raise DecodeError("BAD_LENGTH", f"{len(data)} bytes")
    kind = data[0]
    if kind not in (BLE_REQUEST, BLE_RESPONSE, BLE_SCAN_RESPONSE):
        raise DecodeError("BAD_SOF", f"0x{kind:02X}")
    if crc8(data[:-1]) != data[-1]:
        raise DecodeError("BAD_CRC")
    if kind == BLE_REQUEST:
        if len(data) != 4:
            raise DecodeError("BAD_LENGTH", f"request is 4 bytes, got {len(data)}")
        return BleRequest(op=data[1], char_id=data[2])
    if kind == BLE_RESPONSE:
        if len(data) != 12:
            raise DecodeError("BAD_LENGTH", f"response is 12 bytes, got {len(data)}")
        value_raw, ts = struct.unpack("<iI", data[3:11])
        return BleResponse(char_id=data[1], status=data[2], value_raw=value_raw, ts=ts)
    count = data[1]
    if len(data) != 3 + 6 * count:
        raise DecodeError("BAD_LENGTH", f"scan with {count} MACs is {3 + 6 * count} bytes")
    macs = tuple(bytes(data[2 + 6 * i : 8 + 6 * i]) for i in range(count))
    return BleScanResponse(macs=macs)


@dataclass(frozen=True)
class ZwaveFrame:
    node_id: int
    cmd_class: int
    value: int
    seq: int


def encode_zwave(frame: ZwaveFrame) -> bytes:
    for name in ("node_id", "cmd_class", "value", "seq"):
        v = getattr(frame, name)
        if not 0 <= v <= 0xFF:
            raise EncodeError(f"{name} out of u8 range: {v}")
    body = bytes([ZWAVE_SOF, frame.node_id, frame.cmd_class, frame.value, frame.seq])
    return body + bytes([xor_checksum(body)])


def decode_zwave(data: bytes) -> ZwaveFrame:
    if len(data) != 6:
        raise DecodeError("BAD_LENGTH", f"frame is 6 bytes, got {len(data)}")
    if data[0] != ZWAVE_SOF:
        raise DecodeError("BAD_SOF", f"0x{data[0]:02X}")
    if xor_checksum(data[:5]) != data[5]:
        raise DecodeError("BAD_CHK")
    return ZwaveFrame(node_id=data[1], cmd_class=data[2], value=data[3], seq=data[4])


@dataclass(frozen=True)
class MeshFrame:
    type: int
    src: int
    dst: int
    seq: int
    ttl: int
    hops: int
    payload: bytes = b""


def encode_mesh(frame: MeshFrame) -> bytes:
    if len(frame.payload) > MESH_MAX_PAYLOAD:
        raise EncodeError(f"payload over {MESH_MAX_PAYLOAD} bytes")
    for name, width in (("type", 0xFF), ("seq", 0xFF), ("ttl", 0xFF),
                        ("hops", 0xFF), ("src", 0xFFFF), ("dst", 0xFFFF)):
        v = getattr(frame, name)
        if not 0 <= v <= width:
            raise EncodeError(f"{name} out of range: {v}")
    body = bytes([MESH_SOF, frame.type])
    body += struct.pack("<HH", frame.src, frame.dst)
    body += bytes([frame.seq, frame.ttl, frame.hops, len(frame.payload)])
    body += frame.payload
    return body + bytes([xor_checksum(body)])


def decode_mesh(data: bytes) -> MeshFrame:
    if len(data) < 11:
        raise DecodeError("BAD_LENGTH", f"{len(data)} bytes")
    if data[0] != MESH_SOF:
        raise DecodeError("BAD_SOF", f"0x{data[0]:02X}")
    if xor_checksum(data[:-1]) != data[-1]:
        raise DecodeError("BAD_CHK")
    plen = data[9]
    if len(data) != 11 + plen:
        raise DecodeError("BAD_LENGTH", f"plen {plen} needs {11 + plen} bytes, got {len(data)}")
    if plen > MESH_MAX_PAYLOAD:
        raise DecodeError("BAD_LENGTH", f"plen {plen} over {MESH_MAX_PAYLOAD}")
    src, dst = struct.unpack("<HH", data[2:6])
    return MeshFrame(type=data[1], src=src, dst=dst, seq=data[6],
                     ttl=data[7], hops=data[8], payload=bytes(data[10:-1]))


# Sensor reading payload carried inside mesh DATA frames:
#     metric_id:u8 | value:i32le fixed-point x100 | ts:u32le
_METRIC_IDS = {
    "temperature": 0x01,
    "humidity": 0x02,
    "light": 0x03,
    "pressure": 0x04,
    "door": 0x05,
    "motion": 0x06,
}
_METRIC_BY_ID = {v: k for k, v in _METRIC_IDS.items()}

MESH_METRICS = tuple(_METRIC_IDS)  # metric names a mesh DATA payload can carry


def encode_mesh_reading(metric: str, value: float, ts: int) -> bytes:
    try:
        mid = _METRIC_IDS[metric]
    except KeyError:
        raise EncodeError(f"metric {metric!r} not carried over mesh") from None
    return bytes([mid]) + struct.pack("<iI", fixed_point_raw(value), ts)


def decode_mesh_reading(payload: bytes) -> tuple[str, float, int]:
    if len(payload) != 9:
        raise DecodeError("BAD_LENGTH", f"reading payload is 9 bytes, got {len(payload)}")
    metric = _METRIC_BY_ID.get(payload[0])
    if metric is None:
        raise DecodeError("BAD_SOF", f"unknown metric id 0x{payload[0]:02X}")
    raw, ts = struct.unpack("<iI", payload[1:])
    return metric, raw / 100.0, ts
