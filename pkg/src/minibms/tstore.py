"""Append-only CSV time-series store with daily files per device.

Layout: {root}/{device_id}/{YYYY-MM-DD}.csv, header
"timestamp,device_id,metric,value,unit", timestamps ISO-8601 UTC whole
seconds, values with exactly two fraction digits. Files are append-only and
non-decreasing in timestamp; late readings are rejected instead of sorted
in. On open, a torn final line (crash mid-write) is dropped and logged.
"""

from __future__ import annotations

import heapq
import logging
import math
import os
from pathlib import Path

from .model import Metric, Reading, day_of, iso_ts, parse_ts, validate_reading

log = logging.getLogger(__name__)

HEADER = "timestamp,device_id,metric,value,unit"


class StoreError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def format_value(value: float) -> str:
    return f"{value:.2f}"


def format_row(r: Reading) -> str:
    return f"{iso_ts(r.ts)},{r.device_id},{r.metric.value},{format_value(r.value)},{r.unit}"


def parse_row(line: str, room_id: str = "") -> Reading:
    parts = line.split(",")
    if len(parts) != 5:
        raise ValueError(f"expected 5 columns, got {len(parts)}")
    ts_text, device_id, metric_text, value_text, unit = parts
    reading = Reading(device_id=device_id, room_id=room_id,
                      metric=Metric(metric_text), value=float(value_text),
                      ts=parse_ts(ts_text))
    if unit != reading.unit:
        raise ValueError(f"unit {unit!r} does not match metric {metric_text}")
    return reading


class TimeSeriesStore:
    """One serialized writer per device lineage; readers tolerate torn tails."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.rooms: dict[str, str] = {}  # device_id -> room_id for query results
        self._last: dict[str, float] = {}  # device_id -> last appended ts
        self._handles: dict[str, tuple[str, object]] = {}  # device_id -> (day, fh)
        self._recover()

    # --- recovery ----------------------------------------------------------

    def _recover(self):
        for dev_dir in sorted(p for p in self.root.iterdir() if p.is_dir()):
            device_id = dev_dir.name
            for path in sorted(dev_dir.glob("*.csv")):
                self._repair_file(path)
                for reading in self._read_file(path, device_id):
                    prev = self._last.get(device_id)
                    if prev is None or reading.ts > prev:
                        self._last[device_id] = reading.ts

    def _repair_file(self, path: Path):
        data = path.read_bytes()
        if not data:
            path.write_bytes(HEADER.encode() + b"\n")
            return
        if not data.endswith(b"\n"):
            cut = data.rfind(b"\n") + 1
            log.warning("dropping torn row in %s (%d bytes)", path, len(data) - cut)
            data = data[:cut]
            if not data:
                data = HEADER.encode() + b"\n"
            path.write_bytes(data)
        lines = data.decode("utf-8").splitlines()
        if lines[0] != HEADER:
            log.warning("rewriting %s: bad header %r", path, lines[0][:40])
            path.write_bytes(HEADER.encode() + b"\n")
            return
        if len(lines) > 1:
            try:
                parse_row(lines[-1], "")
            except (ValueError, KeyError):
                log.warning("dropping unparsable final row in %s", path)
                path.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")

    # --- writing -----------------------------------------------------------

    def append(self, r: Reading):
        problems = validate_reading(r)
        if problems:
            raise ValueError("invalid reading: " + "; ".join(problems))
        ts = float(math.floor(r.ts))
        last = self._last.get(r.device_id)
        if last is not None and ts < last:
            raise StoreError("OUT_OF_ORDER",
                             f"{r.device_id} at {iso_ts(ts)} is earlier than "
                             f"last appended {iso_ts(last)}")
        fh = self._writer(r.device_id, day_of(ts))
        fh.write(format_row(r) + "\n")
        fh.flush()
        self._last[r.device_id] = ts

    def _writer(self, device_id: str, day: str):
        cached = self._handles.get(device_id)
        if cached is not None:
            if cached[0] == day:
                return cached[1]
            self._close_handle(cached[1])
        path = self.root / device_id / f"{day}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        fresh = not path.exists() or path.stat().st_size == 0
        fh = open(path, "a", encoding="utf-8", newline="\n")
        if fresh:
            fh.write(HEADER + "\n")
            fh.flush()
        self._handles[device_id] = (day, fh)
        return fh

    @staticmethod
    def _close_handle(fh):
        fh.flush()
        os.fsync(fh.fileno())
        fh.close()

    def close(self):
        for _, fh in self._handles.values():
            self._close_handle(fh)
        self._handles.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # --- reading -----------------------------------------------------------

    def _read_file(self, path: Path, device_id: str):
        readings = []
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines or lines[0] != HEADER:
            raise StoreError("BAD_HEADER", f"{path} lacks the expected header")
        room = self.rooms.get(device_id, "")
        for idx, line in enumerate(lines[1:], start=2):
            try:
                readings.append(parse_row(line, room))
            except (ValueError, KeyError):
                if idx == len(lines):  # torn tail under a live writer
                    log.debug("ignoring torn row in %s", path)
                    break
                raise StoreError("CORRUPT", f"{path} line {idx} unparsable")
        return readings

    def devices(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if p.is_dir())

    def query(self, *, device: str | None = None, metric: Metric | None = None,
              from_ts: float | None = None,
              to_ts: float | None = None) -> list[Reading]:
        """Readings with ts in [from_ts, to_ts), merged in timestamp order.

        A missing bound is unbounded on that side.
        """
        if from_ts is not None and to_ts is not None and from_ts > to_ts:
            raise ValueError("query range must satisfy from <= to")
        if isinstance(metric, str):
            metric = Metric(metric)
        targets = [device] if device is not None else self.devices()
        lo_day = day_of(from_ts) if from_ts is not None else None
        hi_day = (day_of(max(from_ts or to_ts - 1, to_ts - 1))
                  if to_ts is not None else None)
        per_device = []
        for device_id in targets:
            dev_dir = self.root / device_id
            if not dev_dir.is_dir():
                continue
            rows: list[Reading] = []
            for path in sorted(dev_dir.glob("*.csv")):
                if lo_day is not None and path.stem < lo_day:
                    continue
                if hi_day is not None and path.stem > hi_day:
                    continue
                for r in self._read_file(path, device_id):
                    if from_ts is not None and r.ts < from_ts:
                        continue
                    if to_ts is not None and r.ts >= to_ts:
                        continue
                    if metric is not None and r.metric is not metric:
                        continue
                    rows.append(r)
            per_device.append(rows)
        # each per-device list is ts-sorted; ties across devices break by id,
        # ties within a device keep append order
        merged = heapq.merge(*per_device, key=lambda r: (r.ts, r.device_id))
        return list(merged)

    def latest(self, *, device: str, metric: Metric | None = None) -> Reading | None:
        last = self._last.get(device)
        if last is None:
            return None
        rows = self.query(device=device, metric=metric,
                          from_ts=last - 86400.0, to_ts=last + 1.0)
        return rows[-1] if rows else None

    def export_plot_series(self, *, device: str | None = None,
                           metric: Metric | None = None,
                           from_ts: float, to_ts: float,
                           bucket: float) -> list[tuple[float, float]]:
        """Per-bucket arithmetic means; buckets start at from_ts, empty ones omitted."""
        if bucket <= 0:
            raise ValueError("bucket must be positive")
        sums: dict[int, float] = {}
        counts: dict[int, int] = {}
        for r in self.query(device=device, metric=metric,
                            from_ts=from_ts, to_ts=to_ts):
            idx = int((r.ts - from_ts) // bucket)
            sums[idx] = sums.get(idx, 0.0) + r.value
            counts[idx] = counts.get(idx, 0) + 1
        return [(from_ts + idx * bucket, sums[idx] / counts[idx])
                for idx in sorted(sums)]
