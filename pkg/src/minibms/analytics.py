"""Comfort scoring, occupancy, presence, hourly-profile prediction, weather.

Comfort is 1.0 inside a band [lo, hi] and decays linearly to 0.0 over `span`
beyond either edge. Occupancy trusts camera counts; door and motion events
are kept as annotations, never guessed into counts. Presence is a sliding
window over scan sightings. Prediction is per-hour exponential smoothing.
"""

from __future__ import annotations

import logging
import math
import statistics
from dataclasses import dataclass, field

import requests

from .model import Metric, Reading, hour_of, parse_mac

log = logging.getLogger(__name__)


class AnalyticsError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


# --- comfort ----------------------------------------------------------------

@dataclass(frozen=True)
class ComfortBand:
    metric: Metric
    lo: float
    hi: float
    span: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"band needs lo < hi, got [{self.lo}, {self.hi}]")
        if not self.span > 0:
            raise ValueError(f"band span must be positive, got {self.span}")


DEFAULT_BANDS: dict[Metric, ComfortBand] = {
    Metric.HUMIDITY: ComfortBand(Metric.HUMIDITY, 40.0, 50.0, 15.0),
    Metric.TEMPERATURE: ComfortBand(Metric.TEMPERATURE, 21.0, 25.0, 5.0),
}

LIGHT_ADEQUATE_LUX = 300.0


def comfort_score(value: float, band: ComfortBand) -> float:
    if band.lo <= value <= band.hi:
        return 1.0
    distance = (band.lo - value) if value < band.lo else (value - band.hi)
    return max(0.0, 1.0 - distance / band.span)


@dataclass(frozen=True)
class MetricComfort:
    score: float  # mean comfort over the window
    flag: str  # below_band | above_band | ok
    mean_value: float
    count: int


@dataclass(frozen=True)
class ComfortReport:
    metrics: dict[Metric, MetricComfort]
    overall: float | None  # None when every band metric lacks data


def comfort_report(readings: list[Reading],
                   bands: dict[Metric, ComfortBand] | None = None) -> ComfortReport:
    bands = DEFAULT_BANDS if bands is None else bands
    per_metric: dict[Metric, MetricComfort] = {}
    for metric, band in bands.items():
        values = [r.value for r in readings if r.metric is metric]
        if not values:
            continue  # NO_DATA: excluded from overall
        mean_value = statistics.fmean(values)
        score = statistics.fmean(comfort_score(v, band) for v in values)
        if mean_value < band.lo:
            flag = "below_band"
        elif mean_value > band.hi:
            flag = "above_band"
        else:
            flag = "ok"
        per_metric[metric] = MetricComfort(score, flag, mean_value, len(values))
    overall = statistics.fmean(m.score for m in per_metric.values()) if per_metric else None
    return ComfortReport(metrics=per_metric, overall=overall)


def classify_light(readings: list[Reading],
                   threshold: float = LIGHT_ADEQUATE_LUX) -> str:
    values = [r.value for r in readings if r.metric is Metric.LIGHT]
    if not values:
        raise AnalyticsError("NO_DATA", "no light readings in window")
    return "adequate" if statistics.fmean(values) >= threshold else "dim"


# --- occupancy --------------------------------------------------------------

OCCUPANCY_KINDS = ("door_open", "door_closed", "motion", "camera_count",
                   "presence_seen")


@dataclass(frozen=True)
class OccupancyEvent:
    room_id: str
    kind: str
    value: int
    ts: float

    def __post_init__(self):
        if self.kind not in OCCUPANCY_KINDS:
            raise ValueError(f"unknown occupancy kind {self.kind!r}")
        if self.kind == "camera_count":
            if self.value < 0:
                raise ValueError("camera_count must be non-negative")
        elif self.value not in (0, 1):
            raise ValueError(f"{self.kind} value must be binary")


@dataclass(frozen=True)
class OccupancySeries:
    steps: list[tuple[float, int]]  # (ts, count), count set by camera events
    annotations: list[OccupancyEvent]  # unattributed door/motion transitions

    def count_at(self, ts: float) -> int:
        count = 0
        for step_ts, step_count in self.steps:
            if step_ts > ts:
                break
            count = step_count
        return count


def occupancy_ledger(events: list[OccupancyEvent], start_ts: float) -> OccupancySeries:
    steps: list[tuple[float, int]] = [(start_ts, 0)]
    annotations: list[OccupancyEvent] = []
    last_ts = None
    for event in events:
        if last_ts is not None and event.ts < last_ts:
            raise ValueError("occupancy events must be time-ordered")
        last_ts = event.ts
        if event.kind == "camera_count":
            steps.append((event.ts, max(0, event.value)))
        else:
            annotations.append(event)
    return OccupancySeries(steps=steps, annotations=annotations)


# --- presence ---------------------------------------------------------------

PRESENCE_WINDOW_S = 120.0


def presence(history: list[tuple[float, tuple[str, ...]]], mac: str, at: float,
             window: float = PRESENCE_WINDOW_S) -> bool:
    """Present iff mac shows up in any scan with ts in (at - window, at]."""
    target = parse_mac(mac)
    for ts, macs in history:
        if at - window < ts <= at and any(parse_mac(m) == target for m in macs):
            return True
    return False


# --- feedback ---------------------------------------------------------------

@dataclass(frozen=True)
class FeedbackRecord:
    room_id: str
    vote: int
    note: str
    ts: float

    def __post_init__(self):
        if self.vote not in (-1, 0, 1):
            raise ValueError(f"vote must be -1, 0 or +1, got {self.vote}")


# --- hourly-profile prediction ----------------------------------------------

@dataclass
class HourlyProfile:
    alpha: float = 0.3
    slots: dict[tuple[str, Metric, int], tuple[float, int]] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be inside (0,1), got {self.alpha}")


def update_profile(profile: HourlyProfile, reading: Reading) -> None:
    key = (reading.room_id, reading.metric, hour_of(reading.ts))
    slot = profile.slots.get(key)
    if slot is None:
        profile.slots[key] = (reading.value, 1)
    else:
        s, count = slot
        profile.slots[key] = (profile.alpha * reading.value + (1 - profile.alpha) * s,
                              count + 1)


def predict(profile: HourlyProfile, room_id: str, metric: Metric, hour: int) -> float:
    slot = profile.slots.get((room_id, metric, hour))
    if slot is None:
        raise AnalyticsError("NO_MODEL", f"no samples for {room_id}/{metric.value}/{hour:02d}h")
    return slot[0]


def predict_day(profile: HourlyProfile, room_id: str, metric: Metric) -> list[float | None]:
    out: list[float | None] = []
    for hour in range(24):
        slot = profile.slots.get((room_id, metric, hour))
        out.append(None if slot is None else slot[0])
    return out


# --- outdoor weather --------------------------------------------------------

WEATHER_DEVICE_ID = "weather"
WEATHER_CACHE_TTL_S = 600.0


@dataclass(frozen=True)
class OutdoorSample:
    reading: Reading
    stale: bool


class WeatherClient:
    """Pulls {"temp_c": n} from the configured provider, caching for 600 sim-s."""

    def __init__(self, endpoint: str, *, cache_ttl: float = WEATHER_CACHE_TTL_S,
                 http_timeout: float = 2.0):
        self.endpoint = endpoint
        self.cache_ttl = cache_ttl
        self.http_timeout = http_timeout
        self._cached: Reading | None = None
        self._fetched_at: float | None = None

    def fetch_outdoor(self, now: float) -> OutdoorSample:
        if (self._cached is not None
                and now - self._fetched_at < self.cache_ttl):
            return OutdoorSample(self._cached, stale=False)
        try:
            resp = requests.get(self.endpoint, timeout=self.http_timeout)
            resp.raise_for_status()
            temp = resp.json()["temp_c"]
            if not isinstance(temp, (int, float)) or not math.isfinite(temp):
                raise ValueError(f"bad temp_c {temp!r}")
        except (requests.RequestException, ValueError, KeyError, TypeError) as exc:
            if self._cached is not None:
                log.warning("weather provider unavailable (%s); serving stale cache", exc)
                return OutdoorSample(self._cached, stale=True)
            raise AnalyticsError("PROVIDER_UNAVAILABLE",
                                 f"no weather and no cache: {exc}") from exc
        reading = Reading(device_id=WEATHER_DEVICE_ID, room_id="",
                          metric=Metric.OUTDOOR_TEMPERATURE,
                          value=float(temp), ts=float(math.floor(now)))
        self._cached = reading
        self._fetched_at = now
        return OutdoorSample(reading, stale=False)
