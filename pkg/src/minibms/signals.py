"""Deterministic signal models and device configs for the simulated rooms."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .model import DeviceDescriptor, Metric, metric_range

DAY = 86400.0


@dataclass(frozen=True)
class SignalModel:
    """Daily sinusoid around a baseline with seeded per-second Gaussian noise.

    The noise is a pure function of (seed, metric, second), not a sequential
    RNG stream, so any two runs that sample the same instants read the same
    values no matter when or how often they sample.
    """

    baseline: float
    amplitude: float = 0.0
    period: float = DAY
    sigma: float = 0.0
    seed: int = 0
    clip_lo: float | None = None
    clip_hi: float | None = None

    def value_at(self, metric: Metric, ts: float) -> float:
        v = self.baseline
        if self.amplitude:
            v += self.amplitude * math.sin(2.0 * math.pi * (ts % DAY) / self.period)
        if self.sigma:
            rng = random.Random(f"{self.seed}:{metric.value}:{math.floor(ts)}")
            v += rng.gauss(0.0, self.sigma)
        lo, hi = metric_range(metric)
        if self.clip_lo is not None:
            lo = self.clip_lo if lo is None else max(lo, self.clip_lo)
        if self.clip_hi is not None:
            hi = self.clip_hi if hi is None else min(hi, self.clip_hi)
        if lo is not None:
            v = max(v, lo)
        if hi is not None:
            v = min(v, hi)
        return v


@dataclass(frozen=True)
class SimDeviceConfig:
    """Everything a simulated device needs: identity, signals, scripts."""

    descriptor: DeviceDescriptor
    signals: dict[Metric, SignalModel] = field(default_factory=dict)
    # (sim ts, value) pairs for door/motion push devices, sorted by ts
    events: tuple[tuple[float, float], ...] = ()
    # step script of MAC sets visible to SCAN: (sim ts, macs); empty before first
    nearby_macs: tuple[tuple[float, tuple[bytes, ...]], ...] = ()

    def __post_init__(self):
        if list(self.events) != sorted(self.events, key=lambda e: e[0]):
            raise ValueError(f"{self.descriptor.device_id}: event script not sorted")

    def macs_at(self, ts: float) -> tuple[bytes, ...]:
        current: tuple[bytes, ...] = ()
        for t, macs in self.nearby_macs:
            if t <= ts:
                current = macs
            else:
                break
        return current
