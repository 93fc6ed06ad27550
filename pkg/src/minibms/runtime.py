"""Composition root: builds a scenario into running devices, mesh, gateway.

One discrete-event loop drives everything: BLE polls, scripted Z-Wave
pushes, camera counts, mesh reading generation, weather fetches, and
automation ticks. Under a SteppedClock the loop jumps between instants
(compressed days finish in seconds and two runs write byte-identical
stores); under a SimClock it waits out the gaps, pacing the same events
against the wall.
"""

from __future__ import annotations

import heapq
import logging
import math
import threading
from typing import Callable

from . import wire
from .analytics import WeatherClient
from .automation import AutomationEngine
from .clock import SimClock, SteppedClock
from .devices import BleDevice, ZwaveDevice
from .gateway import Gateway
from .httpapi import ApiServer
from .meshnet import MeshNet, Topology
from .model import DeviceProtocol, Metric
from .scenario import Scenario
from .tstore import TimeSeriesStore
from .weatherstub import WeatherStub

log = logging.getLogger(__name__)


class Runtime:
    """Everything a scenario describes, wired and ready to run."""

    def __init__(self, scenario: Scenario, *, clock=None,
                 store_root=None, serve_api: bool = False,
                 bind: tuple[str, int] | None = None):
        self.scenario = scenario
        self.clock = clock or SteppedClock(scenario.start_ts)
        self.store = TimeSeriesStore(store_root or scenario.store_root)
        self._heap: list[tuple[float, int, Callable[[float], None]]] = []
        self._seq = 0
        self._socket_devices: list = []
        self.api: ApiServer | None = None
        self.weather_stub: WeatherStub | None = None

        weather_client = None
        if scenario.weather is not None:
            if scenario.weather.endpoint is not None:
                endpoint = scenario.weather.endpoint
            else:
                self.weather_stub = WeatherStub(scenario.weather.model,
                                                now_fn=self.clock.now).start()
                endpoint = self.weather_stub.endpoint
            weather_client = WeatherClient(endpoint)

        self.gateway = Gateway(self.store, self.clock,
                               sim_start=scenario.start_ts,
                               bands=scenario.bands, weather=weather_client,
                               watched_macs=scenario.watched_macs)

        self.mesh: MeshNet | None = None
        if scenario.mesh is not None:
            topology = Topology()
            topology.add_node(scenario.mesh.sink)
            for node in scenario.mesh.extra_nodes:
                topology.add_node(node)
            for spec in scenario.devices:
                if spec.protocol is DeviceProtocol.ZIGBEE_SIM:
                    topology.add_node(spec.cfg.descriptor.address)
            for link in scenario.mesh.links:
                topology.add_link(link.a, link.b, loss=link.loss,
                                  latency=link.latency)
            self.mesh = MeshNet(topology, seed=scenario.seed,
                                start_time=scenario.start_ts)

        self._build_devices()
        self.engine = AutomationEngine(scenario.relay_ids(),
                                       list(scenario.rules))
        self.gateway.attach_engine(self.engine)
        self._schedule_recurring()

        if serve_api:
            host, port = bind or scenario.bind or ("127.0.0.1", 0)
            self.api = ApiServer(self.gateway, host, port).start()

    # --- construction ------------------------------------------------------

    def _build_devices(self):
        start = self.scenario.start_ts
        for spec in self.scenario.devices:
            descriptor = spec.cfg.descriptor
            if spec.protocol is DeviceProtocol.BLE_SIM:
                device = BleDevice(spec.cfg, self.clock).start()
                self._socket_devices.append(device)
                self.gateway.register_device(descriptor,
                                             endpoint=device.endpoint)
            elif spec.protocol is DeviceProtocol.ZWAVE_SIM and not spec.is_camera:
                device = ZwaveDevice(spec.cfg, self.clock).start()
                self._socket_devices.append(device)
                self.gateway.register_device(descriptor,
                                             endpoint=device.endpoint)
                # connect up front so scripted pushes have a live peer
                self.gateway.drain_zwave(descriptor.device_id, 0, start)
                device.wait_peer(2.0)
                if spec.cfg.events:
                    self._schedule_pushes(device, spec)
            else:
                # cameras and mesh nodes have no direct socket to the gateway
                self.gateway.register_device(descriptor)
                if spec.is_camera:
                    self._schedule_camera(spec)
                elif spec.protocol is DeviceProtocol.ZIGBEE_SIM:
                    self._schedule_mesh(spec)

    def _schedule(self, at: float, fn: Callable[[float], None]):
        self._seq += 1
        heapq.heappush(self._heap, (at, self._seq, fn))

    def _every(self, first_at: float, interval: float,
               fn: Callable[[float], None]):
        def wrapper(at: float):
            fn(at)
            self._schedule(at + interval, wrapper)
        self._schedule(first_at, wrapper)

    def _schedule_pushes(self, device: ZwaveDevice, spec):
        device_id = spec.device_id

        def fire(at: float):
            sent = device.emit_due(at)
            if sent:
                self.gateway.drain_zwave(device_id, sent, at)

        for ts in sorted({e[0] for e in spec.cfg.events}):
            self._schedule(ts, fire)

    def _schedule_camera(self, spec):
        device_id = spec.device_id

        def fire_at(count: int):
            return lambda at: self.gateway.intake_camera(device_id, count, at)

        for ts, value in spec.cfg.events:
            self._schedule(ts, fire_at(int(value)))

    def _schedule_mesh(self, spec):
        sink = self.scenario.mesh.sink
        address = spec.cfg.descriptor.address
        signals = spec.cfg.signals

        def fire(at: float):
            for metric, model in signals.items():
                payload = wire.encode_mesh_reading(
                    metric.value, model.value_at(metric, at), int(at))
                self.mesh.send_data(address, sink, payload, now=at)
            for delivery in self.mesh.pop_deliveries():
                self.gateway.intake_mesh(delivery.src, delivery.payload, at)

        self._every(self.scenario.start_ts, spec.push_interval_s, fire)

    def _schedule_recurring(self):
        start = self.scenario.start_ts
        if self.gateway.weather is not None:
            interval = self.scenario.weather.interval_s
            self._every(start, interval,
                        lambda at: self.gateway.refresh_weather(at))
        tick = self.scenario.automation_tick_s
        self._every(start + tick, tick,
                    lambda at: self.gateway.automation_tick(at))

    # --- event loop --------------------------------------------------------

    def _next_at(self) -> float | None:
        poll_at = self.gateway.next_due()
        task_at = self._heap[0][0] if self._heap else None
        pending = [t for t in (poll_at, task_at) if t is not None]
        return min(pending) if pending else None

    def run(self, duration_s: float | None = None,
            stop: threading.Event | None = None) -> float:
        """Drive every event with sim time in [start, start + duration).

        Returns the number of sim seconds covered. Stops early when `stop`
        is set (wall-paced runs check it while waiting out gaps).
        """
        start = self.scenario.start_ts
        end = start + (duration_s if duration_s is not None
                       else self.scenario.duration_s)
        while not (stop is not None and stop.is_set()):
            at = self._next_at()
            if at is None or at >= end:
                break
            self.clock.wait_until(at, stop)
            if stop is not None and stop.is_set():
                break
            while self._heap and self._heap[0][0] <= at:
                _, _, fn = heapq.heappop(self._heap)
                fn(at)
            self.gateway.run_due(at)
        # wait out the tail so a finite window is covered end to end
        if math.isfinite(end) and not (stop is not None and stop.is_set()):
            self.clock.wait_until(end, stop)
        return min(self.clock.now(), end) - start

    def close(self):
        # shutdown order: devices first, then gateway links, then the store
        if self.api is not None:
            self.api.stop()
        for device in self._socket_devices:
            device.stop()
        if self.weather_stub is not None:
            self.weather_stub.stop()
        self.gateway.close()
        self.store.close()


def build_sim(scenario: Scenario, *, store_root=None,
              serve_api: bool = False,
              bind: tuple[str, int] | None = None) -> Runtime:
    """Stepped-clock runtime: compressed, deterministic, byte-identical."""
    return Runtime(scenario, clock=SteppedClock(scenario.start_ts),
                   store_root=store_root, serve_api=serve_api, bind=bind)


def build_live(scenario: Scenario, *, store_root=None,
               bind: tuple[str, int] | None = None) -> Runtime:
    """Wall-paced runtime serving the HTTP API against live devices."""
    clock = SimClock(scenario.start_ts, compression=scenario.compression)
    return Runtime(scenario, clock=clock, store_root=store_root,
                   serve_api=True, bind=bind)
