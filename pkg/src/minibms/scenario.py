"""Scenario files: one YAML document describes a whole simulated building.

Schema (all `at` offsets are sim-seconds from clock.start):

    clock:    {start: ISO-8601 Z, compression: float, duration_s: float}
    seed:     int                      # default noise seed for signal models
    store:    path                     # resolved relative to the scenario file
    bind:     "host:port"              # API bind address (optional)
    automation_tick_s: float           # rule evaluation cadence, default 60
    rooms:    [{id, watched_mac?}]
    bands:    {metric: {lo, hi, span}} # comfort band overrides (optional)
    weather:  {interval_s, endpoint?, baseline?, amplitude?, period?, sigma?}
    devices:  [{id, protocol, room, address, metrics, poll_interval_s?,
                signals?, events?, scan?, push_interval_s?}]
    mesh:     {sink, extra_nodes?, links: [{a, b, loss?, latency?}]}
    rules:    [{id, room, when: [...], relay, target, hold_s?, hysteresis?}]

Validation is collect-everything: every dangling reference or malformed
field produces its own file:line diagnostic before any process starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import wire
from .analytics import ComfortBand, DEFAULT_BANDS
from .automation import Rule, parse_condition
from .model import DeviceDescriptor, DeviceProtocol, Metric, parse_mac, parse_ts
from .signals import SignalModel, SimDeviceConfig

_LINE = "__line__"

BLE_POLLABLE = (Metric.TEMPERATURE, Metric.HUMIDITY, Metric.LIGHT,
                Metric.PRESSURE, Metric.PRESENCE)
ZWAVE_METRICS = (Metric.DOOR, Metric.MOTION, Metric.RELAY, Metric.CAMERA_COUNT)


class ScenarioError(Exception):
    """Carries every diagnostic found in one validation pass."""

    def __init__(self, diagnostics: list[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(self.diagnostics) or "invalid scenario")


class _LineLoader(yaml.SafeLoader):
    """SafeLoader that tags every mapping with its 1-based source line."""

    def construct_mapping(self, node, deep=False):
        mapping = super().construct_mapping(node, deep=deep)
        mapping[_LINE] = node.start_mark.line + 1
        return mapping


@dataclass(frozen=True)
class DeviceSpec:
    cfg: SimDeviceConfig
    push_interval_s: float | None  # mesh reading cadence (zigbee only)
    line: int

    @property
    def device_id(self) -> str:
        return self.cfg.descriptor.device_id

    @property
    def protocol(self) -> DeviceProtocol:
        return self.cfg.descriptor.protocol

    @property
    def room_id(self) -> str:
        return self.cfg.descriptor.room_id

    @property
    def metrics(self) -> tuple[Metric, ...]:
        return self.cfg.descriptor.metrics

    @property
    def is_relay(self) -> bool:
        return Metric.RELAY in self.metrics

    @property
    def is_camera(self) -> bool:
        return Metric.CAMERA_COUNT in self.metrics


@dataclass(frozen=True)
class MeshLinkSpec:
    a: int
    b: int
    loss: float = 0.0
    latency: float = 0.0


@dataclass(frozen=True)
class MeshSpec:
    sink: int
    extra_nodes: tuple[int, ...] = ()
    links: tuple[MeshLinkSpec, ...] = ()


@dataclass(frozen=True)
class WeatherSpec:
    interval_s: float
    endpoint: str | None = None  # None: serve a local stub from `model`
    model: SignalModel | None = None


@dataclass(frozen=True)
class Scenario:
    path: Path
    start_ts: float
    compression: float
    duration_s: float
    seed: int
    store_root: Path
    bind: tuple[str, int] | None
    automation_tick_s: float
    rooms: tuple[str, ...]
    watched_macs: dict[str, str] = field(default_factory=dict)
    bands: dict[Metric, ComfortBand] = field(default_factory=dict)
    devices: tuple[DeviceSpec, ...] = ()
    mesh: MeshSpec | None = None
    weather: WeatherSpec | None = None
    rules: tuple[Rule, ...] = ()

    def device(self, device_id: str) -> DeviceSpec:
        for spec in self.devices:
            if spec.device_id == device_id:
                return spec
        raise KeyError(device_id)

    def relay_ids(self) -> list[str]:
        return [d.device_id for d in self.devices if d.is_relay]

    def room_devices(self, room_id: str) -> list[DeviceSpec]:
        return [d for d in self.devices if d.room_id == room_id]


def _line_of(node) -> int:
    return node.get(_LINE, 0) if isinstance(node, dict) else 0


def _strip(node):
    """Remove line tags so schema checks see only user keys."""
    if isinstance(node, dict):
        return {k: _strip(v) for k, v in node.items() if k != _LINE}
    if isinstance(node, list):
        return [_strip(v) for v in node]
    return node


class _Builder:
    def __init__(self, path: Path, doc: dict):
        self.path = path
        self.doc = doc
        self.diags: list[str] = []

    def diag(self, line: int, message: str):
        self.diags.append(f"{self.path}:{line}: {message}")

    # typed field access; every failure becomes one diagnostic

    def _field(self, node: dict, key: str, kinds, what: str, *,
               required: bool = True, default=None):
        line = _line_of(node)
        if key not in node:
            if required:
                self.diag(line, f"{what}: missing required key '{key}'")
            return default
        value = node[key]
        if kinds is not None and not isinstance(value, kinds):
            self.diag(line, f"{what}: '{key}' has wrong type "
                            f"({type(value).__name__})")
            return default
        return value

    def num(self, node, key, what, *, required=True, default=None):
        value = self._field(node, key, (int, float), what,
                            required=required, default=default)
        if isinstance(value, bool):
            self.diag(_line_of(node), f"{what}: '{key}' has wrong type (bool)")
            return default
        return value

    def text(self, node, key, what, *, required=True, default=None):
        return self._field(node, key, str, what, required=required,
                           default=default)

    def seq(self, node, key, what, *, required=True):
        value = self._field(node, key, list, what, required=required,
                            default=None)
        return value if value is not None else []

    def mapping(self, node, key, what, *, required=True):
        return self._field(node, key, dict, what, required=required,
                           default=None)

    # section builders

    def build(self) -> Scenario:
        doc = self.doc
        clock = self.mapping(doc, "clock", "scenario") or {_LINE: _line_of(doc)}
        start_text = self.text(clock, "start", "clock", default="1970-01-01T00:00:00Z")
        try:
            start_ts = parse_ts(start_text)
        except ValueError:
            self.diag(_line_of(clock), f"clock: start {start_text!r} is not ISO-8601 Z")
            start_ts = 0.0
        compression = self.num(clock, "compression", "clock", required=False,
                               default=1.0)
        duration_s = self.num(clock, "duration_s", "clock", required=False,
                              default=86400.0)
        if compression <= 0:
            self.diag(_line_of(clock), "clock: compression must be positive")
        if duration_s <= 0:
            self.diag(_line_of(clock), "clock: duration_s must be positive")

        seed = self.num(doc, "seed", "scenario", required=False, default=0)
        store_text = self.text(doc, "store", "scenario", required=False,
                               default="store")
        store_root = (self.path.parent / store_text).resolve()
        bind = self._bind(doc)
        tick_s = self.num(doc, "automation_tick_s", "scenario", required=False,
                          default=60.0)
        if tick_s <= 0:
            self.diag(_line_of(doc), "scenario: automation_tick_s must be positive")

        rooms, watched = self._rooms(doc)
        bands = self._bands(doc)
        devices = self._devices(doc, rooms, start_ts, int(seed))
        mesh = self._mesh(doc, devices)
        weather = self._weather(doc, int(seed))
        rules = self._rules(doc, rooms, devices)

        if self.diags:
            raise ScenarioError(self.diags)
        return Scenario(path=self.path, start_ts=start_ts,
                        compression=float(compression),
                        duration_s=float(duration_s), seed=int(seed),
                        store_root=store_root, bind=bind,
                        automation_tick_s=float(tick_s),
                        rooms=tuple(rooms), watched_macs=watched, bands=bands,
                        devices=tuple(devices), mesh=mesh, weather=weather,
                        rules=tuple(rules))

    def _bind(self, doc) -> tuple[str, int] | None:
        text = self.text(doc, "bind", "scenario", required=False)
        if text is None:
            return None
        host, sep, port = text.rpartition(":")
        if not sep or not port.isdigit():
            self.diag(_line_of(doc), f"scenario: bind {text!r} is not host:port")
            return None
        return host, int(port)

    def _rooms(self, doc) -> tuple[list[str], dict[str, str]]:
        rooms: list[str] = []
        watched: dict[str, str] = {}
        for node in self.seq(doc, "rooms", "scenario"):
            if not isinstance(node, dict):
                self.diag(_line_of(doc), "rooms: each entry must be a mapping")
                continue
            line = _line_of(node)
            room_id = self.text(node, "id", "room")
            if room_id is None:
                continue
            if room_id in rooms:
                self.diag(line, f"room '{room_id}': duplicate room id")
                continue
            rooms.append(room_id)
            mac = self.text(node, "watched_mac", "room", required=False)
            if mac is not None:
                try:
                    parse_mac(mac)
                except ValueError:
                    self.diag(line, f"room '{room_id}': watched_mac {mac!r} "
                                    "is not a MAC address")
                    continue
                watched[room_id] = mac
        if not rooms:
            self.diag(_line_of(doc), "scenario: at least one room is required")
        return rooms, watched

    def _bands(self, doc) -> dict[Metric, ComfortBand]:
        bands = dict(DEFAULT_BANDS)
        node = self.mapping(doc, "bands", "scenario", required=False)
        if node is None:
            return bands
        line = _line_of(node)
        for name, spec in _strip(node).items():
            try:
                metric = Metric(name)
            except ValueError:
                self.diag(line, f"bands: unknown metric '{name}'")
                continue
            if not isinstance(spec, dict):
                self.diag(line, f"bands: '{name}' must be a mapping")
                continue
            try:
                bands[metric] = ComfortBand(metric, float(spec["lo"]),
                                            float(spec["hi"]),
                                            float(spec["span"]))
            except (KeyError, TypeError, ValueError) as err:
                self.diag(line, f"bands: '{name}' invalid ({err})")
        return bands

    def _signals(self, node, what: str, declared: tuple[Metric, ...],
                 seed: int) -> dict[Metric, SignalModel]:
        signals: dict[Metric, SignalModel] = {}
        raw = self.mapping(node, "signals", what, required=False)
        if raw is None:
            return signals
        line = _line_of(raw)
        for name, spec in _strip(raw).items():
            try:
                metric = Metric(name)
            except ValueError:
                self.diag(line, f"{what}: unknown metric '{name}' in signals")
                continue
            if metric not in declared:
                self.diag(line, f"{what}: signal for undeclared metric '{name}'")
                continue
            if not isinstance(spec, dict):
                self.diag(line, f"{what}: signal '{name}' must be a mapping")
                continue
            if "baseline" not in spec:
                self.diag(line, f"{what}: signal '{name}' needs a baseline")
                continue
            try:
                signals[metric] = SignalModel(
                    baseline=float(spec["baseline"]),
                    amplitude=float(spec.get("amplitude", 0.0)),
                    period=float(spec.get("period", 86400.0)),
                    sigma=float(spec.get("sigma", 0.0)),
                    seed=int(spec.get("seed", seed)),
                    clip_lo=(float(spec["clip_lo"]) if "clip_lo" in spec else None),
                    clip_hi=(float(spec["clip_hi"]) if "clip_hi" in spec else None),
                )
            except (TypeError, ValueError) as err:
                self.diag(line, f"{what}: signal '{name}' invalid ({err})")
        return signals

    def _events(self, node, what: str, start_ts: float,
                binary: bool) -> tuple[tuple[float, float], ...]:
        events = []
        for entry in self.seq(node, "events", what, required=False):
            if not isinstance(entry, dict):
                self.diag(_line_of(node), f"{what}: each event must be a mapping")
                continue
            at = self.num(entry, "at", f"{what} event")
            value = self.num(entry, "value", f"{what} event")
            if at is None or value is None:
                continue
            if at < 0:
                self.diag(_line_of(entry), f"{what}: event at {at} is before start")
                continue
            if binary and value not in (0, 1):
                self.diag(_line_of(entry),
                          f"{what}: event value must be 0 or 1, got {value}")
                continue
            if not binary and (value < 0 or value != int(value)):
                self.diag(_line_of(entry),
                          f"{what}: count must be a non-negative integer")
                continue
            events.append((start_ts + float(at), float(value)))
        return tuple(events)

    def _scan_script(self, node, what: str, start_ts: float):
        steps = []
        for entry in self.seq(node, "scan", what, required=False):
            if not isinstance(entry, dict):
                self.diag(_line_of(node), f"{what}: each scan step must be a mapping")
                continue
            at = self.num(entry, "at", f"{what} scan step")
            macs_raw = self._field(entry, "macs", list, f"{what} scan step",
                                   default=None)
            if at is None or macs_raw is None:
                continue
            macs = []
            for mac in macs_raw:
                try:
                    macs.append(parse_mac(mac))
                except (TypeError, ValueError):
                    self.diag(_line_of(entry),
                              f"{what}: scan mac {mac!r} is not a MAC address")
            steps.append((start_ts + float(at), tuple(macs)))
        return tuple(steps)

    def _devices(self, doc, rooms: list[str], start_ts: float,
                 seed: int) -> list[DeviceSpec]:
        out: list[DeviceSpec] = []
        ids: set[str] = set()
        zwave_nodes: dict[int, str] = {}
        zigbee_nodes: dict[int, str] = {}
        for node in self.seq(doc, "devices", "scenario"):
            if not isinstance(node, dict):
                self.diag(_line_of(doc), "devices: each entry must be a mapping")
                continue
            line = _line_of(node)
            device_id = self.text(node, "id", "device")
            if device_id is None:
                continue
            what = f"device '{device_id}'"
            if device_id in ids:
                self.diag(line, f"{what}: duplicate device id")
                continue
            ids.add(device_id)

            proto_text = self.text(node, "protocol", what)
            try:
                protocol = DeviceProtocol(proto_text)
            except ValueError:
                self.diag(line, f"{what}: unknown protocol '{proto_text}'")
                continue

            room = self.text(node, "room", what)
            if room is None:
                continue
            if room not in rooms:
                self.diag(line, f"{what}: unknown room '{room}'")
                continue

            metrics = []
            for name in self.seq(node, "metrics", what):
                try:
                    metrics.append(Metric(name))
                except ValueError:
                    self.diag(line, f"{what}: unknown metric '{name}'")
            metrics = tuple(metrics)

            spec = self._one_device(node, line, what, device_id, protocol,
                                    room, metrics, start_ts, seed,
                                    zwave_nodes, zigbee_nodes)
            if spec is not None:
                out.append(spec)
        return out

    def _one_device(self, node, line, what, device_id, protocol, room,
                    metrics, start_ts, seed, zwave_nodes,
                    zigbee_nodes) -> DeviceSpec | None:
        address = node.get("address")
        push_interval = None

        if protocol is DeviceProtocol.BLE_SIM:
            if not isinstance(address, str):
                self.diag(line, f"{what}: ble_sim address must be a MAC string")
                return None
            try:
                address = parse_mac(address)
            except ValueError:
                self.diag(line, f"{what}: address {node.get('address')!r} "
                                "is not a MAC address")
                return None
            bad = [m for m in metrics if m not in BLE_POLLABLE]
            if bad:
                self.diag(line, f"{what}: metric '{bad[0].value}' is not "
                                "pollable over ble_sim")
                return None
            interval = self.num(node, "poll_interval_s", what, required=False,
                                default=60.0)
            if interval is None or interval <= 0:
                self.diag(line, f"{what}: poll_interval_s must be positive")
                return None
            signals = self._signals(node, what, metrics, seed)
            for metric in metrics:
                if metric is not Metric.PRESENCE and metric not in signals:
                    self.diag(line, f"{what}: no signal model for "
                                    f"'{metric.value}'")
            scan = self._scan_script(node, what, start_ts)
            descriptor = self._descriptor(device_id, protocol, address, room,
                                          metrics, interval, line, what)
            if descriptor is None:
                return None
            cfg = SimDeviceConfig(descriptor=descriptor, signals=signals,
                                  nearby_macs=scan)
            return DeviceSpec(cfg=cfg, push_interval_s=None, line=line)

        if protocol is DeviceProtocol.ZWAVE_SIM:
            if not isinstance(address, int) or isinstance(address, bool):
                self.diag(line, f"{what}: zwave_sim address must be an integer "
                                "node id")
                return None
            if address in zwave_nodes:
                self.diag(line, f"{what}: z-wave node {address} already used "
                                f"by '{zwave_nodes[address]}'")
                return None
            zwave_nodes[address] = device_id
            bad = [m for m in metrics if m not in ZWAVE_METRICS]
            if bad:
                self.diag(line, f"{what}: metric '{bad[0].value}' is not "
                                "served over zwave_sim")
                return None
            is_camera = Metric.CAMERA_COUNT in metrics
            binary = not is_camera
            events = self._events(node, what, start_ts, binary=binary)
            descriptor = self._descriptor(device_id, protocol, address, room,
                                          metrics, None, line, what)
            if descriptor is None:
                return None
            try:
                cfg = SimDeviceConfig(descriptor=descriptor, events=events)
            except ValueError as err:
                self.diag(line, f"{what}: {err}")
                return None
            return DeviceSpec(cfg=cfg, push_interval_s=None, line=line)

        # zigbee_sim: reaches the gateway through the mesh
        if not isinstance(address, int) or isinstance(address, bool):
            self.diag(line, f"{what}: zigbee_sim address must be an integer "
                            "node id")
            return None
        if address in zigbee_nodes:
            self.diag(line, f"{what}: mesh node {address} already used "
                            f"by '{zigbee_nodes[address]}'")
            return None
        zigbee_nodes[address] = device_id
        bad = [m for m in metrics if m.value not in wire.MESH_METRICS]
        if bad:
            self.diag(line, f"{what}: metric '{bad[0].value}' cannot be "
                            "carried over the mesh")
            return None
        push_interval = self.num(node, "push_interval_s", what, required=False,
                                 default=60.0)
        if push_interval is None or push_interval <= 0:
            self.diag(line, f"{what}: push_interval_s must be positive")
            return None
        signals = self._signals(node, what, metrics, seed)
        for metric in metrics:
            if metric not in signals:
                self.diag(line, f"{what}: no signal model for '{metric.value}'")
        descriptor = self._descriptor(device_id, protocol, address, room,
                                      metrics, None, line, what)
        if descriptor is None:
            return None
        cfg = SimDeviceConfig(descriptor=descriptor, signals=signals)
        return DeviceSpec(cfg=cfg, push_interval_s=float(push_interval),
                          line=line)

    def _descriptor(self, device_id, protocol, address, room, metrics,
                    interval, line, what):
        try:
            descriptor = DeviceDescriptor(device_id=device_id,
                                          protocol=protocol, address=address,
                                          room_id=room, metrics=metrics,
                                          poll_interval=interval)
            descriptor.validate()
            return descriptor
        except ValueError as err:
            self.diag(line, f"{what}: {err}")
            return None

    def _mesh(self, doc, devices: list[DeviceSpec]) -> MeshSpec | None:
        zigbee = [d for d in devices
                  if d.protocol is DeviceProtocol.ZIGBEE_SIM]
        node = self.mapping(doc, "mesh", "scenario", required=False)
        if node is None:
            for spec in zigbee:
                self.diag(spec.line, f"device '{spec.device_id}': zigbee_sim "
                                     "device declared without a mesh section")
            return None
        line = _line_of(node)
        sink = self.num(node, "sink", "mesh")
        if sink is None:
            return None
        sink = int(sink)
        extra = []
        for n in self.seq(node, "extra_nodes", "mesh", required=False):
            if not isinstance(n, int) or isinstance(n, bool):
                self.diag(line, "mesh: extra_nodes must be integer node ids")
                continue
            extra.append(n)
        members = {sink, *extra}
        for spec in zigbee:
            address = spec.cfg.descriptor.address
            if address == sink:
                self.diag(spec.line, f"device '{spec.device_id}': mesh address "
                                     f"{address} collides with the sink")
                continue
            members.add(address)
        links = []
        for entry in self.seq(node, "links", "mesh"):
            if not isinstance(entry, dict):
                self.diag(line, "mesh: each link must be a mapping")
                continue
            a = self.num(entry, "a", "mesh link")
            b = self.num(entry, "b", "mesh link")
            if a is None or b is None:
                continue
            a, b = int(a), int(b)
            missing = [n for n in (a, b) if n not in members]
            if missing:
                self.diag(_line_of(entry),
                          f"mesh: link {a}-{b} references unknown node "
                          f"{missing[0]}")
                continue
            loss = self.num(entry, "loss", "mesh link", required=False,
                            default=0.0)
            latency = self.num(entry, "latency", "mesh link", required=False,
                               default=0.0)
            if not 0.0 <= loss <= 1.0:
                self.diag(_line_of(entry), f"mesh: link {a}-{b} loss must be "
                                           "within [0, 1]")
                continue
            if latency < 0:
                self.diag(_line_of(entry), f"mesh: link {a}-{b} latency must "
                                           "be non-negative")
                continue
            links.append(MeshLinkSpec(a=a, b=b, loss=float(loss),
                                      latency=float(latency)))
        return MeshSpec(sink=sink, extra_nodes=tuple(sorted(extra)),
                        links=tuple(links))

    def _weather(self, doc, seed: int) -> WeatherSpec | None:
        node = self.mapping(doc, "weather", "scenario", required=False)
        if node is None:
            return None
        line = _line_of(node)
        interval = self.num(node, "interval_s", "weather", required=False,
                            default=600.0)
        if interval <= 0:
            self.diag(line, "weather: interval_s must be positive")
        endpoint = self.text(node, "endpoint", "weather", required=False)
        model = None
        if endpoint is None:
            if "baseline" not in node:
                self.diag(line, "weather: needs either an endpoint or a "
                                "baseline model")
                return None
            try:
                model = SignalModel(
                    baseline=float(node["baseline"]),
                    amplitude=float(node.get("amplitude", 0.0)),
                    period=float(node.get("period", 86400.0)),
                    sigma=float(node.get("sigma", 0.0)),
                    seed=int(node.get("seed", seed)),
                )
            except (TypeError, ValueError) as err:
                self.diag(line, f"weather: invalid model ({err})")
                return None
        return WeatherSpec(interval_s=float(interval), endpoint=endpoint,
                           model=model)

    def _rules(self, doc, rooms: list[str],
               devices: list[DeviceSpec]) -> list[Rule]:
        relays = {d.device_id: d for d in devices if d.is_relay}
        device_ids = {d.device_id for d in devices}
        rules: list[Rule] = []
        seen: set[str] = set()
        for node in self.seq(doc, "rules", "scenario", required=False):
            if not isinstance(node, dict):
                self.diag(_line_of(doc), "rules: each entry must be a mapping")
                continue
            line = _line_of(node)
            rule_id = self.text(node, "id", "rule")
            if rule_id is None:
                continue
            what = f"rule '{rule_id}'"
            if rule_id in seen:
                self.diag(line, f"{what}: duplicate rule id")
                continue
            seen.add(rule_id)
            room = self.text(node, "room", what)
            relay = self.text(node, "relay", what)
            target = self.text(node, "target", what)
            if room is not None and room not in rooms:
                self.diag(line, f"{what}: unknown room '{room}'")
                continue
            if relay is not None and relay not in device_ids:
                self.diag(line, f"{what}: unknown relay device '{relay}'")
                continue
            if relay is not None and relay not in relays:
                self.diag(line, f"{what}: device '{relay}' is not a relay")
                continue
            conditions = []
            broken = False
            for text in self.seq(node, "when", what):
                try:
                    conditions.append(parse_condition(str(text)))
                except ValueError as err:
                    self.diag(line, f"{what}: bad condition {text!r} ({err})")
                    broken = True
            if broken or room is None or relay is None or target is None:
                continue
            hold = self.num(node, "hold_s", what, required=False, default=0.0)
            hysteresis = self.num(node, "hysteresis", what, required=False,
                                  default=0.0)
            try:
                rules.append(Rule(id=rule_id, room_id=room,
                                  conditions=tuple(conditions),
                                  relay_id=relay, target=target,
                                  hold=float(hold),
                                  hysteresis=float(hysteresis)))
            except ValueError as err:
                self.diag(line, f"{what}: {err}")
        return rules


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ScenarioError([f"{path}: unreadable ({err})"]) from None
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        line = mark.line + 1 if mark else 1
        problem = getattr(err, "problem", None) or str(err)
        raise ScenarioError([f"{path}:{line}: yaml parse error: {problem}"]) from None
    if not isinstance(doc, dict):
        raise ScenarioError([f"{path}:1: top level must be a mapping"])
    return _Builder(path, doc).build()
