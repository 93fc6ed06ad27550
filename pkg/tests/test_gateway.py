"""Gateway tests: registry, liveness, socket polling, intake, HTTP API."""

import http.client
import json
import socket
import time
from types import SimpleNamespace

import pytest
import requests

from minibms import wire
from minibms.automation import AutomationEngine
from minibms.clock import SteppedClock
from minibms.devices import BleDevice, ZwaveDevice
from minibms.gateway import (
    DEFAULT_POLL_INTERVAL_S,
    FAULT_LIMIT,
    Gateway,
    GatewayError,
    PUSH_BASE_INTERVAL_S,
)
from minibms.httpapi import ApiServer
from minibms.model import DeviceDescriptor, DeviceProtocol, Metric, Reading
from minibms.signals import SignalModel, SimDeviceConfig
from minibms.tstore import TimeSeriesStore

T0 = 1488373200.0  # 2017-03-01T13:00:00Z

MAC = bytes.fromhex("c80f10b27011")


def ble_descriptor(device_id="ble1", room="room1",
                   metrics=(Metric.TEMPERATURE, Metric.HUMIDITY),
                   interval=60.0):
    return DeviceDescriptor(device_id=device_id, protocol=DeviceProtocol.BLE_SIM,
                            address=MAC, room_id=room, metrics=tuple(metrics),
                            poll_interval=interval)


def zwave_descriptor(device_id="door1", node=5, room="lab",
                     metrics=(Metric.DOOR,)):
    return DeviceDescriptor(device_id=device_id, protocol=DeviceProtocol.ZWAVE_SIM,
                            address=node, room_id=room, metrics=tuple(metrics))


def make_gateway(tmp_path, clock=None):
    store = TimeSeriesStore(tmp_path / "store")
    clock = clock or SteppedClock(T0)
    return Gateway(store, clock, sim_start=T0)


def dead_endpoint():
    """A (host, port) that refuses connections."""
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    endpoint = probe.getsockname()[:2]
    probe.close()
    return endpoint


# --- registration ------------------------------------------------------------

def test_register_ble_creates_one_job_per_metric(tmp_path):
    gw = make_gateway(tmp_path)
    desc = ble_descriptor(metrics=(Metric.TEMPERATURE, Metric.HUMIDITY,
                                   Metric.LIGHT, Metric.PRESSURE), interval=30.0)
    gw.register_device(desc, endpoint=("127.0.0.1", 1))
    jobs = gw.poll_jobs()
    assert len(jobs) == 4
    assert {j.char_id for j in jobs} == {wire.CHAR_TEMPERATURE, wire.CHAR_HUMIDITY,
                                         wire.CHAR_LIGHT, wire.CHAR_PRESSURE}
    assert all(j.interval == 30.0 for j in jobs)
    assert all(j.next_due == T0 for j in jobs)


def test_register_duplicate_id_rejected(tmp_path):
    gw = make_gateway(tmp_path)
    gw.register_device(zwave_descriptor())
    with pytest.raises(GatewayError) as err:
        gw.register_device(zwave_descriptor())
    assert err.value.code == "DUPLICATE_ID"


def test_register_push_device_creates_no_jobs(tmp_path):
    gw = make_gateway(tmp_path)
    gw.register_device(zwave_descriptor())
    assert gw.poll_jobs() == []


def test_register_ble_without_endpoint_rejected(tmp_path):
    gw = make_gateway(tmp_path)
    with pytest.raises(GatewayError) as err:
        gw.register_device(ble_descriptor())
    assert err.value.code == "INVALID_DESCRIPTOR"


def test_register_malformed_address_rejected(tmp_path):
    gw = make_gateway(tmp_path)
    bad = DeviceDescriptor(device_id="b", protocol=DeviceProtocol.BLE_SIM,
                           address=b"\x01", room_id="room1",
                           metrics=(Metric.TEMPERATURE,), poll_interval=60.0)
    with pytest.raises(GatewayError) as err:
        gw.register_device(bad, endpoint=("127.0.0.1", 1))
    assert err.value.code == "INVALID_DESCRIPTOR"


def test_presence_polls_via_scan_channel(tmp_path):
    gw = make_gateway(tmp_path)
    desc = ble_descriptor(device_id="beacon", metrics=(Metric.PRESENCE,))
    gw.register_device(desc, endpoint=("127.0.0.1", 1))
    jobs = gw.poll_jobs()
    assert len(jobs) == 1 and jobs[0].char_id == 0


# --- liveness ----------------------------------------------------------------

def test_liveness_never_seen_is_offline(tmp_path):
    gw = make_gateway(tmp_path)
    record = gw.register_device(zwave_descriptor())
    assert gw.registry.liveness(record, T0 + 9999) == "offline"


def test_liveness_polled_device_walk(tmp_path):
    gw = make_gateway(tmp_path)
    record = gw.register_device(ble_descriptor(interval=60.0),
                                endpoint=("127.0.0.1", 1))
    gw.registry.mark_seen("ble1", T0)
    assert gw.registry.liveness(record, T0 + 120) == "online"
    assert gw.registry.liveness(record, T0 + 121) == "stale"
    assert gw.registry.liveness(record, T0 + 300) == "stale"
    assert gw.registry.liveness(record, T0 + 301) == "offline"


def test_liveness_push_device_uses_base_interval(tmp_path):
    gw = make_gateway(tmp_path)
    record = gw.register_device(zwave_descriptor())
    gw.registry.mark_seen("door1", T0)
    assert PUSH_BASE_INTERVAL_S == 300.0
    assert gw.registry.liveness(record, T0 + 600) == "online"
    assert gw.registry.liveness(record, T0 + 601) == "stale"
    assert gw.registry.liveness(record, T0 + 1500) == "stale"
    assert gw.registry.liveness(record, T0 + 1501) == "offline"


def test_suspension_masks_liveness_until_next_contact(tmp_path):
    gw = make_gateway(tmp_path)
    record = gw.register_device(zwave_descriptor())
    gw.registry.mark_seen("door1", T0)
    record.suspended = True
    assert gw.registry.liveness(record, T0 + 1) == "offline"
    gw.registry.mark_seen("door1", T0 + 2)
    assert not record.suspended
    assert gw.registry.liveness(record, T0 + 3) == "online"


# --- polling over sockets ----------------------------------------------------

@pytest.fixture
def ble_stack(tmp_path):
    clock = SteppedClock(T0)
    gw = make_gateway(tmp_path, clock)
    cfg = SimDeviceConfig(
        descriptor=ble_descriptor(interval=60.0),
        signals={Metric.TEMPERATURE: SignalModel(baseline=22.5),
                 Metric.HUMIDITY: SignalModel(baseline=45.0)},
    )
    device = BleDevice(cfg, clock).start()
    gw.register_device(cfg.descriptor, endpoint=device.endpoint)
    yield SimpleNamespace(gw=gw, device=device, clock=clock)
    gw.close()
    device.stop()
    gw.store.close()


def test_poll_persists_reading_and_marks_seen(ble_stack):
    gw = ble_stack.gw
    token, feed = gw.subscribe()
    assert gw.run_due(T0) == 2
    rows = gw.store.query(device="ble1", metric=Metric.TEMPERATURE,
                          from_ts=T0 - 1, to_ts=T0 + 1)
    assert len(rows) == 1
    assert rows[0].value == pytest.approx(22.5)
    assert rows[0].ts == T0
    record = gw.registry.get("ble1")
    assert gw.registry.liveness(record, T0) == "online"
    # both polled metrics were streamed as they were stored
    lines = [json.loads(feed.get(timeout=1.0)) for _ in range(2)]
    assert {l["metric"] for l in lines} == {"temperature", "humidity"}
    gw.unsubscribe(token)


def test_poll_reschedules_at_fixed_rate(ble_stack):
    gw = ble_stack.gw
    gw.run_due(T0)
    assert gw.next_due() == T0 + 60.0
    ble_stack.clock.advance_to(T0 + 60.0)
    gw.run_due(T0 + 60.0)
    assert gw.next_due() == T0 + 120.0


def test_poll_timeout_faults_then_suspends(tmp_path):
    gw = make_gateway(tmp_path)
    desc = ble_descriptor(device_id="ghost", interval=60.0)
    record = gw.register_device(desc, endpoint=dead_endpoint())
    job = gw.poll_jobs()[0]
    for i in range(1, FAULT_LIMIT + 1):
        code = gw.poll_once(job, T0 + i)
        assert code == "TIMEOUT"
        assert record.consecutive_faults == i
    assert record.suspended
    assert gw.registry.liveness(record, T0 + 10) == "offline"


def test_run_due_skips_suspended_but_advances_schedule(tmp_path):
    gw = make_gateway(tmp_path)
    record = gw.register_device(ble_descriptor(device_id="ghost", interval=60.0),
                                endpoint=dead_endpoint())
    record.suspended = True
    executed = gw.run_due(T0 + 125)
    assert executed == 0
    assert gw.next_due() == T0 + 180.0


def test_catch_up_executes_every_missed_slot(tmp_path):
    gw = make_gateway(tmp_path)
    gw.register_device(ble_descriptor(device_id="ghost", interval=60.0,
                                      metrics=(Metric.TEMPERATURE,)),
                       endpoint=dead_endpoint())
    executed = gw.run_due(T0 + 185)
    assert executed == 4  # slots at +0, +60, +120, +180
    assert gw.next_due() == T0 + 240.0


def test_unknown_char_is_a_fault(tmp_path):
    clock = SteppedClock(T0)
    gw = make_gateway(tmp_path, clock)
    cfg = SimDeviceConfig(
        descriptor=ble_descriptor(device_id="thermo",
                                  metrics=(Metric.TEMPERATURE, Metric.HUMIDITY)),
        signals={Metric.TEMPERATURE: SignalModel(baseline=20.0)},  # no humidity
    )
    device = BleDevice(cfg, clock).start()
    try:
        record = gw.register_device(cfg.descriptor, endpoint=device.endpoint)
        humidity_job = next(j for j in gw.poll_jobs()
                            if j.metric is Metric.HUMIDITY)
        assert gw.poll_once(humidity_job, T0) == "UNKNOWN_CHAR"
        assert record.consecutive_faults == 1
    finally:
        gw.close()
        device.stop()


def test_successful_poll_resets_fault_count(ble_stack):
    gw = ble_stack.gw
    record = gw.registry.get("ble1")
    record.consecutive_faults = 4
    job = gw.poll_jobs()[0]
    assert gw.poll_once(job, T0) == "ok"
    assert record.consecutive_faults == 0


def test_scan_poll_records_presence(tmp_path):
    clock = SteppedClock(T0)
    gw = make_gateway(tmp_path, clock)
    gw.watched_macs["room1"] = "AA:BB:CC:DD:EE:01"
    cfg = SimDeviceConfig(
        descriptor=ble_descriptor(device_id="beacon", metrics=(Metric.PRESENCE,)),
        nearby_macs=((T0 - 5, (bytes.fromhex("aabbccddee01"),)),),
    )
    device = BleDevice(cfg, clock).start()
    try:
        gw.register_device(cfg.descriptor, endpoint=device.endpoint)
        assert gw.run_due(T0) == 1
        rows = gw.store.query(device="beacon", metric=Metric.PRESENCE,
                              from_ts=T0 - 1, to_ts=T0 + 1)
        assert [r.value for r in rows] == [1.0]
        assert gw.scan_history("room1")[0][1] == ("AA:BB:CC:DD:EE:01",)
    finally:
        gw.close()
        device.stop()


# --- intake ------------------------------------------------------------------

def test_door_frame_becomes_reading_and_annotation(tmp_path):
    gw = make_gateway(tmp_path)
    gw.register_device(zwave_descriptor(node=5))
    frame = wire.ZwaveFrame(node_id=5, cmd_class=wire.CMD_DOOR,
                            value=wire.ZW_ON, seq=0)
    assert gw.intake_zwave(frame, T0 + 30) == "ok"
    rows = gw.store.query(device="door1")
    assert [(r.metric, r.value, r.ts) for r in rows] == \
        [(Metric.DOOR, 1.0, T0 + 30)]
    events = gw.occupancy_events("lab")
    assert [(e.kind, e.value) for e in events] == [("door_open", 1)]
    assert gw.occupancy_count("lab") == 0  # annotations never move the count


def test_unknown_node_frame_is_dropped(tmp_path):
    gw = make_gateway(tmp_path)
    gw.register_device(zwave_descriptor(node=5))
    frame = wire.ZwaveFrame(node_id=99, cmd_class=wire.CMD_DOOR,
                            value=wire.ZW_ON, seq=0)
    assert gw.intake_zwave(frame, T0) == "unknown_node"
    assert gw.store.query() == []


def test_camera_count_sets_occupancy(tmp_path):
    gw = make_gateway(tmp_path)
    gw.register_device(zwave_descriptor(device_id="cam1", node=77, room="lab",
                                        metrics=(Metric.CAMERA_COUNT,)))
    gw.intake_camera("cam1", 3, T0 + 10)
    gw.intake_camera("cam1", 0, T0 + 20)
    assert gw.occupancy_count("lab") == 0
    rows = gw.store.query(device="cam1")
    assert [r.value for r in rows] == [3.0, 0.0]
    events = gw.occupancy_events("lab")
    assert [(e.kind, e.value) for e in events] == \
        [("camera_count", 3), ("camera_count", 0)]


def test_mesh_payload_decodes_to_reading(tmp_path):
    gw = make_gateway(tmp_path)
    desc = DeviceDescriptor(device_id="mesh7", protocol=DeviceProtocol.ZIGBEE_SIM,
                            address=7, room_id="lab",
                            metrics=(Metric.TEMPERATURE,))
    gw.register_device(desc)
    payload = wire.encode_mesh_reading("temperature", 21.37, int(T0 + 5))
    assert gw.intake_mesh(7, payload, T0 + 6) == "ok"
    rows = gw.store.query(device="mesh7")
    assert len(rows) == 1
    assert rows[0].value == pytest.approx(21.37)
    assert rows[0].ts == T0 + 5  # sensor timestamp, not arrival time


def test_mesh_unknown_source_is_dropped(tmp_path):
    gw = make_gateway(tmp_path)
    payload = wire.encode_mesh_reading("temperature", 20.0, int(T0))
    assert gw.intake_mesh(1234, payload, T0) == "unknown_node"
    assert gw.store.query() == []


def test_relay_ack_reconciles_pending_command(tmp_path):
    gw = make_gateway(tmp_path)
    gw.register_device(zwave_descriptor(device_id="relay1", node=9,
                                        metrics=(Metric.RELAY,)))
    engine = AutomationEngine(["relay1"], [])
    gw.attach_engine(engine)
    engine.note_sent("relay1", "on", T0)
    ack = wire.ZwaveFrame(node_id=9, cmd_class=wire.CMD_RELAY_ACK,
                          value=wire.ZW_ON, seq=0)
    assert gw.intake_zwave(ack, T0 + 1) == "ok"
    state = engine.state("relay1")
    assert state.actual == "on" and state.pending is None
    rows = gw.store.query(device="relay1")
    assert [r.value for r in rows] == [1.0]


def test_unexpected_ack_is_logged_not_fatal(tmp_path):
    gw = make_gateway(tmp_path)
    gw.register_device(zwave_descriptor(device_id="relay1", node=9,
                                        metrics=(Metric.RELAY,)))
    gw.attach_engine(AutomationEngine(["relay1"], []))
    ack = wire.ZwaveFrame(node_id=9, cmd_class=wire.CMD_RELAY_ACK,
                          value=wire.ZW_ON, seq=0)
    assert gw.intake_zwave(ack, T0) == "unexpected_ack"


def test_stream_silent_when_store_rejects(tmp_path):
    gw = make_gateway(tmp_path)
    gw.register_device(zwave_descriptor(node=5))
    token, feed = gw.subscribe()
    gw._ingest(Reading("door1", "lab", Metric.TEMPERATURE, 20.0, T0 + 60))
    assert json.loads(feed.get(timeout=1.0))["value"] == 20.0
    # out-of-order for the same device: store refuses, stream stays silent
    gw._ingest(Reading("door1", "lab", Metric.TEMPERATURE, 21.0, T0))
    assert feed.empty()
    assert len(gw.store.query(device="door1")) == 1
    gw.unsubscribe(token)


def test_scripted_push_events_drain_deterministically(tmp_path):
    clock = SteppedClock(T0)
    gw = make_gateway(tmp_path, clock)
    cfg = SimDeviceConfig(descriptor=zwave_descriptor(node=5),
                          events=((T0 + 10, 1.0), (T0 + 20, 0.0)))
    device = ZwaveDevice(cfg, clock).start()
    try:
        gw.register_device(cfg.descriptor, endpoint=device.endpoint)
        assert gw.drain_zwave("door1", 0, T0) == 0  # connect only
        assert device.wait_peer(2.0)
        sent = device.emit_due(T0 + 25)
        assert sent == 2
        assert gw.drain_zwave("door1", sent, T0 + 25) == 2
        rows = gw.store.query(device="door1")
        assert [r.value for r in rows] == [1.0, 0.0]
        kinds = [e.kind for e in gw.occupancy_events("lab")]
        assert kinds == ["door_open", "door_closed"]
    finally:
        gw.close()
        device.stop()


# --- HTTP API ----------------------------------------------------------------

@pytest.fixture
def api_stack(tmp_path):
    clock = SteppedClock(T0)
    gw = make_gateway(tmp_path, clock)
    ble_cfg = SimDeviceConfig(
        descriptor=ble_descriptor(interval=60.0),
        signals={Metric.TEMPERATURE: SignalModel(baseline=22.5),
                 Metric.HUMIDITY: SignalModel(baseline=45.0)},
    )
    ble_dev = BleDevice(ble_cfg, clock).start()
    gw.register_device(ble_cfg.descriptor, endpoint=ble_dev.endpoint)

    relay_cfg = SimDeviceConfig(
        descriptor=zwave_descriptor(device_id="relay1", node=9, room="lab",
                                    metrics=(Metric.RELAY,)))
    relay_dev = ZwaveDevice(relay_cfg, clock).start()
    gw.register_device(relay_cfg.descriptor, endpoint=relay_dev.endpoint)
    gw.register_device(zwave_descriptor(device_id="cam1", node=77, room="lab",
                                        metrics=(Metric.CAMERA_COUNT,)))
    gw.attach_engine(AutomationEngine(["relay1"], []))

    api = ApiServer(gw).start()
    yield SimpleNamespace(gw=gw, clock=clock, api=api, url=api.base_url,
                          ble_dev=ble_dev, relay_dev=relay_dev)
    api.stop()
    gw.close()
    ble_dev.stop()
    relay_dev.stop()
    gw.store.close()


def test_api_devices_lists_registered(api_stack):
    resp = requests.get(f"{api_stack.url}/api/v1/devices", timeout=5)
    assert resp.status_code == 200
    devices = resp.json()["devices"]
    assert [d["device_id"] for d in devices] == ["ble1", "cam1", "relay1"]
    ble = devices[0]
    assert ble["protocol"] == "ble_sim"
    assert ble["state"] == "offline"  # nothing polled yet
    assert ble["metrics"] == ["temperature", "humidity"]


def test_api_readings_filters_and_formats(api_stack):
    gw = api_stack.gw
    gw.run_due(T0)
    url = f"{api_stack.url}/api/v1/readings"
    resp = requests.get(url, params={"device": "ble1", "metric": "temperature",
                                     "from": T0 - 10, "to": T0 + 10}, timeout=5)
    assert resp.status_code == 200
    rows = resp.json()["readings"]
    assert len(rows) == 1
    assert rows[0]["value"] == 22.5
    assert rows[0]["ts"] == "2017-03-01T13:00:00Z"
    # ISO bounds select the same row
    resp = requests.get(url, params={"device": "ble1",
                                     "from": "2017-03-01T12:59:00Z",
                                     "to": "2017-03-01T13:01:00Z"}, timeout=5)
    assert len(resp.json()["readings"]) == 2  # both metrics


def test_api_readings_validation(api_stack):
    url = f"{api_stack.url}/api/v1/readings"
    assert requests.get(url, params={"metric": "warpdrive"}, timeout=5).status_code == 400
    assert requests.get(url, params={"device": "nope"}, timeout=5).status_code == 404
    assert requests.get(url, params={"from": T0 + 10, "to": T0}, timeout=5).status_code == 400
    assert requests.get(url, params={"from": "yesterday"}, timeout=5).status_code == 400


def test_api_latest_by_room(api_stack):
    api_stack.gw.run_due(T0)
    resp = requests.get(f"{api_stack.url}/api/v1/readings/latest",
                        params={"room": "room1"}, timeout=5)
    assert resp.status_code == 200
    rows = resp.json()["readings"]
    assert [r["metric"] for r in rows] == ["humidity", "temperature"]
    missing = requests.get(f"{api_stack.url}/api/v1/readings/latest",
                           params={"room": "attic"}, timeout=5)
    assert missing.status_code == 404
    bare = requests.get(f"{api_stack.url}/api/v1/readings/latest", timeout=5)
    assert bare.status_code == 400


def test_api_comfort_report(api_stack):
    api_stack.gw.run_due(T0)
    resp = requests.get(f"{api_stack.url}/api/v1/comfort",
                        params={"room": "room1"}, timeout=5)
    assert resp.status_code == 200
    body = resp.json()
    assert body["overall"] == pytest.approx(1.0)
    assert body["metrics"]["humidity"]["flag"] == "ok"
    assert body["metrics"]["temperature"]["mean_value"] == pytest.approx(22.5)
    assert body["occupancy"] == 0
    assert body["light"] is None  # no light sensor in the room


def test_api_occupancy_ledger(api_stack):
    gw = api_stack.gw
    gw.intake_camera("cam1", 2, T0 + 10)
    gw.intake_camera("cam1", 0, T0 + 20)
    resp = requests.get(f"{api_stack.url}/api/v1/occupancy",
                        params={"room": "lab"}, timeout=5)
    body = resp.json()
    assert body["count"] == 0
    assert [s["count"] for s in body["steps"]] == [0, 2, 0]
    assert body["steps"][0]["ts"] == "2017-03-01T13:00:00Z"


def test_api_predictions(api_stack):
    api_stack.gw.run_due(T0)
    resp = requests.get(f"{api_stack.url}/api/v1/predictions",
                        params={"room": "room1", "metric": "temperature"},
                        timeout=5)
    hours = resp.json()["hours"]
    assert len(hours) == 24
    assert hours[13] == pytest.approx(22.5)  # T0 is 13:00 UTC
    assert all(h is None for i, h in enumerate(hours) if i != 13)
    missing = requests.get(f"{api_stack.url}/api/v1/predictions",
                           params={"room": "room1"}, timeout=5)
    assert missing.status_code == 400


def test_api_feedback_roundtrip(api_stack):
    url = f"{api_stack.url}/api/v1/feedback"
    resp = requests.post(url, json={"room": "room1", "vote": 1,
                                    "note": "finally warm"}, timeout=5)
    assert resp.status_code == 200
    listing = requests.get(url, timeout=5).json()["feedback"]
    assert len(listing) == 1
    assert listing[0]["vote"] == 1 and listing[0]["room"] == "room1"
    assert requests.post(url, json={"room": "room1", "vote": 2},
                         timeout=5).status_code == 400
    assert requests.post(url, json={"room": "attic", "vote": 0},
                         timeout=5).status_code == 404


def test_api_band_update_changes_scoring(api_stack):
    api_stack.gw.run_due(T0)
    url = f"{api_stack.url}/api/v1/comfort-bands"
    resp = requests.put(url, json={"temperature": {"lo": 10, "hi": 15, "span": 5}},
                        timeout=5)
    assert resp.status_code == 200
    assert resp.json()["bands"]["temperature"]["hi"] == 15
    comfort = requests.get(f"{api_stack.url}/api/v1/comfort",
                           params={"room": "room1"}, timeout=5).json()
    # 22.5 C sits 7.5 over the band top with span 5: fully uncomfortable
    assert comfort["metrics"]["temperature"]["flag"] == "above_band"
    assert comfort["metrics"]["temperature"]["score"] == pytest.approx(0.0)


def test_api_band_update_rejects_nonsense(api_stack):
    url = f"{api_stack.url}/api/v1/comfort-bands"
    before = dict(api_stack.gw.bands)
    assert requests.put(url, json={"temperature": {"lo": 30, "hi": 20, "span": 5}},
                        timeout=5).status_code == 400
    assert requests.put(url, json={"warpdrive": {"lo": 1, "hi": 2, "span": 1}},
                        timeout=5).status_code == 400
    assert requests.put(url, json={}, timeout=5).status_code == 400
    assert api_stack.gw.bands == before


def test_api_relay_manual_actuates_and_reconciles(api_stack):
    url = f"{api_stack.url}/api/v1/relays/relay1"
    resp = requests.post(url, json={"state": "on", "mode": "manual"}, timeout=5)
    assert resp.status_code == 200
    body = resp.json()
    assert body["sent"] is True
    assert body["relay"]["actual"] == "on"  # ack consumed inline
    assert body["relay"]["mode"] == "manual"
    assert body["relay"]["pending"] is False
    assert api_stack.relay_dev.relay_state == wire.ZW_ON


def test_api_relay_repeat_is_idempotent(api_stack):
    url = f"{api_stack.url}/api/v1/relays/relay1"
    requests.post(url, json={"state": "on", "mode": "manual"}, timeout=5)
    assert api_stack.gw._zw_seq.get("relay1") == 1
    resp = requests.post(url, json={"state": "on", "mode": "manual"}, timeout=5)
    assert resp.status_code == 200
    assert resp.json()["sent"] is False
    assert api_stack.gw._zw_seq.get("relay1") == 1  # no second wire frame


def test_api_relay_auto_conflicts_with_manual(api_stack):
    url = f"{api_stack.url}/api/v1/relays/relay1"
    requests.post(url, json={"state": "on", "mode": "manual"}, timeout=5)
    conflict = requests.post(url, json={"state": "off", "mode": "auto"}, timeout=5)
    assert conflict.status_code == 409
    assert conflict.json()["error"] == "MANUAL_OVERRIDE"
    agree = requests.post(url, json={"state": "on", "mode": "auto"}, timeout=5)
    assert agree.status_code == 200 and agree.json()["sent"] is False


def test_api_relay_clear_restores_auto(api_stack):
    url = f"{api_stack.url}/api/v1/relays/relay1"
    requests.post(url, json={"state": "on", "mode": "manual"}, timeout=5)
    cleared = requests.post(url, json={"mode": "clear"}, timeout=5)
    assert cleared.status_code == 200
    assert cleared.json()["relay"]["mode"] == "auto"
    off = requests.post(url, json={"state": "off", "mode": "auto"}, timeout=5)
    assert off.status_code == 200 and off.json()["sent"] is True
    assert off.json()["relay"]["actual"] == "off"
    assert api_stack.relay_dev.relay_state == wire.ZW_OFF


def test_api_relay_validation(api_stack):
    base = f"{api_stack.url}/api/v1/relays"
    assert requests.post(f"{base}/nope", json={"state": "on", "mode": "manual"},
                         timeout=5).status_code == 404
    assert requests.post(f"{base}/relay1", json={"state": "on", "mode": "soonish"},
                         timeout=5).status_code == 400
    assert requests.post(f"{base}/relay1", json={"state": "dim", "mode": "manual"},
                         timeout=5).status_code == 400
    assert requests.post(f"{base}/relay1", data=b"not json",
                         timeout=5).status_code == 400


def test_api_relay_without_engine_unavailable(tmp_path):
    gw = make_gateway(tmp_path)
    api = ApiServer(gw).start()
    try:
        resp = requests.post(f"{api.base_url}/api/v1/relays/relay1",
                             json={"state": "on", "mode": "manual"}, timeout=5)
        assert resp.status_code == 503
    finally:
        api.stop()
        gw.store.close()


def test_api_unknown_paths_404(api_stack):
    assert requests.get(f"{api_stack.url}/api/v1/nope", timeout=5).status_code == 404
    assert requests.get(f"{api_stack.url}/elsewhere", timeout=5).status_code == 404
    assert requests.post(f"{api_stack.url}/api/v1/devices", json={},
                         timeout=5).status_code == 404


def test_api_stream_delivers_reading_promptly(api_stack):
    gw = api_stack.gw
    conn = http.client.HTTPConnection("127.0.0.1", api_stack.api.port, timeout=2.0)
    try:
        conn.request("GET", "/api/v1/stream")
        resp = conn.getresponse()
        assert resp.status == 200
        assert resp.headers["Content-Type"] == "application/x-ndjson"
        started = time.monotonic()
        gw._ingest(Reading("ble1", "room1", Metric.TEMPERATURE, 23.0, T0 + 60))
        line = resp.readline()
        elapsed = time.monotonic() - started
        payload = json.loads(line)
        assert payload["value"] == 23.0
        assert payload["ts"] == "2017-03-01T13:01:00Z"
        assert elapsed < 2.0
    finally:
        conn.close()
