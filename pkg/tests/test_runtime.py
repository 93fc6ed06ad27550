"""End-to-end runs of scripted scenarios against the discrete-event runtime."""

import hashlib
import http.client
import json
from pathlib import Path

from minibms.model import Metric, parse_ts
from minibms.runtime import build_live, build_sim
from minibms.scenario import load_scenario

T0 = 1488326400.0  # 2017-03-01T00:00:00Z

MINI = """\
clock:
  start: "2017-03-01T00:00:00Z"
  compression: 1440
  duration_s: 7200
seed: 11
store: ./store
rooms:
  - id: dorm
  - id: lab
devices:
  - id: env1
    protocol: ble_sim
    room: dorm
    address: "AA:BB:CC:00:00:01"
    poll_interval_s: 60
    metrics: [temperature, humidity]
    signals:
      temperature: {baseline: 21.0, amplitude: 2.0, sigma: 0.2}
      humidity: {baseline: 40.0}
  - id: door1
    protocol: zwave_sim
    room: lab
    address: 5
    metrics: [door]
    events:
      - {at: 300, value: 1}
      - {at: 330, value: 0}
  - id: cam1
    protocol: zwave_sim
    room: lab
    address: 77
    metrics: [camera_count]
    events:
      - {at: 30, value: 1}
      - {at: 1800, value: 0}
  - id: relay1
    protocol: zwave_sim
    room: lab
    address: 9
    metrics: [relay]
  - id: mesh1
    protocol: zigbee_sim
    room: lab
    address: 2
    push_interval_s: 300
    metrics: [light]
    signals:
      light: {baseline: 420.0, sigma: 5.0}
mesh:
  sink: 1
  links:
    - {a: 1, b: 2}
weather:
  interval_s: 600
  baseline: -2.0
  amplitude: 4.0
rules:
  - id: lights-out
    room: lab
    when: ["occupancy == 0"]
    hold_s: 600
    relay: relay1
    target: "off"
"""


def run_mini(tmp_path, name="a", text=MINI, duration=None):
    scen_dir = tmp_path / name
    scen_dir.mkdir()
    path = scen_dir / "mini.yaml"
    path.write_text(text)
    scenario = load_scenario(path)
    runtime = build_sim(scenario)
    try:
        runtime.run(duration_s=duration)
    finally:
        runtime.close()
    return scenario, runtime


def rows_by_key(store_root):
    out = {}
    for day_file in sorted(Path(store_root).rglob("*.csv")):
        for line in day_file.read_text().splitlines()[1:]:
            iso, device, metric, value, _unit = line.split(",")
            out.setdefault((device, metric), []).append(
                (parse_ts(iso), float(value)))
    return out


def test_row_counts_match_the_schedule(tmp_path):
    scenario, runtime = run_mini(tmp_path)
    rows = rows_by_key(scenario.store_root)
    # polled BLE: one row per 60 s slot over [0, 7200)
    assert len(rows[("env1", "temperature")]) == 120
    assert len(rows[("env1", "humidity")]) == 120
    # pushed mesh: every 300 s
    assert len(rows[("mesh1", "light")]) == 24
    # weather fetched every 600 s
    assert len(rows[("weather", "outdoor_temperature")]) == 12
    # scripted contact/camera events land once each
    assert len(rows[("door1", "door")]) == 2
    assert len(rows[("cam1", "camera_count")]) == 2
    assert runtime.gateway.ingested == sum(len(v) for v in rows.values())


def test_poll_timestamps_are_slot_aligned(tmp_path):
    scenario, _ = run_mini(tmp_path)
    rows = rows_by_key(scenario.store_root)
    ts = [t for t, _ in rows[("env1", "temperature")]]
    assert ts == [T0 + 60.0 * k for k in range(120)]
    mesh_ts = [t for t, _ in rows[("mesh1", "light")]]
    assert mesh_ts == [T0 + 300.0 * k for k in range(24)]


def test_scripted_events_keep_their_scripted_times(tmp_path):
    scenario, _ = run_mini(tmp_path)
    rows = rows_by_key(scenario.store_root)
    assert rows[("door1", "door")] == [(T0 + 300.0, 1.0), (T0 + 330.0, 0.0)]
    assert [t for t, _ in rows[("cam1", "camera_count")]] == \
        [T0 + 30.0, T0 + 1800.0]


def test_occupancy_hold_fires_exactly_one_relay_command(tmp_path):
    scenario, runtime = run_mini(tmp_path)
    rows = rows_by_key(scenario.store_root)
    # camera occupies the lab at t+30, clears at t+1800; the rule needs the
    # room empty for 600 s, so the single off command lands at t+2400
    assert rows[("relay1", "relay")] == [(T0 + 2400.0, 0.0)]
    relay = runtime.engine.state("relay1")
    assert relay.actual == "off"
    assert relay.pending is None


def test_two_runs_produce_byte_identical_stores(tmp_path):
    scenario_a, _ = run_mini(tmp_path, "a")
    scenario_b, _ = run_mini(tmp_path, "b")

    def digest(root):
        out = {}
        for f in sorted(Path(root).rglob("*.csv")):
            out[str(f.relative_to(root))] = hashlib.sha256(
                f.read_bytes()).hexdigest()
        return out

    da, db = digest(scenario_a.store_root), digest(scenario_b.store_root)
    assert da == db
    assert len(da) >= 6


def test_duration_override_trims_the_run(tmp_path):
    scenario, runtime = run_mini(tmp_path, duration=600)
    rows = rows_by_key(scenario.store_root)
    assert len(rows[("env1", "temperature")]) == 10
    assert ("relay1", "relay") not in rows  # hold never elapses


def test_api_serves_while_simulation_runs(tmp_path):
    scen_dir = tmp_path / "api"
    scen_dir.mkdir()
    path = scen_dir / "mini.yaml"
    path.write_text(MINI)
    scenario = load_scenario(path)
    runtime = build_sim(scenario, serve_api=True, bind=("127.0.0.1", 0))
    try:
        runtime.run(duration_s=600)
        conn = http.client.HTTPConnection("127.0.0.1", runtime.api.port,
                                          timeout=5)
        conn.request("GET", "/api/v1/devices")
        resp = conn.getresponse()
        body = json.loads(resp.read())
        assert resp.status == 200
        assert {d["device_id"] for d in body["devices"]} >= \
            {"env1", "door1", "relay1", "mesh1"}
        conn.request(
            "GET", "/api/v1/readings?device=env1&metric=temperature")
        rows = json.loads(conn.getresponse().read())["readings"]
        assert len(rows) == 10
        conn.close()
    finally:
        runtime.close()


def test_wall_paced_runtime_covers_the_window(tmp_path):
    scen_dir = tmp_path / "live"
    scen_dir.mkdir()
    path = scen_dir / "mini.yaml"
    # crank compression so 600 sim-s pass in well under a second
    path.write_text(MINI.replace("compression: 1440", "compression: 6000"))
    scenario = load_scenario(path)
    runtime = build_live(scenario, bind=("127.0.0.1", 0))
    try:
        covered = runtime.run(duration_s=600)
    finally:
        runtime.close()
    assert covered >= 600.0
    rows = rows_by_key(scenario.store_root)
    assert len(rows[("env1", "temperature")]) == 10


def test_signal_values_follow_the_model(tmp_path):
    scenario, _ = run_mini(tmp_path)
    rows = rows_by_key(scenario.store_root)
    # humidity has no noise and no swing: every sample is the baseline
    assert all(v == 40.0 for _, v in rows[("env1", "humidity")])
    # noisy temperature stays near its 21 +/- 2 swing
    temps = [v for _, v in rows[("env1", "temperature")]]
    assert all(17.0 < v < 25.0 for v in temps)
    assert len(set(temps)) > 10  # noise actually varies
    device = scenario.device("env1")
    model = device.cfg.signals[Metric.TEMPERATURE]
    expected = float(f"{model.value_at(Metric.TEMPERATURE, T0 + 60.0):.2f}")
    assert rows[("env1", "temperature")][1][1] == expected
