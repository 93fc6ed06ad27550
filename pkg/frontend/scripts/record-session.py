#!/usr/bin/env python3
"""Record a live gateway session into tests/fixtures/session.json.

Runs the bundled default scenario with the HTTP API served, captures a slice
of the NDJSON stream plus representative REST exchanges (including error
shapes), and writes them as one fixture the dashboard tests replay. Needs
the minibms package installed (pip install -e ../.. or similar).

Usage: python3 scripts/record-session.py
"""

import http.client
import json
import sys
import threading
import time
from pathlib import Path

from minibms.runtime import build_sim
from minibms.scenario import load_scenario

ROOT = Path(__file__).resolve().parent.parent
SCENARIO = ROOT.parent / "scenarios" / "default.yaml"
OUT = ROOT / "tests" / "fixtures" / "session.json"
STREAM_LINES = 60


def capture_stream(port: int, sink: list[str], ready: threading.Event):
    conn = http.client.HTTPConnection("127.0.0.1", port, timeout=30)
    conn.request("GET", "/api/v1/stream")
    resp = conn.getresponse()
    ready.set()
    while len(sink) < STREAM_LINES:
        line = resp.fp.readline()
        if not line:
            break
        line = line.strip()
        if line:
            sink.append(line.decode())
    conn.close()


def call(port: int, method: str, path: str, body=None):
    conn = http.client.HTTPConnection("127.0.0.1", port, timeout=10)
    payload = None if body is None else json.dumps(body)
    headers = {"Content-Type": "application/json"} if payload else {}
    conn.request(method, path, body=payload, headers=headers)
    resp = conn.getresponse()
    data = json.loads(resp.read())
    conn.close()
    return {"status": resp.status, "body": data}


def main() -> int:
    import tempfile

    scenario = load_scenario(SCENARIO)
    store = Path(tempfile.mkdtemp()) / "store"
    runtime = build_sim(scenario, store_root=store, serve_api=True,
                        bind=("127.0.0.1", 0))
    port = runtime.api.port
    lines: list[str] = []
    ready = threading.Event()
    tap = threading.Thread(target=capture_stream, args=(port, lines, ready),
                           daemon=True)
    tap.start()
    ready.wait(5)
    try:
        runtime.run(duration_s=7200)  # two sim hours feed the stream
        for _ in range(100):
            if len(lines) >= STREAM_LINES:
                break
            time.sleep(0.05)

        session = {
            "recorded_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "scenario": SCENARIO.name,
            "stream": [json.loads(l) for l in lines[:STREAM_LINES]],
            "devices": call(port, "GET", "/api/v1/devices"),
            "comfort": {
                room: call(port, "GET", f"/api/v1/comfort?room={room}")
                for room in scenario.rooms
            },
            "occupancy": call(port, "GET", "/api/v1/occupancy?room=lab"),
            "predictions": call(
                port, "GET",
                "/api/v1/predictions?room=dorm1&metric=temperature"),
            "latest": {
                room: call(port, "GET", f"/api/v1/readings/latest?room={room}")
                for room in scenario.rooms
            },
            "relay": {
                "manual_on": call(port, "POST", "/api/v1/relays/lab-lights",
                                  {"mode": "manual", "state": "on"}),
                "auto_conflict": call(port, "POST",
                                      "/api/v1/relays/lab-lights",
                                      {"mode": "auto", "state": "off"}),
                "clear": call(port, "POST", "/api/v1/relays/lab-lights",
                              {"mode": "clear"}),
                "unknown": call(port, "POST", "/api/v1/relays/nope",
                                {"mode": "manual", "state": "on"}),
            },
            "bands": {
                "ok": call(port, "PUT", "/api/v1/comfort-bands",
                           {"humidity": {"lo": 40, "hi": 50, "span": 15}}),
                "bad": call(port, "PUT", "/api/v1/comfort-bands",
                            {"humidity": {"lo": 50, "hi": 40, "span": 15}}),
            },
            "feedback": {
                "post": call(port, "POST", "/api/v1/feedback",
                             {"room": "dorm1", "vote": 1,
                              "note": "much better after the humidifier"}),
                "list": call(port, "GET", "/api/v1/feedback?room=dorm1"),
            },
        }
    finally:
        runtime.close()

    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(session, indent=2) + "\n")
    print(f"wrote {OUT} ({len(lines)} stream lines)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
