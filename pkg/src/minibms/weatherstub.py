"""Deterministic stand-in for the outdoor weather provider.

Serves GET {"temp_c": value} where the value comes from a signal model
evaluated at the sim instant supplied by a clock callback. Lets scenarios
and tests run without touching the network.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable

from .model import Metric
from .signals import SignalModel

log = logging.getLogger(__name__)


class WeatherStub:
    def __init__(self, model: SignalModel, now_fn: Callable[[], float],
                 host: str = "127.0.0.1", port: int = 0):
        self.model = model
        self.now_fn = now_fn
        self.available = True  # flip off to simulate provider outages
        self.payload_override: bytes | None = None  # serve broken bodies in tests
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                if not stub.available:
                    self.send_error(503, "provider offline")
                    return
                if stub.payload_override is not None:
                    body = stub.payload_override
                else:
                    value = stub.model.value_at(Metric.OUTDOOR_TEMPERATURE, stub.now_fn())
                    body = json.dumps({"temp_c": round(value, 2)}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, fmt, *args):
                log.debug("weather stub: " + fmt, *args)

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        name="weather-stub", daemon=True)

    @property
    def endpoint(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/"

    def start(self):
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(2.0)
