"""Operator entry points: simulate, gateway, query, report, export, replay.

Exit codes: 0 success, 1 runtime fault, 2 invalid scenario or arguments,
3 no data for the requested selection.
"""

from __future__ import annotations

import argparse
import logging
import math
import shutil
import sys
import time
from pathlib import Path

from .analytics import (
    AnalyticsError,
    HourlyProfile,
    OccupancyEvent,
    classify_light,
    comfort_report,
    occupancy_ledger,
    predict_day,
    update_profile,
)
from .model import Metric, Reading, iso_ts, parse_ts
from .runtime import build_live, build_sim
from .scenario import Scenario, ScenarioError, load_scenario
from .tstore import HEADER, StoreError, TimeSeriesStore, format_row, format_value

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAULT = 1
EXIT_INVALID = 2
EXIT_NO_DATA = 3


class CliError(Exception):
    def __init__(self, exit_code: int, message: str):
        super().__init__(message)
        self.exit_code = exit_code


def _parse_instant(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        pass
    try:
        return parse_ts(text)
    except ValueError:
        raise CliError(EXIT_INVALID,
                       f"{text!r} is neither epoch seconds nor ISO-8601 Z") from None


def _parse_metric(text: str | None) -> Metric | None:
    if text is None:
        return None
    try:
        return Metric(text)
    except ValueError:
        known = ", ".join(m.value for m in Metric)
        raise CliError(EXIT_INVALID,
                       f"unknown metric {text!r} (one of: {known})") from None


def _parse_bind(text: str | None) -> tuple[str, int] | None:
    if text is None:
        return None
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise CliError(EXIT_INVALID, f"bind {text!r} is not host:port")
    return host, int(port)


def _load(path: str) -> Scenario:
    try:
        return load_scenario(path)
    except ScenarioError as err:
        for diagnostic in err.diagnostics:
            print(diagnostic, file=sys.stderr)
        raise CliError(EXIT_INVALID,
                       f"invalid scenario ({len(err.diagnostics)} problems)") from None


def _open_store(root, scenario: Scenario | None = None) -> TimeSeriesStore:
    try:
        store = TimeSeriesStore(root)
    except StoreError as err:
        raise CliError(EXIT_FAULT, f"store at {root}: {err}") from None
    if scenario is not None:
        store.rooms = {d.device_id: d.room_id for d in scenario.devices}
    return store


def _range_args(args) -> tuple[float | None, float | None]:
    from_ts = _parse_instant(args.from_ts) if args.from_ts else None
    to_ts = _parse_instant(args.to_ts) if args.to_ts else None
    if from_ts is not None and to_ts is not None and from_ts > to_ts:
        raise CliError(EXIT_INVALID, "--from must not exceed --to")
    return from_ts, to_ts


# --- simulate / gateway ------------------------------------------------------

def _prepare_store_root(root: Path, fresh: bool):
    occupied = root.exists() and any(p.is_dir() for p in root.iterdir())
    if not occupied:
        return
    if not fresh:
        raise CliError(EXIT_FAULT,
                       f"store {root} is not empty; pass --fresh to replace it")
    shutil.rmtree(root)


def cmd_simulate(args) -> int:
    scenario = _load(args.scenario)
    store_root = Path(args.store) if args.store else scenario.store_root
    _prepare_store_root(store_root, args.fresh)
    runtime = build_sim(scenario, store_root=store_root,
                        serve_api=args.serve, bind=_parse_bind(args.bind))
    if runtime.api is not None:
        print(f"api: {runtime.api.base_url}", file=sys.stderr)
    wall_start = time.monotonic()
    covered = 0.0
    try:
        covered = runtime.run(duration_s=args.duration)
    except KeyboardInterrupt:
        log.warning("interrupted, shutting down cleanly")
    finally:
        runtime.close()
    wall = time.monotonic() - wall_start
    print(f"simulated {covered:.0f} sim-s in {wall:.1f} s wall; "
          f"{runtime.gateway.ingested} readings -> {store_root}")
    return EXIT_OK


def cmd_gateway(args) -> int:
    scenario = _load(args.scenario)
    runtime = build_live(scenario, store_root=args.store,
                         bind=_parse_bind(args.bind))
    print(f"gateway serving {runtime.api.base_url} "
          f"(compression x{scenario.compression:g}); Ctrl-C to stop",
          file=sys.stderr)
    try:
        runtime.run(duration_s=args.duration if args.duration else math.inf)
    except KeyboardInterrupt:
        pass
    finally:
        runtime.close()
    return EXIT_OK


# --- read-side commands ------------------------------------------------------

def cmd_query(args) -> int:
    store = _open_store(args.store)
    from_ts, to_ts = _range_args(args)
    rows = store.query(device=args.device, metric=_parse_metric(args.metric),
                       from_ts=from_ts, to_ts=to_ts)
    if not rows:
        print("no readings match", file=sys.stderr)
        return EXIT_NO_DATA
    print(HEADER)
    for r in rows:
        print(format_row(r))
    return EXIT_OK


def cmd_export(args) -> int:
    store = _open_store(args.store)
    metric = _parse_metric(args.metric)
    from_ts, to_ts = _range_args(args)
    if from_ts is None or to_ts is None:
        rows = store.query(device=args.device, metric=metric,
                           from_ts=from_ts, to_ts=to_ts)
        if not rows:
            print("no readings match", file=sys.stderr)
            return EXIT_NO_DATA
        if from_ts is None:
            from_ts = rows[0].ts
        if to_ts is None:
            to_ts = rows[-1].ts + 1
    series = store.export_plot_series(device=args.device, metric=metric,
                                      from_ts=from_ts, to_ts=to_ts,
                                      bucket=args.bucket * 60.0)
    if not series:
        print("no readings match", file=sys.stderr)
        return EXIT_NO_DATA
    print("bucket_start,mean")
    for bucket_start, mean in series:
        print(f"{iso_ts(bucket_start)},{format_value(mean)}")
    return EXIT_OK


OCC_KIND_BY_METRIC = {Metric.DOOR: ("door_closed", "door_open"),
                      Metric.MOTION: ("motion", "motion")}


def _rebuild_occupancy(readings: list[Reading],
                       start_ts: float) -> tuple[int, int]:
    """Final count and event total, replayed from stored event readings."""
    events = []
    for r in readings:
        if r.metric is Metric.CAMERA_COUNT:
            events.append(OccupancyEvent(r.room_id, "camera_count",
                                         int(r.value), r.ts))
        elif r.metric in OCC_KIND_BY_METRIC:
            kind = OCC_KIND_BY_METRIC[r.metric][int(r.value)]
            events.append(OccupancyEvent(r.room_id, kind, int(r.value), r.ts))
    if not events:
        return 0, 0
    series = occupancy_ledger(events, start_ts=start_ts)
    return series.steps[-1][1], len(events)


def _print_room_report(room: str, readings: list[Reading], bands) -> None:
    first, last = readings[0].ts, readings[-1].ts
    print(f"room {room}: {len(readings)} readings, "
          f"{iso_ts(first)} .. {iso_ts(last)}")
    report = comfort_report(readings, bands)
    overall = "n/a" if report.overall is None else f"{report.overall:.2f}"
    print(f"comfort overall {overall}")
    for metric in sorted(report.metrics, key=lambda m: m.value):
        mc = report.metrics[metric]
        print(f"  {metric.value:<12} mean {mc.mean_value:8.2f}  "
              f"score {mc.score:.2f}  {mc.flag}  ({mc.count} samples)")
    try:
        print(f"light: {classify_light(readings)}")
    except AnalyticsError:
        pass
    count, total = _rebuild_occupancy(readings, min(r.ts for r in readings))
    print(f"occupancy: {count} ({total} events)")
    present = [r for r in readings if r.metric is Metric.PRESENCE]
    if present:
        state = "present" if present[-1].value else "absent"
        print(f"presence: {state} (as of {iso_ts(present[-1].ts)})")


def _room_readings(store: TimeSeriesStore, scenario: Scenario, room: str,
                   from_ts, to_ts) -> list[Reading]:
    rows: list[Reading] = []
    for spec in scenario.room_devices(room):
        rows.extend(store.query(device=spec.device_id,
                                from_ts=from_ts, to_ts=to_ts))
    rows.sort(key=lambda r: (r.ts, r.device_id))
    return rows


def cmd_report(args) -> int:
    scenario = _load(args.scenario)
    store = _open_store(args.store or scenario.store_root, scenario)
    if args.room not in scenario.rooms:
        known = ", ".join(scenario.rooms)
        raise CliError(EXIT_INVALID,
                       f"unknown room {args.room!r} (one of: {known})")
    from_ts, to_ts = _range_args(args)
    readings = _room_readings(store, scenario, args.room, from_ts, to_ts)
    if not readings:
        print(f"no readings for room {args.room}", file=sys.stderr)
        return EXIT_NO_DATA
    _print_room_report(args.room, readings, scenario.bands)
    return EXIT_OK


def cmd_replay(args) -> int:
    scenario = _load(args.scenario)
    store = _open_store(args.store or scenario.store_root, scenario)
    rooms = [args.room] if args.room else list(scenario.rooms)
    if args.room and args.room not in scenario.rooms:
        known = ", ".join(scenario.rooms)
        raise CliError(EXIT_INVALID,
                       f"unknown room {args.room!r} (one of: {known})")
    profile = HourlyProfile()
    shown = 0
    for room in rooms:
        readings = _room_readings(store, scenario, room, None, None)
        if not readings:
            continue
        shown += 1
        for r in readings:
            update_profile(profile, r)
        _print_room_report(room, readings, scenario.bands)
        metrics = sorted({r.metric for r in readings}, key=lambda m: m.value)
        for metric in metrics:
            hours = predict_day(profile, room, metric)
            if all(h is None for h in hours):
                continue
            cells = " ".join("....." if h is None else f"{h:5.1f}"
                             for h in hours)
            print(f"  {metric.value:<12} hourly {cells}")
        print()
    if shown == 0:
        print("store holds no readings for the scenario's rooms",
              file=sys.stderr)
        return EXIT_NO_DATA
    return EXIT_OK


# --- argument wiring ---------------------------------------------------------

def _add_range_flags(parser):
    parser.add_argument("--from", dest="from_ts", metavar="ISO",
                        help="inclusive range start (ISO-8601 Z or epoch)")
    parser.add_argument("--to", dest="to_ts", metavar="ISO",
                        help="exclusive range end (ISO-8601 Z or epoch)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minibms",
        description="Desk-scale building platform: simulated sensors, "
                    "gateway, analytics, automation.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log at INFO instead of WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario on compressed time")
    sim.add_argument("--scenario", required=True, metavar="PATH")
    sim.add_argument("--store", metavar="PATH",
                     help="override the scenario's store path")
    sim.add_argument("--duration", type=float, metavar="SIM_S",
                     help="sim seconds to cover (default: scenario duration)")
    sim.add_argument("--fresh", action="store_true",
                     help="replace an existing store")
    sim.add_argument("--serve", action="store_true",
                     help="serve the HTTP API while simulating")
    sim.add_argument("--bind", metavar="ADDR", help="host:port for the API")
    sim.set_defaults(fn=cmd_simulate)

    gw = sub.add_parser("gateway",
                        help="serve the gateway API against live devices")
    gw.add_argument("--scenario", required=True, metavar="PATH")
    gw.add_argument("--store", metavar="PATH")
    gw.add_argument("--bind", metavar="ADDR", help="host:port for the API")
    gw.add_argument("--duration", type=float, metavar="SIM_S",
                    help="stop after this much sim time (default: run forever)")
    gw.set_defaults(fn=cmd_gateway)

    query = sub.add_parser("query", help="print stored readings as CSV")
    query.add_argument("--store", required=True, metavar="PATH")
    query.add_argument("--device", metavar="ID")
    query.add_argument("--metric", metavar="NAME")
    _add_range_flags(query)
    query.set_defaults(fn=cmd_query)

    report = sub.add_parser("report",
                            help="comfort, light, occupancy for one room")
    report.add_argument("--scenario", required=True, metavar="PATH")
    report.add_argument("--store", metavar="PATH")
    report.add_argument("--room", required=True, metavar="ID")
    _add_range_flags(report)
    report.set_defaults(fn=cmd_report)

    export = sub.add_parser("export", help="bucketed means as plot-ready CSV")
    export.add_argument("--store", required=True, metavar="PATH")
    export.add_argument("--device", metavar="ID")
    export.add_argument("--metric", metavar="NAME")
    _add_range_flags(export)
    export.add_argument("--bucket", type=float, default=60.0,
                        metavar="MINUTES", help="bucket width (default 60)")
    export.set_defaults(fn=cmd_export)

    replay = sub.add_parser("replay",
                            help="re-run analytics over an existing store")
    replay.add_argument("--scenario", required=True, metavar="PATH")
    replay.add_argument("--store", metavar="PATH")
    replay.add_argument("--room", metavar="ID")
    replay.set_defaults(fn=cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except CliError as err:
        print(f"minibms: {err}", file=sys.stderr)
        return err.exit_code
    except StoreError as err:
        print(f"minibms: {err}", file=sys.stderr)
        return EXIT_FAULT
    except OSError as err:
        print(f"minibms: {err}", file=sys.stderr)
        return EXIT_FAULT
