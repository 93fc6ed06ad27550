"""Rules engine driving relays from sensor and occupancy state.

Rules are AND-joined conditions (metric comparisons, occupancy comparisons,
time-of-day ranges) that must hold continuously for `hold` seconds before
the action fires. Metric comparisons latch with hysteresis: a condition that
became true at threshold T releases only once the value crosses back past
T +/- hysteresis. Manual override pins a relay against auto commands for
60 sim-minutes. Commands are confirmed by acks; a missing ack is retried
once after 10 sim-seconds, then the relay is marked unknown.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field

from .model import Metric

log = logging.getLogger(__name__)

MANUAL_HOLD_S = 3600.0  # manual override expiry
ACK_TIMEOUT_S = 10.0


class AutomationError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


# --- conditions -------------------------------------------------------------

_OPS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
}

_COND_RE = re.compile(r"^(\w+)\s*(<=|>=|==|<|>)\s*(-?\d+(?:\.\d+)?)$")
_TIME_RE = re.compile(r"^time\s+in\s+(\d{2}):(\d{2})-(\d{2}):(\d{2})$")


@dataclass(frozen=True)
class Condition:
    kind: str  # metric | occupancy | time
    op: str = "=="
    value: float = 0.0
    metric: Metric | None = None
    start_s: int = 0
    end_s: int = 0


def parse_condition(text: str) -> Condition:
    text = text.strip()
    m = _TIME_RE.match(text)
    if m:
        h1, m1, h2, m2 = (int(g) for g in m.groups())
        if h1 > 23 or h2 > 24 or m1 > 59 or m2 > 59:
            raise ValueError(f"bad time range in condition {text!r}")
        return Condition(kind="time", start_s=h1 * 3600 + m1 * 60,
                         end_s=h2 * 3600 + m2 * 60)
    m = _COND_RE.match(text)
    if not m:
        raise ValueError(f"cannot parse condition {text!r}")
    subject, op, raw = m.groups()
    if subject == "occupancy":
        return Condition(kind="occupancy", op=op, value=float(raw))
    try:
        metric = Metric(subject)
    except ValueError:
        raise ValueError(f"unknown metric {subject!r} in condition {text!r}") from None
    return Condition(kind="metric", op=op, value=float(raw), metric=metric)


@dataclass(frozen=True)
class Rule:
    id: str
    room_id: str
    conditions: tuple[Condition, ...]
    relay_id: str
    target: str  # on | off
    hold: float = 0.0
    hysteresis: float = 0.0

    def __post_init__(self):
        if self.target not in ("on", "off"):
            raise ValueError(f"rule {self.id}: target must be on/off")
        if self.hold < 0 or self.hysteresis < 0:
            raise ValueError(f"rule {self.id}: hold and hysteresis must be >= 0")
        if not self.conditions:
            raise ValueError(f"rule {self.id}: needs at least one condition")


@dataclass(frozen=True)
class RelayCommand:
    relay_id: str
    target: str  # on | off
    reason: str


@dataclass
class PendingCommand:
    target: str
    sent_at: float
    retried: bool = False


@dataclass
class RelayState:
    relay_id: str
    actual: str = "unknown"  # on | off | unknown
    mode: str = "auto"  # auto | manual
    manual_expires: float | None = None
    pending: PendingCommand | None = None


@dataclass(frozen=True)
class Snapshot:
    """Latest state the engine evaluates against: one value per key."""
    now: float
    metrics: dict[tuple[str, Metric], float] = field(default_factory=dict)
    occupancy: dict[str, int] = field(default_factory=dict)

    def metric(self, room_id: str, metric: Metric) -> float | None:
        return self.metrics.get((room_id, metric))


# --- engine -----------------------------------------------------------------

class AutomationEngine:
    def __init__(self, relay_ids: list[str], rules: list[Rule], *,
                 manual_hold_s: float = MANUAL_HOLD_S,
                 ack_timeout_s: float = ACK_TIMEOUT_S):
        self.rules = list(rules)
        self.manual_hold_s = manual_hold_s
        self.ack_timeout_s = ack_timeout_s
        self._relays = {rid: RelayState(rid) for rid in relay_ids}
        for rule in self.rules:
            if rule.relay_id not in self._relays:
                raise AutomationError(
                    "UNKNOWN_RELAY", f"rule {rule.id} targets {rule.relay_id}")
        self._since: dict[str, float] = {}  # rule id -> condition-true since
        self._latched: dict[tuple[str, int], bool] = {}  # (rule, atom) -> active
        self._last_active: dict[str, bool] = {}

    # -- state access

    def relay_ids(self) -> list[str]:
        return sorted(self._relays)

    def state(self, relay_id: str) -> RelayState:
        try:
            return self._relays[relay_id]
        except KeyError:
            raise AutomationError("UNKNOWN_RELAY", relay_id) from None

    def condition_active(self, rule_id: str) -> bool:
        return self._last_active.get(rule_id, False)

    # -- condition evaluation

    def _atom_active(self, rule: Rule, idx: int, cond: Condition,
                     snapshot: Snapshot) -> bool:
        if cond.kind == "time":
            sod = math.floor(snapshot.now) % 86400
            if cond.start_s <= cond.end_s:
                return cond.start_s <= sod < cond.end_s
            return sod >= cond.start_s or sod < cond.end_s
        if cond.kind == "occupancy":
            count = snapshot.occupancy.get(rule.room_id)
            if count is None:
                log.debug("rule %s: no occupancy for %s", rule.id, rule.room_id)
                return False
            return _OPS[cond.op](count, cond.value)
        value = snapshot.metric(rule.room_id, cond.metric)
        key = (rule.id, idx)
        if value is None:
            log.debug("rule %s: no %s reading for %s",
                      rule.id, cond.metric.value, rule.room_id)
            self._latched.pop(key, None)
            return False
        threshold = cond.value
        if self._latched.get(key) and cond.op in ("<", "<=", ">", ">="):
            # release only past threshold +/- hysteresis
            shift = rule.hysteresis if cond.op in ("<", "<=") else -rule.hysteresis
            threshold += shift
        active = _OPS[cond.op](value, threshold)
        self._latched[key] = active
        return active

    def _rule_active(self, rule: Rule, snapshot: Snapshot) -> bool:
        active = all(self._atom_active(rule, idx, cond, snapshot)
                     for idx, cond in enumerate(rule.conditions))
        self._last_active[rule.id] = active
        return active

    # -- evaluation tick

    def evaluate(self, snapshot: Snapshot) -> list[RelayCommand]:
        now = snapshot.now
        for state in self._relays.values():
            if (state.mode == "manual" and state.manual_expires is not None
                    and now >= state.manual_expires):
                log.info("relay %s: manual override expired", state.relay_id)
                state.mode = "auto"
                state.manual_expires = None

        desired: dict[str, tuple[str, str]] = {}  # relay -> (target, rule id)
        for rule in self.rules:
            if not self._rule_active(rule, snapshot):
                self._since.pop(rule.id, None)
                continue
            since = self._since.setdefault(rule.id, now)
            if now - since < rule.hold:
                continue
            previous = desired.get(rule.relay_id)
            if previous is not None and previous[0] != rule.target:
                log.warning("relay %s: rule %s overrides rule %s (%s -> %s)",
                            rule.relay_id, rule.id, previous[1],
                            previous[0], rule.target)
            desired[rule.relay_id] = (rule.target, rule.id)

        commands = []
        for relay_id, (target, rule_id) in desired.items():
            state = self._relays[relay_id]
            if state.mode != "auto":
                continue
            if state.actual == target:
                continue
            if state.pending is not None and state.pending.target == target:
                continue  # command already in flight
            commands.append(RelayCommand(relay_id, target, reason=rule_id))
        return commands

    # -- manual control

    def apply_manual(self, relay_id: str, state: str | None, now: float,
                     clear: bool = False) -> RelayCommand | None:
        relay = self.state(relay_id)
        if clear:
            relay.mode = "auto"
            relay.manual_expires = None
            return None
        if state not in ("on", "off"):
            raise ValueError(f"manual state must be on/off, got {state!r}")
        relay.mode = "manual"
        relay.manual_expires = now + self.manual_hold_s
        return RelayCommand(relay_id, state, reason="manual")

    # -- command lifecycle

    def note_sent(self, relay_id: str, target: str, now: float):
        relay = self.state(relay_id)
        if relay.pending is not None and relay.pending.target == target:
            relay.pending.sent_at = now  # retry of the same transition
        else:
            relay.pending = PendingCommand(target=target, sent_at=now)

    def reconcile_ack(self, relay_id: str, value: int | str, now: float) -> RelayState:
        relay = self.state(relay_id)
        if relay.pending is None:
            raise AutomationError("UNEXPECTED_ACK",
                                  f"relay {relay_id} has no pending command")
        if isinstance(value, str):
            acked = value
        else:
            acked = "on" if value else "off"
        relay.actual = acked
        relay.pending = None
        return relay

    def check_timeouts(self, now: float) -> list[RelayCommand]:
        """Retry unacked commands once; after a second silence mark unknown."""
        retries = []
        for relay in self._relays.values():
            pending = relay.pending
            if pending is None or now - pending.sent_at < self.ack_timeout_s:
                continue
            if not pending.retried:
                pending.retried = True
                pending.sent_at = now
                retries.append(RelayCommand(relay.relay_id, pending.target,
                                            reason="retry"))
            else:
                log.warning("relay %s: no ack after retry, actual unknown",
                            relay.relay_id)
                relay.actual = "unknown"
                relay.pending = None
        return retries
