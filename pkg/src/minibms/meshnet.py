"""Multi-hop mesh simulator: flood route discovery, unicast replies, routed data.

Single-threaded discrete-event core. Route discovery floods a request with
per-node duplicate suppression; the target unicasts a reply along the
recorded reverse path. Data frames follow learned routes hop by hop, with
per-link loss, latency, and a bounded retry budget.

Event ordering is a stable (time, tick) heap and neighbors are always
expanded in ascending node-id order, so zero-latency floods resolve ties
as: earliest arrival first, then lowest neighbor id. Same seed, same runs.
"""

from __future__ import annotations

import heapq
import itertools
import random
from dataclasses import dataclass, field
from enum import Enum

from . import wire


@dataclass(frozen=True)
class Link:
    loss: float = 0.0  # probability each transmission attempt is consumed
    latency: float = 0.0  # sim seconds per hop

    def __post_init__(self):
        if not 0.0 <= self.loss <= 1.0:
            raise ValueError(f"loss must be in [0,1], got {self.loss}")
        if self.latency < 0.0:
            raise ValueError("latency must be non-negative")


class Topology:
    """Undirected graph of node ids with per-link loss/latency."""

    def __init__(self):
        self._adj: dict[int, dict[int, Link]] = {}

    def add_node(self, node_id: int):
        if not 0 <= node_id <= 0xFFFF:
            raise ValueError(f"node id must be u16, got {node_id}")
        self._adj.setdefault(node_id, {})

    def add_link(self, a: int, b: int, loss: float = 0.0, latency: float = 0.0):
        if a == b:
            raise ValueError("self-loops not allowed")
        self.add_node(a)
        self.add_node(b)
        link = Link(loss=loss, latency=latency)
        self._adj[a][b] = link
        self._adj[b][a] = link

    @property
    def nodes(self) -> list[int]:
        return sorted(self._adj)

    def edge_count(self) -> int:
        return sum(len(n) for n in self._adj.values()) // 2

    def neighbors(self, node_id: int) -> list[int]:
        return sorted(self._adj[node_id])

    def link(self, a: int, b: int) -> Link:
        return self._adj[a][b]

    def set_link_loss(self, a: int, b: int, loss: float):
        """Degrade or restore an existing link in place."""
        old = self._adj[a][b]
        link = Link(loss=loss, latency=old.latency)
        self._adj[a][b] = link
        self._adj[b][a] = link

    def __contains__(self, node_id: int) -> bool:
        return node_id in self._adj


@dataclass
class RouteEntry:
    next_hop: int
    hop_count: int
    learned_at: float


class RouteStatus(Enum):
    OK = "ok"
    NO_ROUTE = "no_route"


class DeliveryStatus(Enum):
    DELIVERED = "delivered"
    NO_ROUTE = "no_route"
    DROPPED_TTL = "dropped_ttl"
    DROPPED_LOSS = "dropped_loss"


@dataclass
class RouteOutcome:
    status: RouteStatus
    hop_count: int = 0
    next_hop: int | None = None
    rreq_transmissions: int = 0


@dataclass
class DeliveryOutcome:
    status: DeliveryStatus
    hops: int = 0
    visited: list[int] = field(default_factory=list)


@dataclass
class Delivery:
    src: int
    dst: int
    payload: bytes
    hops: int
    ts: float


@dataclass
class _Node:
    node_id: int
    routes: dict[int, RouteEntry] = field(default_factory=dict)
    seen: dict[tuple[int, int], float] = field(default_factory=dict)  # (src,seq) -> expiry
    rreq_seq: int = 0
    data_seq: int = 0


class MeshNet:
    def __init__(self, topology: Topology, *, initial_ttl: int = 8,
                 route_ttl: float = 300.0, dedupe_ttl: float = 30.0,
                 discovery_timeout: float = 5.0, retries: int = 3,
                 seed: int = 0, start_time: float = 0.0):
        self.topology = topology
        self.initial_ttl = initial_ttl
        self.route_ttl = route_ttl
        self.dedupe_ttl = dedupe_ttl
        self.discovery_timeout = discovery_timeout
        self.retries = retries
        self._rng = random.Random(seed)
        self._now = start_time
        self._queue: list = []
        self._tick = itertools.count()
        self._nodes = {nid: _Node(nid) for nid in topology.nodes}
        self.deliveries: list[Delivery] = []
        self.rreq_tx = 0
        self.rrep_tx = 0
        self.data_tx = 0

    # --- event machinery ---------------------------------------------------

    def now(self) -> float:
        return self._now

    def _schedule(self, at: float, fn, *args):
        heapq.heappush(self._queue, (at, next(self._tick), fn, args))

    def _run(self, until: float | None = None):
        while self._queue:
            at, _, fn, args = self._queue[0]
            if until is not None and at > until:
                break
            heapq.heappop(self._queue)
            self._now = max(self._now, at)
            fn(*args)

    def _advance(self, now: float | None):
        if now is not None and now > self._now:
            self._run(until=now)
            self._now = max(self._now, now)

    def advance_to(self, now: float):
        """Advance internal sim time, processing queued events on the way."""
        self._advance(now)

    def _lossy_transmit(self, a: int, b: int, budget: int) -> tuple[bool, float]:
        """Try up to `budget` transmissions over link a-b.

        Returns (survived, latency). Draw order is deterministic given the
        seed and event order.
        """
        link = self.topology.link(a, b)
        for _ in range(budget):
            if link.loss == 0.0 or self._rng.random() >= link.loss:
                return True, link.latency
        return False, link.latency

    # --- dedupe ------------------------------------------------------------

    def dedupe_seen(self, node_id: int, src: int, seq: int) -> bool:
        """True if (src, seq) is fresh at node; records it for dedupe_ttl."""
        node = self._nodes[node_id]
        key = (src, seq)
        expiry = node.seen.get(key)
        if expiry is not None and expiry > self._now:
            return False
        node.seen[key] = self._now + self.dedupe_ttl
        return True

    def _fresh_route(self, node_id: int, dst: int) -> RouteEntry | None:
        entry = self._nodes[node_id].routes.get(dst)
        if entry is None:
            return None
        if self._now - entry.learned_at > self.route_ttl:
            del self._nodes[node_id].routes[dst]
            return None
        return entry

    def routes(self, node_id: int) -> dict[int, RouteEntry]:
        return dict(self._nodes[node_id].routes)

    # --- route discovery ---------------------------------------------------

    def discover_route(self, origin: int, target: int, now: float | None = None) -> RouteOutcome:
        if origin not in self.topology or target not in self.topology:
            raise KeyError("origin and target must be topology nodes")
        self._advance(now)
        if origin == target:
            return RouteOutcome(RouteStatus.OK, hop_count=0, next_hop=origin)

        rreq_before = self.rreq_tx
        node = self._nodes[origin]
        seq = node.rreq_seq
        node.rreq_seq = (node.rreq_seq + 1) & 0xFF
        self.dedupe_seen(origin, origin, seq)  # never re-forward own flood

        frame = wire.MeshFrame(type=wire.MESH_RREQ, src=origin, dst=target,
                               seq=seq, ttl=self.initial_ttl, hops=0)
        deadline = self._now + self.discovery_timeout
        self._broadcast_rreq(origin, frame)
        self._run(until=deadline)

        entry = self._fresh_route(origin, target)
        if entry is None:
            return RouteOutcome(RouteStatus.NO_ROUTE,
                                rreq_transmissions=self.rreq_tx - rreq_before)
        return RouteOutcome(RouteStatus.OK, hop_count=entry.hop_count,
                            next_hop=entry.next_hop,
                            rreq_transmissions=self.rreq_tx - rreq_before)

    def _broadcast_rreq(self, sender: int, frame: wire.MeshFrame, exclude: int | None = None):
        for nb in self.topology.neighbors(sender):
            if nb == exclude:
                continue
            self.rreq_tx += 1
            survived, latency = self._lossy_transmit(sender, nb, budget=1)
            if survived:
                self._schedule(self._now + latency, self._receive_rreq, nb, sender, frame)

    def _receive_rreq(self, node_id: int, prev: int, frame: wire.MeshFrame):
        if not self.dedupe_seen(node_id, frame.src, frame.seq):
            return
        distance = frame.hops + 1
        known = self._fresh_route(node_id, frame.src)
        if known is None or known.hop_count >= distance:
            self._nodes[node_id].routes[frame.src] = RouteEntry(prev, distance, self._now)
        if node_id == frame.dst:
            rrep = wire.MeshFrame(type=wire.MESH_RREP, src=node_id, dst=frame.src,
                                  seq=frame.seq, ttl=self.initial_ttl, hops=0)
            self._forward_rrep(node_id, rrep)
            return
        if frame.ttl == 0:
            return
        fwd = wire.MeshFrame(type=wire.MESH_RREQ, src=frame.src, dst=frame.dst,
                             seq=frame.seq, ttl=frame.ttl - 1, hops=frame.hops + 1)
        self._broadcast_rreq(node_id, fwd, exclude=prev)

    def _forward_rrep(self, node_id: int, frame: wire.MeshFrame):
        entry = self._fresh_route(node_id, frame.dst)
        if entry is None:
            return  # reverse route expired mid-reply; discovery times out
        self.rrep_tx += 1
        survived, latency = self._lossy_transmit(node_id, entry.next_hop, budget=1)
        if survived:
            self._schedule(self._now + latency, self._receive_rrep,
                           entry.next_hop, node_id, frame)

    def _receive_rrep(self, node_id: int, prev: int, frame: wire.MeshFrame):
        distance = frame.hops + 1
        known = self._fresh_route(node_id, frame.src)
        if known is None or known.hop_count >= distance:
            self._nodes[node_id].routes[frame.src] = RouteEntry(prev, distance, self._now)
        if node_id == frame.dst:
            return  # origin learned the route
        fwd = wire.MeshFrame(type=wire.MESH_RREP, src=frame.src, dst=frame.dst,
                             seq=frame.seq, ttl=frame.ttl - 1, hops=frame.hops + 1)
        if fwd.ttl < 0:
            return
        self._forward_rrep(node_id, fwd)

    # --- data forwarding ---------------------------------------------------

    def send_data(self, origin: int, target: int, payload: bytes,
                  now: float | None = None) -> DeliveryOutcome:
        if len(payload) > wire.MESH_MAX_PAYLOAD:
            raise ValueError(f"payload over {wire.MESH_MAX_PAYLOAD} bytes")
        self._advance(now)
        if origin == target:
            self.deliveries.append(Delivery(origin, target, payload, 0, self._now))
            return DeliveryOutcome(DeliveryStatus.DELIVERED, hops=0, visited=[origin])

        if self._fresh_route(origin, target) is None:
            found = self.discover_route(origin, target)
            if found.status is not RouteStatus.OK:
                return DeliveryOutcome(DeliveryStatus.NO_ROUTE, visited=[origin])

        node = self._nodes[origin]
        frame = wire.MeshFrame(type=wire.MESH_DATA, src=origin, dst=target,
                               seq=node.data_seq, ttl=self.initial_ttl, hops=0,
                               payload=payload)
        node.data_seq = (node.data_seq + 1) & 0xFF
        outcome = DeliveryOutcome(DeliveryStatus.NO_ROUTE, visited=[origin])
        self._route_data(origin, frame, outcome)
        self._run()
        return outcome

    def inject_data(self, node_id: int, frame: wire.MeshFrame) -> DeliveryOutcome:
        """Drop a crafted DATA frame into the net at a forwarder (test hook)."""
        outcome = DeliveryOutcome(DeliveryStatus.NO_ROUTE, visited=[])
        self._receive_data(node_id, frame, outcome)
        self._run()
        return outcome

    def _route_data(self, node_id: int, frame: wire.MeshFrame, outcome: DeliveryOutcome):
        entry = self._fresh_route(node_id, frame.dst)
        if entry is None:
            outcome.status = DeliveryStatus.NO_ROUTE
            return
        self.data_tx += 1
        survived, latency = self._lossy_transmit(node_id, entry.next_hop,
                                                 budget=self.retries + 1)
        if not survived:
            outcome.status = DeliveryStatus.DROPPED_LOSS
            return
        self._schedule(self._now + latency, self._receive_data,
                       entry.next_hop, frame, outcome)

    def _receive_data(self, node_id: int, frame: wire.MeshFrame, outcome: DeliveryOutcome):
        assert node_id not in outcome.visited, f"routing loop at node {node_id}"
        outcome.visited.append(node_id)
        if node_id == frame.dst:
            outcome.status = DeliveryStatus.DELIVERED
            outcome.hops = frame.hops + 1
            self.deliveries.append(Delivery(frame.src, frame.dst, frame.payload,
                                            frame.hops + 1, self._now))
            return
        if frame.ttl == 0:
            outcome.status = DeliveryStatus.DROPPED_TTL
            return
        fwd = wire.MeshFrame(type=wire.MESH_DATA, src=frame.src, dst=frame.dst,
                             seq=frame.seq, ttl=frame.ttl - 1, hops=frame.hops + 1,
                             payload=frame.payload)
        self._route_data(node_id, fwd, outcome)

    def pop_deliveries(self) -> list[Delivery]:
        out = self.deliveries
        self.deliveries = []
        return out
