"""Positional topology, on-demand route discovery, disjoint multipath
selection, maintenance against movement, and multicast transmission.

Discovery floods a request (every node forwards once, duplicate
suppressed), the destination answers along the reverse pointers, and the
resulting entry stays fresh for `expiry` seconds; a discovery that hits a
fresh entry costs zero control messages. Maintenance re-validates path
links against current positions; a broken active path fails over to the
next priority path and the packet in flight is lost.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import AllPathsBroken, NoRoute, ValidationError

DEFAULT_ROUTE_EXPIRY_S = 30.0
DISCOVERY_ATTEMPTS = 3
DEFAULT_PACKET_SIZE = 1024


@dataclass
class Topology:
    """Geometric node graph: links hold only while both ends stay in range."""

    positions: dict[int, tuple[float, float]]
    links: set[tuple[int, int]]
    range_m: float
    capacity: Optional[int] = None
    components: list[frozenset[int]] = field(default_factory=list)

    def distance(self, a: int, b: int) -> float:
        (xa, ya), (xb, yb) = self.positions[a], self.positions[b]
        return math.hypot(xa - xb, ya - yb)

    def link_alive(self, a: int, b: int) -> bool:
        key = (a, b) if a < b else (b, a)
        return key in self.links and self.distance(a, b) <= self.range_m

    def neighbors(self, node: int) -> list[int]:
        out = []
        for a, b in self.links:
            if a == node and self.distance(a, b) <= self.range_m:
                out.append(b)
            elif b == node and self.distance(a, b) <= self.range_m:
                out.append(a)
        return sorted(out)

    def degree(self, node: int) -> int:
        return sum(1 for a, b in self.links if node in (a, b))

    def move(self, node: int, x: float, y: float) -> None:
        self.positions[node] = (x, y)

    def node_count(self) -> int:
        return len(self.positions)


def _components(n: int, links: set[tuple[int, int]]) -> list[frozenset[int]]:
    adjacency: dict[int, set[int]] = {i: set() for i in range(n)}
    for a, b in links:
        adjacency[a].add(b)
        adjacency[b].add(a)
    seen: set[int] = set()
    out = []
    for start in range(n):
        if start in seen:
            continue
        stack, comp = [start], {start}
        seen.add(start)
        while stack:
            u = stack.pop()
            for v in adjacency[u]:
                if v not in comp:
                    comp.add(v)
                    seen.add(v)
                    stack.append(v)
        out.append(frozenset(comp))
    return out


def create_topology(n: int, seed: int, range_m: float, k_neighbors: int,
                    capacity: Optional[int] = None,
                    side: float = 100.0) -> Topology:
    """Seeded uniform positions in a `side` x `side` square, then
    `link_topology` wiring."""
    if n < 2:
        raise ValidationError(f"topology needs at least 2 nodes, got {n}")
    rng = random.Random(seed)
    positions = {i: (rng.uniform(0, side), rng.uniform(0, side)) for i in range(n)}
    return link_topology(positions, range_m, k_neighbors, capacity)


def link_topology(positions: dict[int, tuple[float, float]], range_m: float,
                  k_neighbors: int, capacity: Optional[int] = None) -> Topology:
    """k-nearest links subject to range and capacity; then components are
    bridged by the shortest in-range inter-component link until connected
    or no such link remains (remaining components are reported)."""
    n = len(positions)
    if k_neighbors < 1:
        raise ValidationError(f"k_neighbors must be >= 1, got {k_neighbors}")
    topo = Topology(positions=dict(positions), links=set(), range_m=range_m,
                    capacity=capacity)

    def has_capacity(node: int) -> bool:
        return capacity is None or topo.degree(node) < capacity

    for node in range(n):
        ranked = sorted((topo.distance(node, other), other)
                        for other in range(n) if other != node)
        added = 0
        for dist, other in ranked:
            if added >= k_neighbors:
                break
            key = (min(node, other), max(node, other))
            if key in topo.links:
                added += 1
                continue
            if dist <= range_m and has_capacity(node) and has_capacity(other):
                topo.links.add(key)
                added += 1

    while True:
        comps = _components(n, topo.links)
        if len(comps) == 1:
            break
        comp_of = {}
        for idx, comp in enumerate(comps):
            for node in comp:
                comp_of[node] = idx
        best = None
        for a in range(n):
            for b in range(a + 1, n):
                if comp_of[a] == comp_of[b]:
                    continue
                dist = topo.distance(a, b)
                if dist > range_m or not (has_capacity(a) and has_capacity(b)):
                    continue
                key = (dist, a, b)
                if best is None or key < best:
                    best = key
        if best is None:
            break
        topo.links.add((best[1], best[2]))
    topo.components = _components(n, topo.links)
    return topo


@dataclass
class RoutingEntry:
    dest: int
    next_hop: int
    seq: int
    hop_count: int
    expires_at: float

    def __post_init__(self):
        if self.hop_count < 1:
            raise ValidationError("hop_count must be >= 1")

    def fresh(self, now: float) -> bool:
        return now < self.expires_at


@dataclass
class DiscoveryResult:
    entry: RoutingEntry
    path: tuple[int, ...]
    control_messages: int
    from_cache: bool


class OnDemandRouter:
    """Reactive route discovery with fresh-entry caching per source node."""

    def __init__(self, topo: Topology, expiry: float = DEFAULT_ROUTE_EXPIRY_S):
        self.topo = topo
        self.expiry = expiry
        self.tables: dict[int, dict[int, RoutingEntry]] = {}
        self.cached_paths: dict[tuple[int, int], tuple[int, ...]] = {}
        self._seq: dict[int, int] = {}
        self.control_messages_total = 0

    def discover(self, src: int, dst: int, now: float) -> DiscoveryResult:
        if src == dst:
            raise ValidationError("discovery needs distinct endpoints")
        cached = self.tables.get(src, {}).get(dst)
        if cached is not None and cached.fresh(now):
            return DiscoveryResult(entry=cached, path=self.cached_paths[(src, dst)],
                                   control_messages=0, from_cache=True)
        control = 0
        path = None
        for _ in range(DISCOVERY_ATTEMPTS):
            flood_cost, path = self._flood(src, dst)
            control += flood_cost
            if path is not None:
                break
        self.control_messages_total += control
        if path is None:
            raise NoRoute(f"discovery {src}->{dst} failed after "
                          f"{DISCOVERY_ATTEMPTS} attempts ({control} control messages)")
        control += len(path) - 1  # reply unicasts along the reverse path
        self.control_messages_total += len(path) - 1
        seq = self._seq.get(dst, 0) + 1
        self._seq[dst] = seq
        expires = now + self.expiry
        for i, node in enumerate(path[:-1]):
            remaining = len(path) - 1 - i
            self.tables.setdefault(node, {})[dst] = RoutingEntry(
                dest=dst, next_hop=path[i + 1], seq=seq,
                hop_count=remaining, expires_at=expires)
            self.cached_paths[(node, dst)] = path[i:]
        for i, node in enumerate(path[1:], start=1):
            self.tables.setdefault(node, {})[src] = RoutingEntry(
                dest=src, next_hop=path[i - 1], seq=seq,
                hop_count=i, expires_at=expires)
        entry = self.tables[src][dst]
        return DiscoveryResult(entry=entry, path=path, control_messages=control,
                               from_cache=False)

    def _flood(self, src: int, dst: int) -> tuple[int, Optional[tuple[int, ...]]]:
        """Breadth-first request flood. Every reached node other than the
        destination broadcasts once; the broadcast count is the control cost
        of the request phase."""
        parent: dict[int, int] = {src: src}
        frontier = [src]
        broadcasts = 0
        while frontier:
            next_frontier = []
            for node in sorted(frontier):
                if node == dst:
                    continue
                broadcasts += 1
                for nbr in self.topo.neighbors(node):
                    if nbr not in parent:
                        parent[nbr] = node
                        next_frontier.append(nbr)
            frontier = next_frontier
        if dst not in parent:
            return broadcasts, None
        path = [dst]
        while path[-1] != src:
            path.append(parent[path[-1]])
        return broadcasts, tuple(reversed(path))


@dataclass
class PathSet:
    """Priority-ordered interior-node-disjoint paths src -> dst."""

    paths: list[tuple[int, ...]]
    disjoint: bool = True
    broken: set[int] = field(default_factory=set)

    def __post_init__(self):
        if not self.paths:
            raise ValidationError("path set needs at least one path")
        src, dst = self.paths[0][0], self.paths[0][-1]
        seen_interior: set[int] = set()
        for p in self.paths:
            if p[0] != src or p[-1] != dst:
                raise ValidationError("all paths must share their endpoints")
            interior = set(p[1:-1])
            if self.disjoint and interior & seen_interior:
                raise ValidationError("interior nodes shared between paths")
            seen_interior |= interior

    @property
    def source(self) -> int:
        return self.paths[0][0]

    @property
    def destination(self) -> int:
        return self.paths[0][-1]

    def live_indices(self) -> list[int]:
        return [i for i in range(len(self.paths)) if i not in self.broken]

    def active_index(self) -> Optional[int]:
        live = self.live_indices()
        return live[0] if live else None


def check_disjoint(paths: Iterable[tuple[int, ...]]) -> bool:
    """Independent disjointness checker used by tests and callers."""
    seen: set[int] = set()
    for p in paths:
        interior = set(p[1:-1])
        if interior & seen:
            return False
        seen |= interior
    return True


def _shortest_path(topo: Topology, src: int, dst: int,
                   banned: set[int]) -> Optional[tuple[int, ...]]:
    """Lexicographically smallest shortest path avoiding `banned` interiors."""
    dist = {dst: 0}
    frontier = [dst]
    while frontier:
        nxt = []
        for node in sorted(frontier):
            for nbr in topo.neighbors(node):
                if nbr in banned and nbr != src:
                    continue
                if nbr not in dist:
                    dist[nbr] = dist[node] + 1
                    nxt.append(nbr)
        frontier = nxt
    if src not in dist:
        return None
    path = [src]
    while path[-1] != dst:
        cur = path[-1]
        candidates = [nbr for nbr in topo.neighbors(cur)
                      if nbr in dist and dist[nbr] == dist[cur] - 1
                      and (nbr not in banned or nbr == dst)]
        path.append(min(candidates))
    return tuple(path)


def select_disjoint_paths(topo: Topology, src: int, dst: int, k: int) -> PathSet:
    """Up to k interior-disjoint paths by iterative shortest-path removal."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    banned: set[int] = set()
    paths: list[tuple[int, ...]] = []
    for _ in range(k):
        path = _shortest_path(topo, src, dst, banned)
        if path is None:
            break
        paths.append(path)
        banned |= set(path[1:-1])
    if not paths:
        raise NoRoute(f"no path {src}->{dst}")
    return PathSet(paths=paths, disjoint=True)


@dataclass
class MaintenanceReport:
    path_set: PathSet
    newly_broken: list[int]
    active_index: int
    replacement: Optional[tuple[int, ...]]


def maintain_routes(topo: Topology, path_set: PathSet,
                    positions_now: Optional[dict[int, tuple[float, float]]] = None,
                    router: Optional[OnDemandRouter] = None,
                    now: float = 0.0) -> MaintenanceReport:
    """Re-check every path link against current positions; fail over off
    broken paths and try one re-discovery for a replacement."""
    if positions_now is not None:
        for node, pos in positions_now.items():
            topo.positions[node] = pos
    previously_active = path_set.active_index()
    newly_broken = []
    for idx, path in enumerate(path_set.paths):
        if idx in path_set.broken:
            continue
        if any(not topo.link_alive(a, b) for a, b in zip(path, path[1:])):
            path_set.broken.add(idx)
            newly_broken.append(idx)
    replacement = None
    if previously_active in newly_broken and router is not None:
        try:
            found = router.discover(path_set.source, path_set.destination, now)
            candidate = found.path
            interiors = {n for i in path_set.live_indices()
                         for n in path_set.paths[i][1:-1]}
            if not (set(candidate[1:-1]) & interiors) and candidate not in path_set.paths:
                path_set.paths.append(candidate)
                replacement = candidate
        except NoRoute:
            pass
    active = path_set.active_index()
    if active is None:
        raise AllPathsBroken(
            f"every path {path_set.source}->{path_set.destination} is broken")
    return MaintenanceReport(path_set=path_set, newly_broken=newly_broken,
                             active_index=active, replacement=replacement)


@dataclass
class DeliveryReport:
    delivered: dict[int, int]
    lost: dict[int, int]
    link_transmissions: dict[tuple[int, int], int]

    @property
    def transmissions(self) -> int:
        return sum(self.link_transmissions.values())


def multicast_transmit(topo: Topology, path_sets: dict[int, PathSet], bundle,
                       mode: str = "failover",
                       packets: Optional[int] = None,
                       packet_size: int = DEFAULT_PACKET_SIZE,
                       breaks: Optional[list[tuple[int, int, int]]] = None) -> DeliveryReport:
    """Send `packets` numbered 1..P toward every destination.

    failover: each destination uses its highest-priority live path and
    switches when it breaks; the packet in flight at the break is lost.
    stripe: packets round-robin over the destination's live paths.
    Links shared between destinations in the same packet round carry the
    packet once.

    `breaks` scripts failures as (dest, path_index, after_packet): the path
    drops after `after_packet` packets have used it, so packet
    `after_packet + 1` is the one in flight.
    """
    if mode not in ("failover", "stripe"):
        raise ValidationError(f"unknown multicast mode {mode!r}")
    if packets is None:
        packets = -(-bundle.size // packet_size)
    break_at = {(d, i): after for d, i, after in (breaks or [])}
    delivered = {d: 0 for d in path_sets}
    lost = {d: 0 for d in path_sets}
    link_counts: dict[tuple[int, int], int] = {}
    sent_on: dict[tuple[int, int], int] = {}  # (dest, path_idx) -> packets carried
    rr: dict[int, int] = {d: 0 for d in path_sets}

    for packet in range(1, packets + 1):
        links_this_packet: set[tuple[int, int]] = set()
        for dest in sorted(path_sets):
            ps = path_sets[dest]
            live = ps.live_indices()
            if not live:
                lost[dest] += 1
                continue
            if mode == "failover":
                idx = live[0]
            else:
                idx = live[rr[dest] % len(live)]
                rr[dest] += 1
            path = ps.paths[idx]
            for a, b in zip(path, path[1:]):
                links_this_packet.add((a, b))
            carried = sent_on.get((dest, idx), 0)
            threshold = break_at.get((dest, idx))
            if threshold is not None and carried >= threshold:
                # this packet is in flight when the path drops
                ps.broken.add(idx)
                lost[dest] += 1
            else:
                sent_on[(dest, idx)] = carried + 1
                delivered[dest] += 1
        for link in links_this_packet:
            link_counts[link] = link_counts.get(link, 0) + 1
    return DeliveryReport(delivered=delivered, lost=lost,
                          link_transmissions=link_counts)
