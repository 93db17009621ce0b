"""Earliest-delivery (estimated shortest path) routing over a contact plan.

A route is a time-respecting sequence of full-custody hops: each hop's
transmission fits entirely inside its contact, and a node may hold a bundle
for any length of time between hops. ``esp_route`` minimizes delivery time
with a deterministic tie-break: fewer hops, then lexicographically smallest
node-id sequence, then smallest contact-index sequence (the last level makes
routes unique when parallel contacts tie). ``brute_force_route`` is the
independent exhaustive oracle under the same ordering.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .contacts import Bundle, Contact, ContactPlan, to_ms, to_seconds, transmission_ms
from .errors import NoRoute, TooLarge, ValidationError

BRUTE_FORCE_MAX_CONTACTS = 20


@dataclass(frozen=True)
class Hop:
    """One custody transfer: `size` bytes pushed over `contact`."""

    contact: Contact
    contact_index: int
    send_start_ms: int
    send_end_ms: int

    @property
    def send_start_s(self) -> float:
        return to_seconds(self.send_start_ms)

    @property
    def send_end_s(self) -> float:
        return to_seconds(self.send_end_ms)


@dataclass(frozen=True)
class Route:
    hops: tuple[Hop, ...]
    delivery_ms: int

    @property
    def delivery_time(self) -> float:
        return to_seconds(self.delivery_ms)

    @property
    def hop_count(self) -> int:
        return len(self.hops)

    def node_sequence(self, source: int) -> tuple[int, ...]:
        return (source,) + tuple(h.contact.to for h in self.hops)

    def next_hop(self) -> Optional[int]:
        return self.hops[0].contact.to if self.hops else None


def _check_args(plan: ContactPlan, bundle: Bundle, dest: int, t0_ms: int):
    if dest not in bundle.destinations:
        if dest != bundle.source:
            raise ValidationError(f"dest {dest} not in bundle destinations")
    if t0_ms < bundle.created_at_ms:
        raise ValidationError("t0 precedes bundle creation")
    if plan.is_cyclic:
        raise ValidationError("plan is cyclic; unroll it before routing")


def _deadline_ms(plan: ContactPlan, bundle: Bundle) -> int:
    return min(bundle.expiry_ms, plan.horizon_ms)


def _build_route(plan: ContactPlan, bundle: Bundle, t0_ms: int,
                 contact_indices: tuple[int, ...]) -> Route:
    hops = []
    at = t0_ms
    for idx in contact_indices:
        c = plan.contacts[idx]
        send_start = max(at, c.start_ms)
        send_end = send_start + transmission_ms(bundle.size, c.rate)
        hops.append(Hop(contact=c, contact_index=idx,
                        send_start_ms=send_start, send_end_ms=send_end))
        at = send_end
    return Route(hops=tuple(hops), delivery_ms=at)


def esp_route(plan: ContactPlan, bundle: Bundle, dest: int, t0: float) -> Route:
    """Minimum-delivery-time route from bundle.source to ``dest`` released at t0.

    Multi-label search: per node we keep the Pareto frontier over
    (arrival, hops, sequence tie-break). Labels pop in full tie-break order
    and arrivals grow strictly along a route, so the first label reaching
    ``dest`` is the optimum.
    """
    t0_ms = to_ms(t0)
    _check_args(plan, bundle, dest, t0_ms)
    src = bundle.source
    if src == dest:
        return Route(hops=(), delivery_ms=t0_ms)
    deadline = _deadline_ms(plan, bundle)

    by_from: dict[int, list[int]] = {}
    for idx, c in enumerate(plan.contacts):
        by_from.setdefault(c.frm, []).append(idx)
    dur = [transmission_ms(bundle.size, c.rate) for c in plan.contacts]

    # label: (arrival, hops, node_seq, contact_seq)
    frontier: dict[int, list[tuple[int, int, tuple, tuple]]] = {}
    heap: list[tuple[int, int, tuple, tuple, int]] = []
    start_label = (t0_ms, 0, (src,), ())
    frontier[src] = [start_label]
    heapq.heappush(heap, start_label + (src,))

    while heap:
        arrival, hops, node_seq, contact_seq, node = heapq.heappop(heap)
        if node == dest:
            return _build_route(plan, bundle, t0_ms, contact_seq)
        if _dominated(frontier.get(node, ()), (arrival, hops, node_seq, contact_seq), strict=True):
            continue
        for idx in by_from.get(node, ()):
            c = plan.contacts[idx]
            to = c.to
            if to in node_seq:
                continue
            send_start = arrival if arrival > c.start_ms else c.start_ms
            send_end = send_start + dur[idx]
            if send_end > c.end_ms or send_end > deadline:
                continue
            label = (send_end, hops + 1, node_seq + (to,), contact_seq + (idx,))
            kept = frontier.setdefault(to, [])
            if _dominated(kept, label, strict=False):
                continue
            kept[:] = [k for k in kept if not _dominates(label, k)]
            kept.append(label)
            heapq.heappush(heap, label + (to,))
    raise NoRoute(f"no time-respecting route {src}->{dest} from t={to_seconds(t0_ms)}s")


def _dominates(a, b) -> bool:
    """True if label a makes b redundant.

    All components must be at least as good: a later arrival may still win
    the final lexicographic tie-break when deliveries tie, so arrival alone
    never justifies pruning.
    """
    return a[0] <= b[0] and a[1] <= b[1] and a[2:] <= b[2:]


def _dominated(kept, label, strict: bool) -> bool:
    for k in kept:
        if k is label or k == label:
            if strict:
                continue
            return True
        if _dominates(k, label):
            return True
    return False


def brute_force_route(plan: ContactPlan, bundle: Bundle, dest: int, t0: float) -> Route:
    """Exhaustive oracle: enumerate every acyclic contact sequence."""
    if len(plan.contacts) > BRUTE_FORCE_MAX_CONTACTS:
        raise TooLarge(
            f"{len(plan.contacts)} contacts exceeds brute-force bound {BRUTE_FORCE_MAX_CONTACTS}"
        )
    t0_ms = to_ms(t0)
    _check_args(plan, bundle, dest, t0_ms)
    src = bundle.source
    if src == dest:
        return Route(hops=(), delivery_ms=t0_ms)
    deadline = _deadline_ms(plan, bundle)
    dur = [transmission_ms(bundle.size, c.rate) for c in plan.contacts]

    best: Optional[tuple] = None

    def visit(node: int, arrival: int, node_seq: tuple, contact_seq: tuple):
        nonlocal best
        for idx, c in enumerate(plan.contacts):
            if c.frm != node or c.to in node_seq:
                continue
            send_start = max(arrival, c.start_ms)
            send_end = send_start + dur[idx]
            if send_end > c.end_ms or send_end > deadline:
                continue
            seq = node_seq + (c.to,)
            cseq = contact_seq + (idx,)
            if c.to == dest:
                cand = (send_end, len(cseq), seq, cseq)
                if best is None or cand < best:
                    best = cand
            else:
                visit(c.to, send_end, seq, cseq)

    visit(src, t0_ms, (src,), ())
    if best is None:
        raise NoRoute(f"no time-respecting route {src}->{dest} from t={to_seconds(t0_ms)}s")
    return _build_route(plan, bundle, t0_ms, best[3])


def esp_delivery_time(plan: ContactPlan, bundle: Bundle, dest: int, t0: float) -> float:
    """Delivery time of the optimal route, in seconds.

    Computed by the array relaxation kernel; agrees exactly with
    ``esp_route(...).delivery_time`` (both work in integer milliseconds).
    """
    t0_ms = to_ms(t0)
    _check_args(plan, bundle, dest, t0_ms)
    if bundle.source == dest:
        return to_seconds(t0_ms)
    arr = _kernels.earliest_arrival_ms(plan, bundle.size, bundle.source, t0_ms,
                                       _deadline_ms(plan, bundle))
    if arr[dest] >= _kernels.INF_MS:
        raise NoRoute(f"no time-respecting route {bundle.source}->{dest}")
    return to_seconds(int(arr[dest]))


def greedy_next_hop(plan: ContactPlan, size: int, node: int, target: int,
                    t_ms: int, deadline_ms: int) -> Optional[tuple[int, int]]:
    """(next node, contact index) of a minimum-delivery route node->target.

    Per-hop decision used by the simulator: each feasible outgoing contact
    is scored by the exact earliest delivery it leads to (arrival kernel),
    ties prefer delivering directly, then the smallest contact index.
    Returns None when the target is unreachable before the deadline.
    """
    if node == target:
        raise ValidationError("greedy_next_hop needs distinct endpoints")
    arrays = _kernels.plan_arrays(plan, size)
    frm, to, start, end, dur = arrays
    best = None
    for idx, c in enumerate(plan.contacts):
        if c.frm != node:
            continue
        s = max(t_ms, c.start_ms)
        e = s + int(dur[idx])
        if e > c.end_ms or e > deadline_ms:
            continue
        if c.to == target:
            delivery = e
        else:
            arr = _kernels._arrival_impl(frm, to, start, end, dur,
                                         plan.node_count, c.to,
                                         np.int64(e), np.int64(deadline_ms))
            delivery = int(arr[target])
            if delivery >= _kernels.INF_MS:
                continue
        key = (delivery, 0 if c.to == target else 1, idx)
        if best is None or key < best[0]:
            best = (key, c.to, idx)
    if best is None:
        return None
    return best[1], best[2]


def validate_route(plan: ContactPlan, bundle: Bundle, dest: int, t0: float, route: Route) -> None:
    """Raise ValidationError unless `route` satisfies every hop/route invariant."""
    t0_ms = to_ms(t0)
    if not route.hops:
        if bundle.source != dest:
            raise ValidationError("empty route but source != dest")
        if route.delivery_ms != t0_ms:
            raise ValidationError("empty route must deliver at t0")
        return
    if route.hops[0].contact.frm != bundle.source:
        raise ValidationError("route does not start at the bundle source")
    if route.hops[-1].contact.to != dest:
        raise ValidationError("route does not end at dest")
    prev_end = t0_ms
    for h in route.hops:
        c = h.contact
        if plan.contacts[h.contact_index] != c:
            raise ValidationError("hop contact_index does not match the plan")
        if h.send_start_ms < c.start_ms or h.send_end_ms > c.end_ms:
            raise ValidationError("hop transmission leaves its contact window")
        if h.send_end_ms - h.send_start_ms != transmission_ms(bundle.size, c.rate):
            raise ValidationError("hop duration != size/rate")
        if h.send_start_ms < prev_end:
            raise ValidationError("hop starts before previous custody completes")
        prev_end = h.send_end_ms
    for a, b in zip(route.hops, route.hops[1:]):
        if a.contact.to != b.contact.frm:
            raise ValidationError("hop chain is not contiguous")
    if route.delivery_ms != route.hops[-1].send_end_ms:
        raise ValidationError("delivery_time != last send_end")
    nodes = route.node_sequence(bundle.source)
    if len(set(nodes)) != len(nodes):
        raise ValidationError("route revisits a node")
