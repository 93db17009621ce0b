"""Contact-table compression and routing over compressed tables.

Three independent reductions of a contact plan:

* time aggregation  - same-pair contacts whose starts fall in one window
  bucket collapse into a single volume-conserving entry;
* space aggregation - contacts are re-labeled by cluster id at a hierarchy
  level, intra-cluster contacts are dropped, overlapping same-pair cluster
  contacts merge;
* probabilistic summarization - one hint per pair carrying the maximum
  probability, filtered by a threshold in [0.6, 0.8] and an optional entry
  budget.

Routing over a compressed table treats every entry as continuously
available over its window at the volume-conserving effective rate; per-hop
delay is divided by the entry probability (expected retries). Availability
is optimistic: a transmission may overrun the window, only the volume bound
is enforced, so aggregation never severs a pair the plan could serve.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Optional

from .contacts import Bundle, Contact, ContactPlan, fmt_seconds, to_ms, to_seconds
from .errors import InvalidLevel, NoRoute, ParseError, ThresholdOutOfRange, ValidationError

THRESHOLD_RANGE = (0.6, 0.8)


@dataclass(frozen=True)
class AggregatedContact:
    """Several contacts of one (from, to) pair folded into a window."""

    frm: int
    to: int
    window_start_ms: int
    window_end_ms: int
    total_volume: float  # bytes
    contact_count: int
    availability: float
    probability: float

    def __post_init__(self):
        if self.window_start_ms >= self.window_end_ms:
            raise ValidationError("aggregate window must be non-empty")
        if self.contact_count < 1:
            raise ValidationError("aggregate needs at least one contact")
        if not 0 < self.availability <= 1:
            raise ValidationError(f"availability must be in (0, 1], got {self.availability}")
        if not 0 < self.probability <= 1:
            raise ValidationError(f"probability must be in (0, 1], got {self.probability}")

    @property
    def window_length_ms(self) -> int:
        return self.window_end_ms - self.window_start_ms

    @property
    def effective_rate(self) -> float:
        """Volume-conserving bytes/second over the whole window."""
        return self.total_volume / to_seconds(self.window_length_ms)

    def sort_key(self):
        return (self.window_start_ms, self.frm, self.to, self.window_end_ms)


@dataclass(frozen=True)
class CompressedContactTable:
    entries: tuple[AggregatedContact, ...]
    level: int = 0
    window: Optional[float] = None  # time-aggregation parameter, seconds
    threshold: Optional[float] = None
    budget: Optional[int] = None

    def __post_init__(self):
        if self.level < 0:
            raise ValidationError("level must be >= 0")
        if self.threshold is not None:
            _check_threshold(self.threshold)
        if self.budget is not None and len(self.entries) > self.budget:
            raise ValidationError("entry count exceeds budget")

    @property
    def total_volume(self) -> float:
        return sum(e.total_volume for e in self.entries)


@dataclass(frozen=True)
class CompressionStats:
    original_entries: int
    compressed_entries: int

    @property
    def ratio(self) -> float:
        return self.original_entries / max(1, self.compressed_entries)


def _check_threshold(threshold: float):
    lo, hi = THRESHOLD_RANGE
    if not lo <= threshold <= hi:
        raise ThresholdOutOfRange(f"threshold {threshold} outside [{lo}, {hi}]")


def _union_length_ms(intervals: list[tuple[int, int]]) -> int:
    """Total length of the union of half-open intervals."""
    total = 0
    cur_start = cur_end = None
    for start, end in sorted(intervals):
        if cur_end is None or start > cur_end:
            if cur_end is not None:
                total += cur_end - cur_start
            cur_start, cur_end = start, end
        else:
            cur_end = max(cur_end, end)
    if cur_end is not None:
        total += cur_end - cur_start
    return total


def _aggregate(group: list[Contact], frm: int, to: int) -> AggregatedContact:
    window_start = min(c.start_ms for c in group)
    window_end = max(c.end_ms for c in group)
    union = _union_length_ms([(c.start_ms, c.end_ms) for c in group])
    return AggregatedContact(
        frm=frm, to=to,
        window_start_ms=window_start, window_end_ms=window_end,
        total_volume=sum(c.volume for c in group),
        contact_count=len(group),
        availability=min(1.0, union / (window_end - window_start)),
        probability=max(c.probability for c in group),
    )


def compress_time(plan: ContactPlan, window: float) -> CompressedContactTable:
    """Merge same-pair contacts whose start times share a window bucket."""
    if window <= 0:
        raise ValidationError(f"window must be positive, got {window}")
    window_ms = to_ms(window)
    groups: dict[tuple[int, int, int], list[Contact]] = {}
    for c in plan.contacts:
        groups.setdefault((c.frm, c.to, c.start_ms // window_ms), []).append(c)
    entries = [_aggregate(group, frm, to) for (frm, to, _), group in groups.items()]
    entries.sort(key=AggregatedContact.sort_key)
    return CompressedContactTable(entries=tuple(entries), level=0, window=window)


def compress_space(plan: ContactPlan, tree, level: int) -> CompressedContactTable:
    """Re-label contacts by level-`level` cluster id; merge overlapping
    same-cluster-pair contacts; drop intra-cluster contacts."""
    if not 1 <= level <= tree.levels:
        raise InvalidLevel(f"level {level} outside [1, {tree.levels}]")
    pairs: dict[tuple[int, int], list[Contact]] = {}
    for c in plan.contacts:
        cfrm = tree.cluster_of(c.frm, level)
        cto = tree.cluster_of(c.to, level)
        if cfrm == cto:
            continue
        pairs.setdefault((cfrm, cto), []).append(c)
    entries = []
    for (cfrm, cto), group in pairs.items():
        group.sort(key=lambda c: (c.start_ms, c.end_ms))
        chain: list[Contact] = []
        chain_end = 0
        for c in group:
            if chain and c.start_ms >= chain_end:
                entries.append(_aggregate(chain, cfrm, cto))
                chain = []
            chain_end = c.end_ms if not chain else max(chain_end, c.end_ms)
            chain.append(c)
        if chain:
            entries.append(_aggregate(chain, cfrm, cto))
    entries.sort(key=AggregatedContact.sort_key)
    return CompressedContactTable(entries=tuple(entries), level=level)


def compress_probabilistic(plan: ContactPlan, threshold: float,
                           budget: Optional[int] = None) -> CompressedContactTable:
    """One weak-state hint per pair: max probability, mean duration encoded
    via availability; hints below the threshold are dropped, the budget keeps
    the highest-probability hints."""
    _check_threshold(threshold)
    pairs: dict[tuple[int, int], list[Contact]] = {}
    for c in plan.contacts:
        pairs.setdefault((c.frm, c.to), []).append(c)
    entries = []
    for (frm, to), group in pairs.items():
        window_start = min(c.start_ms for c in group)
        window_end = max(c.end_ms for c in group)
        mean_duration = sum(c.duration_ms for c in group) / len(group)
        prob = max(c.probability for c in group)
        if prob < threshold:
            continue
        entries.append(AggregatedContact(
            frm=frm, to=to,
            window_start_ms=window_start, window_end_ms=window_end,
            total_volume=sum(c.volume for c in group),
            contact_count=len(group),
            availability=min(1.0, mean_duration / (window_end - window_start)),
            probability=prob,
        ))
    if budget is not None:
        entries.sort(key=lambda e: (-e.probability, e.frm, e.to))
        entries = entries[:budget]
    entries.sort(key=AggregatedContact.sort_key)
    return CompressedContactTable(entries=tuple(entries), level=0,
                                  threshold=threshold, budget=budget)


@dataclass(frozen=True)
class EstimatedHop:
    entry: AggregatedContact
    send_start_s: float
    arrival_s: float


@dataclass(frozen=True)
class RouteEstimate:
    """A route whose hops are aggregated entries, not concrete contacts."""

    hops: tuple[EstimatedHop, ...]
    delivery_s: float

    @property
    def hop_count(self) -> int:
        return len(self.hops)

    def id_sequence(self, source: int) -> tuple[int, ...]:
        return (source,) + tuple(h.entry.to for h in self.hops)

    def next_hop(self) -> Optional[int]:
        return self.hops[0].entry.to if self.hops else None


def esp_on_compressed(table: CompressedContactTable, bundle: Bundle, dest: int,
                      t0: float, source: Optional[int] = None) -> RouteEstimate:
    """Earliest-delivery estimate over aggregated entries.

    ``source`` overrides ``bundle.source`` when routing between cluster ids.
    Each hop starts no earlier than its window and takes
    size / effective_rate / probability seconds; only the volume capacity
    bound can make an entry infeasible.
    """
    src = bundle.source if source is None else source
    if src == dest:
        return RouteEstimate(hops=(), delivery_s=float(t0))
    if not table.entries:
        raise NoRoute("empty compressed table")
    by_from: dict[int, list[AggregatedContact]] = {}
    for e in table.entries:
        by_from.setdefault(e.frm, []).append(e)

    # label: (arrival, hops, id_seq, push_counter, hop_tuple); the counter
    # keeps heap comparisons off the unorderable hop tuple.
    pushes = 0
    heap = [(float(t0), 0, (src,), pushes, ())]
    frontier: dict[int, list[tuple]] = {src: [(float(t0), 0, (src,))]}
    while heap:
        arrival, hops, seq, _, taken = heapq.heappop(heap)
        node = seq[-1]
        if node == dest:
            return RouteEstimate(hops=taken, delivery_s=arrival)
        for e in by_from.get(node, ()):
            if e.to in seq or e.total_volume < bundle.size:
                continue
            send_start = max(arrival, to_seconds(e.window_start_ms))
            delay = bundle.size / e.effective_rate / e.probability
            new = (send_start + delay, hops + 1, seq + (e.to,))
            kept = frontier.setdefault(e.to, [])
            if any(k[0] <= new[0] and k[1] <= new[1] and k[2] <= new[2] for k in kept):
                continue
            kept[:] = [k for k in kept
                       if not (new[0] <= k[0] and new[1] <= k[1] and new[2] <= k[2])]
            kept.append(new)
            pushes += 1
            heapq.heappush(heap, new + (pushes, taken + (EstimatedHop(e, send_start, new[0]),)))
    raise NoRoute(f"no route estimate {src}->{dest} over the compressed table")


def compression_stats(before: ContactPlan, after: CompressedContactTable) -> CompressionStats:
    return CompressionStats(original_entries=len(before.contacts),
                            compressed_entries=len(after.entries))


def default_pipeline(plan: ContactPlan, tree, level: int, window: float,
                     threshold: float) -> CompressedContactTable:
    """time -> space composition used by hierarchical routing; the
    probabilistic filter applies at node level (level == 0) only."""
    if level == 0:
        return compress_time(plan, window)
    return compress_space(plan, tree, level)


def render_compressed_table(table: CompressedContactTable) -> str:
    """`agg` line format, one entry per line."""
    lines = []
    for e in table.entries:
        parts = [
            f"agg {e.frm} {e.to} {fmt_seconds(e.window_start_ms)} {fmt_seconds(e.window_end_ms)}",
            repr(float(e.total_volume)),
            str(e.contact_count),
            repr(e.availability),
            repr(e.probability),
        ]
        if table.level > 0:
            parts.append(f"level={table.level}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_compressed_table(text: str) -> CompressedContactTable:
    entries = []
    level = 0
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if fields[0] != "agg" or len(fields) < 9:
            raise ParseError(line_no, f"bad agg record {line!r}")
        try:
            frm, to = int(fields[1]), int(fields[2])
            wstart, wend = to_ms(float(fields[3])), to_ms(float(fields[4]))
            volume = float(fields[5])
            count = int(fields[6])
            avail = float(fields[7])
            prob = float(fields[8])
        except ValueError:
            raise ParseError(line_no, f"bad agg fields in {line!r}") from None
        for extra in fields[9:]:
            key, sep, value = extra.partition("=")
            if key == "level" and sep:
                level = int(value)
            else:
                raise ParseError(line_no, f"unknown option {extra!r}")
        entries.append(AggregatedContact(frm=frm, to=to, window_start_ms=wstart,
                                         window_end_ms=wend, total_volume=volume,
                                         contact_count=count, availability=avail,
                                         probability=prob))
    entries.sort(key=AggregatedContact.sort_key)
    return CompressedContactTable(entries=tuple(entries), level=level)
