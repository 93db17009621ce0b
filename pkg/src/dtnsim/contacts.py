"""Nodes, contacts, contact plans and bundles.

Time is kept as integer milliseconds internally so that event ordering and
round-trips are exact; plan files speak decimal seconds. Contact intervals
are half-open [start, end). Contacts are unidirectional: a bidirectional
link is two contacts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence

from .errors import NotCyclic, ParseError, ValidationError

MS_PER_S = 1000


def to_ms(seconds: float) -> int:
    """Convert decimal seconds to integer milliseconds."""
    return round(float(seconds) * MS_PER_S)


def to_seconds(ms: int) -> float:
    return ms / MS_PER_S


def fmt_seconds(ms: int) -> str:
    """Exact decimal rendering of a millisecond timestamp, e.g. 10, 10.5, 0.001."""
    sign = "-" if ms < 0 else ""
    ms = abs(ms)
    whole, frac = divmod(ms, MS_PER_S)
    if frac == 0:
        return f"{sign}{whole}"
    return f"{sign}{whole}." + f"{frac:03d}".rstrip("0")


def transmission_ms(size: int, rate: float) -> int:
    """Milliseconds needed to push `size` bytes at `rate` bytes/second.

    Rounded up to the next millisecond; exact integer arithmetic whenever
    the rate is integral.
    """
    if size <= 0:
        raise ValidationError(f"bundle size must be positive, got {size}")
    if rate <= 0:
        raise ValidationError(f"rate must be positive, got {rate}")
    if float(rate).is_integer():
        return -(-size * MS_PER_S // int(rate))
    return math.ceil(size * MS_PER_S / rate - 1e-9)


class ContactKind(str, Enum):
    PERSISTENT = "persistent"
    SCHEDULED = "scheduled"
    PREDICTED = "predicted"
    OPPORTUNISTIC = "opportunistic"


@dataclass(frozen=True)
class Contact:
    """A unidirectional communication opportunity over [start, end)."""

    frm: int
    to: int
    start_ms: int
    end_ms: int
    rate: float  # bytes/second
    probability: float = 1.0
    kind: ContactKind = ContactKind.SCHEDULED

    def __post_init__(self):
        if self.frm < 0 or self.to < 0:
            raise ValidationError(f"node ids must be non-negative: {self.frm}->{self.to}")
        if self.frm == self.to:
            raise ValidationError(f"contact endpoints must differ, got {self.frm}->{self.to}")
        if self.start_ms >= self.end_ms:
            raise ValidationError(
                f"contact start must precede end, got [{self.start_ms}, {self.end_ms}) ms"
            )
        if self.rate <= 0:
            raise ValidationError(f"rate must be positive, got {self.rate}")
        if not 0 < self.probability <= 1:
            raise ValidationError(f"probability must be in (0, 1], got {self.probability}")
        if self.kind in (ContactKind.SCHEDULED, ContactKind.PERSISTENT) and self.probability != 1.0:
            raise ValidationError(f"{self.kind.value} contacts must have probability 1")

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms

    @property
    def start_s(self) -> float:
        return to_seconds(self.start_ms)

    @property
    def end_s(self) -> float:
        return to_seconds(self.end_ms)

    @property
    def volume(self) -> float:
        """Total bytes transferable over the whole contact."""
        return self.rate * self.duration_ms / MS_PER_S

    def active_at(self, t_ms: int) -> bool:
        return self.start_ms <= t_ms < self.end_ms

    def sort_key(self):
        return (self.start_ms, self.frm, self.to, self.end_ms, self.rate,
                self.probability, self.kind.value)

    def shifted(self, delta_ms: int) -> "Contact":
        return replace(self, start_ms=self.start_ms + delta_ms, end_ms=self.end_ms + delta_ms)


@dataclass(frozen=True)
class ContactPlan:
    """All contacts of a scenario in canonical (start, from, to) order."""

    contacts: tuple[Contact, ...]
    period_ms: Optional[int] = None
    node_count: int = 0

    @classmethod
    def build(cls, contacts: Iterable[Contact], period_ms: Optional[int] = None,
              node_count: Optional[int] = None) -> "ContactPlan":
        ordered = tuple(sorted(contacts, key=Contact.sort_key))
        max_id = max((max(c.frm, c.to) for c in ordered), default=-1)
        if node_count is None:
            node_count = max_id + 1
        elif max_id >= node_count:
            raise ValidationError(f"contact references node {max_id} >= node_count {node_count}")
        if period_ms is not None:
            if period_ms <= 0:
                raise ValidationError(f"period must be positive, got {period_ms} ms")
            for c in ordered:
                if c.end_ms > period_ms:
                    raise ValidationError(
                        f"contact [{c.start_ms}, {c.end_ms}) ms exceeds period {period_ms} ms"
                    )
        return cls(contacts=ordered, period_ms=period_ms, node_count=node_count)

    @property
    def is_cyclic(self) -> bool:
        return self.period_ms is not None

    @property
    def horizon_ms(self) -> int:
        """End of the last contact (one period for cyclic plans)."""
        if self.period_ms is not None:
            return self.period_ms
        return max((c.end_ms for c in self.contacts), default=0)

    def nodes(self) -> range:
        return range(self.node_count)


@dataclass(frozen=True)
class Bundle:
    """A message to be carried store-carry-forward to every destination."""

    id: int
    source: int
    destinations: frozenset[int]
    size: int  # bytes
    created_at_ms: int = 0
    ttl_ms: int = 10 ** 12

    def __post_init__(self):
        if not self.destinations:
            raise ValidationError("bundle needs at least one destination")
        if self.source in self.destinations:
            raise ValidationError(f"bundle source {self.source} is also a destination")
        if self.size <= 0:
            raise ValidationError(f"bundle size must be positive, got {self.size}")
        if self.ttl_ms <= 0:
            raise ValidationError(f"bundle ttl must be positive, got {self.ttl_ms}")

    @property
    def expiry_ms(self) -> int:
        return self.created_at_ms + self.ttl_ms

    @classmethod
    def make(cls, id: int, source: int, destinations: Iterable[int], size: int,
             created_at: float = 0.0, ttl: float = 10 ** 9) -> "Bundle":
        return cls(id=id, source=source, destinations=frozenset(destinations), size=size,
                   created_at_ms=to_ms(created_at), ttl_ms=to_ms(ttl))


_KINDS = {k.value: k for k in ContactKind}


def parse_contact_plan(text: str, node_count: Optional[int] = None) -> ContactPlan:
    """Parse the plan-file line format.

    ``contact <from> <to> <start_s> <end_s> <rate_Bps> [prob=<p>] [kind=<k>]``
    ``period <seconds>`` at most once; ``#`` starts a comment line.
    """
    contacts: list[Contact] = []
    period_ms: Optional[int] = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        record = fields[0]
        if record == "period":
            if period_ms is not None:
                raise ParseError(line_no, "duplicate period record")
            if len(fields) != 2:
                raise ParseError(line_no, "period takes exactly one value")
            try:
                period_ms = to_ms(float(fields[1]))
            except ValueError:
                raise ParseError(line_no, f"bad period value {fields[1]!r}") from None
        elif record == "contact":
            if len(fields) < 6:
                raise ParseError(line_no, "contact needs <from> <to> <start> <end> <rate>")
            try:
                frm, to = int(fields[1]), int(fields[2])
                start_s, end_s, rate = (float(fields[3]), float(fields[4]), float(fields[5]))
            except ValueError:
                raise ParseError(line_no, f"bad contact fields in {line!r}") from None
            prob, kind = 1.0, ContactKind.SCHEDULED
            for extra in fields[6:]:
                key, sep, value = extra.partition("=")
                if not sep:
                    raise ParseError(line_no, f"expected key=value, got {extra!r}")
                if key == "prob":
                    try:
                        prob = float(value)
                    except ValueError:
                        raise ParseError(line_no, f"bad prob value {value!r}") from None
                elif key == "kind":
                    if value not in _KINDS:
                        raise ParseError(line_no, f"unknown kind {value!r}")
                    kind = _KINDS[value]
                else:
                    raise ParseError(line_no, f"unknown option {key!r}")
            contacts.append(Contact(frm=frm, to=to, start_ms=to_ms(start_s),
                                    end_ms=to_ms(end_s), rate=rate,
                                    probability=prob, kind=kind))
        else:
            raise ParseError(line_no, f"unknown record {record!r}")
    return ContactPlan.build(contacts, period_ms=period_ms, node_count=node_count)


def render_contact_plan(plan: ContactPlan) -> str:
    """Canonical text form; parse(render(plan)) == plan."""
    lines = []
    if plan.period_ms is not None:
        lines.append(f"period {fmt_seconds(plan.period_ms)}")
    for c in plan.contacts:
        parts = [
            f"contact {c.frm} {c.to} {fmt_seconds(c.start_ms)} {fmt_seconds(c.end_ms)}",
            f"{c.rate:g}" if float(c.rate).is_integer() else repr(c.rate),
        ]
        if c.probability != 1.0:
            parts.append(f"prob={c.probability!r}")
        if c.kind is not ContactKind.SCHEDULED:
            parts.append(f"kind={c.kind.value}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def contacts_active_at(plan: ContactPlan, t: float) -> list[Contact]:
    """Contacts whose half-open interval covers time ``t`` (seconds)."""
    t_ms = to_ms(t)
    if t_ms < 0:
        raise ValidationError(f"time must be non-negative, got {t}")
    if plan.period_ms is not None:
        t_ms = t_ms % plan.period_ms
    return [c for c in plan.contacts if c.active_at(t_ms)]


def unroll_recurring_plan(plan: ContactPlan, horizon: float) -> ContactPlan:
    """Expand a cyclic plan into shifted copies up to ``horizon`` seconds.

    Contacts starting at or past the horizon are dropped; a contact
    straddling it is clipped.
    """
    if plan.period_ms is None:
        raise NotCyclic("plan has no period; nothing to unroll")
    horizon_ms = to_ms(horizon)
    if horizon_ms <= 0:
        raise ValidationError(f"horizon must be positive, got {horizon}")
    copies = -(-horizon_ms // plan.period_ms)
    unrolled = []
    for k in range(copies):
        delta = k * plan.period_ms
        for c in plan.contacts:
            if c.start_ms + delta >= horizon_ms:
                continue
            shifted = c.shifted(delta)
            if shifted.end_ms > horizon_ms:
                shifted = replace(shifted, end_ms=horizon_ms)
            unrolled.append(shifted)
    return ContactPlan.build(unrolled, period_ms=None, node_count=plan.node_count)
