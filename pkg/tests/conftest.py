"""Shared builders: compact plan construction and seeded random scenarios."""
import random

import pytest

from dtnsim.contacts import Bundle, Contact, ContactKind, ContactPlan


def plan_of(*specs, period=None, node_count=None):
    """Build a plan from (frm, to, start_s, end_s, rate[, prob[, kind]]) tuples."""
    contacts = []
    for spec in specs:
        frm, to, start, end, rate = spec[:5]
        prob = spec[5] if len(spec) > 5 else 1.0
        kind = spec[6] if len(spec) > 6 else (
            ContactKind.SCHEDULED if prob == 1.0 else ContactKind.PREDICTED)
        contacts.append(Contact(frm=frm, to=to, start_ms=round(start * 1000),
                                end_ms=round(end * 1000), rate=rate,
                                probability=prob, kind=kind))
    return ContactPlan.build(
        contacts,
        period_ms=None if period is None else round(period * 1000),
        node_count=node_count,
    )


def bundle_of(source, dests, size, created_at=0.0, ttl=10 ** 6, id=0):
    return Bundle.make(id=id, source=source, destinations=dests, size=size,
                       created_at=created_at, ttl=ttl)


def random_plan(rng: random.Random, max_nodes=6, max_contacts=15):
    """Small random plan with integer-second windows and integer rates."""
    n = rng.randint(2, max_nodes)
    m = rng.randint(1, max_contacts)
    contacts = []
    for _ in range(m):
        frm = rng.randrange(n)
        to = rng.randrange(n)
        while to == frm:
            to = rng.randrange(n)
        start = rng.randint(0, 80)
        end = start + rng.randint(1, 30)
        rate = rng.choice([1, 2, 5, 10])
        if rng.random() < 0.3:
            prob = rng.choice([0.5, 0.6, 0.7, 0.8, 0.9])
            kind = ContactKind.PREDICTED
        else:
            prob, kind = 1.0, ContactKind.SCHEDULED
        contacts.append(Contact(frm=frm, to=to, start_ms=start * 1000,
                                end_ms=end * 1000, rate=rate,
                                probability=prob, kind=kind))
    return ContactPlan.build(contacts)


@pytest.fixture
def rng():
    return random.Random(0xC1C)
