import random

import pytest

from dtnsim.contacts import (Bundle, Contact, ContactKind, ContactPlan,
                             contacts_active_at, fmt_seconds, parse_contact_plan,
                             render_contact_plan, transmission_ms,
                             unroll_recurring_plan)
from dtnsim.errors import NotCyclic, ParseError, ValidationError

from conftest import plan_of, random_plan


class TestParse:
    def test_single_scheduled_contact(self):
        plan = parse_contact_plan("contact 0 1 10 20 100\n")
        assert len(plan.contacts) == 1
        c = plan.contacts[0]
        assert (c.frm, c.to, c.start_ms, c.end_ms, c.rate) == (0, 1, 10000, 20000, 100.0)
        assert c.probability == 1.0
        assert c.kind is ContactKind.SCHEDULED
        assert plan.node_count == 2

    def test_start_after_end_rejected(self):
        with pytest.raises(ValidationError):
            parse_contact_plan("contact 0 1 20 10 100\n")

    def test_invariant_violations(self):
        with pytest.raises(ValidationError):
            parse_contact_plan("contact 0 1 0 10 0\n")  # rate <= 0
        with pytest.raises(ValidationError):
            parse_contact_plan("contact 0 1 0 10 5 prob=1.5\n")
        with pytest.raises(ValidationError):
            parse_contact_plan("contact 2 2 0 10 5\n")  # self contact
        with pytest.raises(ValidationError):
            parse_contact_plan("contact 0 1 0 10 5 prob=0.5\n")  # scheduled w/ prob<1

    def test_parse_errors_carry_line_numbers(self):
        with pytest.raises(ParseError) as err:
            parse_contact_plan("# ok\ncontact 0 1 x 20 100\n")
        assert err.value.line_no == 2
        with pytest.raises(ParseError):
            parse_contact_plan("contact 0 1 0 10\n")  # missing rate
        with pytest.raises(ParseError):
            parse_contact_plan("link 0 1\n")  # unknown record
        with pytest.raises(ParseError):
            parse_contact_plan("contact 0 1 0 10 5 kind=warp\n")

    def test_options_and_period(self):
        text = """# demo
period 100
contact 0 1 10 20 100 prob=0.7 kind=predicted
contact 1 0 30 40 50 kind=persistent
"""
        plan = parse_contact_plan(text)
        assert plan.period_ms == 100000
        assert plan.contacts[0].kind is ContactKind.PREDICTED
        assert plan.contacts[0].probability == 0.7
        assert plan.contacts[1].kind is ContactKind.PERSISTENT
        with pytest.raises(ParseError):
            parse_contact_plan("period 10\nperiod 20\n")

    def test_thirty_node_scenario(self):
        lines = []
        for i in range(29):
            lines.append(f"contact {i} {i + 1} {10 * i} {10 * i + 5} 100")
            if i % 3 == 0:
                lines.append(f"contact {i + 1} {i} {10 * i} {10 * i + 5} 100 prob=0.7 kind=predicted")
        plan = parse_contact_plan("\n".join(lines))
        assert plan.node_count == 30

    def test_canonical_sort_independent_of_input_order(self):
        a = parse_contact_plan("contact 0 1 10 20 5\ncontact 0 1 0 5 5\n")
        b = parse_contact_plan("contact 0 1 0 5 5\ncontact 0 1 10 20 5\n")
        assert a == b
        assert [c.start_ms for c in a.contacts] == [0, 10000]


class TestRoundTrip:
    def test_simple_round_trip(self):
        plan = plan_of((0, 1, 10, 20, 100), (1, 2, 0.5, 1.25, 3, 0.75))
        assert parse_contact_plan(render_contact_plan(plan)) == plan

    def test_random_round_trips(self, rng):
        for _ in range(50):
            plan = random_plan(rng)
            assert parse_contact_plan(render_contact_plan(plan)) == plan

    def test_period_round_trip(self):
        plan = plan_of((0, 1, 1, 2, 10), period=100)
        assert parse_contact_plan(render_contact_plan(plan)) == plan

    def test_fmt_seconds_exact(self):
        assert fmt_seconds(10000) == "10"
        assert fmt_seconds(10500) == "10.5"
        assert fmt_seconds(1) == "0.001"
        assert fmt_seconds(0) == "0"


class TestActiveAt:
    def test_inside_interval(self):
        plan = plan_of((0, 1, 10, 20, 1))
        assert contacts_active_at(plan, 15) == [plan.contacts[0]]

    def test_boundary_is_half_open(self):
        plan = plan_of((0, 1, 10, 20, 1))
        assert contacts_active_at(plan, 20) == []
        assert contacts_active_at(plan, 10) == [plan.contacts[0]]

    def test_cyclic_plan_wraps(self):
        plan = plan_of((0, 1, 10, 20, 1), period=100)
        # cross-check against the unrolled plan
        unrolled = unroll_recurring_plan(plan, 200)
        active = [c for c in unrolled.contacts if c.active_at(115000)]
        assert len(active) == 1
        assert contacts_active_at(plan, 115) == [plan.contacts[0]]

    def test_returned_contacts_satisfy_membership(self, rng):
        for _ in range(20):
            plan = random_plan(rng)
            t = rng.uniform(0, 120)
            for c in contacts_active_at(plan, t):
                assert c in plan.contacts
                assert c.start_ms <= round(t * 1000) < c.end_ms


class TestUnroll:
    def test_three_copies(self):
        plan = plan_of((0, 1, 10, 20, 1), period=100)
        out = unroll_recurring_plan(plan, 250)
        assert out.period_ms is None
        spans = [(c.start_ms, c.end_ms) for c in out.contacts]
        assert spans == [(10000, 20000), (110000, 120000), (210000, 220000)]

    def test_horizon_before_first_contact(self):
        plan = plan_of((0, 1, 60, 70, 1), period=100)
        assert unroll_recurring_plan(plan, 50).contacts == ()

    def test_horizon_equals_period_is_identity(self):
        plan = plan_of((0, 1, 10, 20, 1), (1, 2, 30, 40, 2), period=100)
        out = unroll_recurring_plan(plan, 100)
        assert [(c.start_ms, c.end_ms, c.rate) for c in out.contacts] == \
               [(c.start_ms, c.end_ms, c.rate) for c in plan.contacts]

    def test_not_cyclic(self):
        plan = plan_of((0, 1, 10, 20, 1))
        with pytest.raises(NotCyclic):
            unroll_recurring_plan(plan, 100)

    def test_per_period_volume_is_preserved(self, rng):
        for _ in range(20):
            base = random_plan(rng, max_nodes=4, max_contacts=6)
            period_ms = max(c.end_ms for c in base.contacts)
            plan = ContactPlan.build(base.contacts, period_ms=period_ms,
                                     node_count=base.node_count)
            k = rng.randint(2, 4)
            out = unroll_recurring_plan(plan, period_ms * k / 1000)
            base_volume = sum(c.volume for c in plan.contacts)
            for j in range(k):
                lo, hi = j * period_ms, (j + 1) * period_ms
                vol = sum(c.volume for c in out.contacts if lo <= c.start_ms < hi)
                assert vol == base_volume


class TestBundle:
    def test_invariants(self):
        with pytest.raises(ValidationError):
            Bundle.make(id=0, source=1, destinations=[1, 2], size=10)
        with pytest.raises(ValidationError):
            Bundle.make(id=0, source=0, destinations=[], size=10)
        with pytest.raises(ValidationError):
            Bundle.make(id=0, source=0, destinations=[1], size=0)
        with pytest.raises(ValidationError):
            Bundle.make(id=0, source=0, destinations=[1], size=5, ttl=0)

    def test_expiry(self):
        b = Bundle.make(id=0, source=0, destinations=[1], size=5, created_at=10, ttl=60)
        assert b.expiry_ms == 70000


class TestTransmissionMs:
    def test_exact_integer_division(self):
        assert transmission_ms(5, 1) == 5000
        assert transmission_ms(100, 100) == 1000

    def test_rounds_up(self):
        assert transmission_ms(1, 3) == 334
        assert transmission_ms(10, 1024) == 10

    def test_period_bound_enforced(self):
        with pytest.raises(ValidationError):
            plan_of((0, 1, 10, 120, 1), period=100)
