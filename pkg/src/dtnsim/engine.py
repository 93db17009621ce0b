"""Deterministic discrete-event simulation loop.

One scenario is one single-threaded run: a seeded RNG, a (time, seq)
ordered event queue, and policy-specific forwarding state. Identical
configs produce bit-identical metrics and traces.

Plan-driven policies (esp, dhr_cic, epidemic, gossip, direct) move bundle
custody over contacts with per-contact FIFO contention; topology-driven
policies (multipath, power_aware, min_hop) move packets over geometric
links with discovery, maintenance and energy accounting. Link-state
measurement ticks run every second by default and rate updates every two,
with a rate change requiring two samples.
"""
from __future__ import annotations

import heapq
import json
import math
import random
from dataclasses import dataclass, field, replace
from typing import Any, Optional

from . import cic, hierarchy
from .contacts import (Bundle, ContactPlan, to_ms, to_seconds,
                       transmission_ms, unroll_recurring_plan)
from .errors import (AllPathsBroken, ConfigError, NoAliveNeighbor, NoRoute,
                     ScenarioError, Unreachable)
from .esp import greedy_next_hop
from .energy import (EnergyState, RadioParams, diffuse_and_reinforce,
                     min_hop_next_hop, network_lifetime, power_aware_next_hop)
from .multipath import (OnDemandRouter, PathSet, Topology,
                        maintain_routes, select_disjoint_paths)

CONTACT_START = "ContactStart"
CONTACT_END = "ContactEnd"
BUNDLE_GENERATED = "BundleGenerated"
HOP_COMPLETE = "HopComplete"
MEASUREMENT_TICK = "MeasurementTick"
RATE_UPDATE_TICK = "RateUpdateTick"
MOVE = "Move"
PACKET_SEND = "PacketSend"
FORWARD = "Forward"

PLAN_POLICIES = ("esp", "dhr_cic", "epidemic", "gossip", "direct")
TOPO_POLICIES = ("multipath", "power_aware", "min_hop")


@dataclass(frozen=True)
class Event:
    time_ms: int
    seq: int
    kind: str
    payload: Any = None

    def sort_key(self):
        return (self.time_ms, self.seq)


@dataclass
class ScenarioConfig:
    policy: str = "esp"
    plan: Optional[ContactPlan] = None
    topology: Optional[Topology] = None
    moves: tuple[tuple[float, int, float, float], ...] = ()  # (t, node, x, y)
    horizon: Optional[float] = None
    seed: int = 0
    label: str = ""

    window: float = 60.0
    threshold: float = 0.7
    branching: int = 3
    k_paths: int = 2
    gossip_p: float = 1.0
    multicast_mode: str = "failover"

    measurement_period: float = 1.0
    rate_update_period: Optional[float] = None
    beta: float = 0.5
    rate_initial: float = 5.0
    rate_min: float = 1.0

    bundle_count: int = 1
    bundle_size: int = 1000
    bundle_interval: float = 10.0
    bundle_start: float = 0.0
    bundle_ttl: float = 10 ** 6
    bundle_src: Optional[int] = None
    bundle_dsts: Optional[tuple[int, ...]] = None

    packet_size: int = 1024
    route_expiry: float = 30.0
    hop_latency: float = 0.05

    energy_initial: float = 1.0
    energy_overrides: tuple[tuple[int, float], ...] = ()
    tx_elec: float = 5e-8
    tx_amp: float = 1e-10
    rx_elec: float = 5e-8

    collect_traces: bool = True

    def validated(self) -> "ScenarioConfig":
        cfg = self
        if cfg.policy not in PLAN_POLICIES + TOPO_POLICIES:
            raise ConfigError(f"unknown policy {cfg.policy!r}")
        if cfg.policy in PLAN_POLICIES and cfg.plan is None:
            raise ConfigError(f"policy {cfg.policy} needs a contact plan")
        if cfg.policy in TOPO_POLICIES and cfg.topology is None:
            raise ConfigError(f"policy {cfg.policy} needs a topology")
        if cfg.measurement_period <= 0:
            raise ConfigError("measurement_period must be positive")
        if cfg.rate_update_period is None:
            cfg = replace(cfg, rate_update_period=2 * cfg.measurement_period)
        if not 0.6 <= cfg.threshold <= 0.8:
            raise ConfigError(f"threshold {cfg.threshold} outside [0.6, 0.8]")
        if not 0 < cfg.gossip_p <= 1:
            raise ConfigError("gossip_p must be in (0, 1]")
        if cfg.horizon is None:
            if cfg.plan is not None and not cfg.plan.is_cyclic:
                cfg = replace(cfg, horizon=to_seconds(cfg.plan.horizon_ms))
            else:
                raise ConfigError("horizon is required")
        if cfg.horizon <= 0:
            raise ConfigError("horizon must be positive")
        if cfg.multicast_mode not in ("failover", "stripe"):
            raise ConfigError(f"unknown multicast mode {cfg.multicast_mode!r}")
        return cfg


METRICS_FIELDS = (
    "label", "policy", "n", "seed", "generated", "delivered", "lost",
    "in_flight", "delivery_ratio", "mean_delay_s", "transmissions",
    "control_messages", "overhead_ratio", "state_entries_per_node",
    "lifetime_s", "measurement_ticks", "rate_ticks", "rate_updates",
)


@dataclass
class Metrics:
    label: str
    policy: str
    n: int
    seed: int
    generated: int = 0
    delivered: int = 0
    lost: int = 0
    in_flight: int = 0
    delivery_ratio: float = 1.0
    mean_delay_s: float = 0.0
    transmissions: int = 0
    control_messages: int = 0
    overhead_ratio: float = 0.0
    state_entries_per_node: float = 0.0
    lifetime_s: float = math.inf
    measurement_ticks: int = 0
    rate_ticks: int = 0
    rate_updates: int = 0

    def row(self) -> list[str]:
        return [_fmt(getattr(self, name)) for name in METRICS_FIELDS]


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return format(value, ".12g")
    return str(value)


def metrics_tsv(rows: list[Metrics]) -> str:
    lines = ["\t".join(METRICS_FIELDS)]
    lines += ["\t".join(m.row()) for m in rows]
    return "\n".join(lines) + "\n"


def metrics_json(rows: list[Metrics]) -> str:
    payload = [dict(zip(METRICS_FIELDS, m.row())) for m in rows]
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


@dataclass
class Traces:
    hop_traces: dict = field(default_factory=dict)       # (bundle, dest) -> [(t_ms, frm, to)]
    loss_samples: list = field(default_factory=list)     # (t_s, source, sample)
    rate_events: list = field(default_factory=list)      # (t_s, source, old, new)
    move_events: list = field(default_factory=list)      # (t_s, node, x, y)
    residual_energy: dict = field(default_factory=dict)  # node -> joules at end
    death_times: dict = field(default_factory=dict)
    state_entries: dict = field(default_factory=dict)    # node -> entries
    events_processed: int = 0


@dataclass
class ScenarioResult:
    metrics: Metrics
    traces: Traces


def rate_update(history: tuple[float, float], rate: float, beta: float,
                measurement_period: float, rate_min: float = 1.0) -> float:
    """Loss-slope controller: multiplicative decrease on a rising loss
    slope, additive +1 otherwise. Needs two samples."""
    m_prev, m_now = history
    slope = (m_now - m_prev) / measurement_period
    if slope > 0:
        return max(rate_min, rate * (1.0 - beta * slope))
    return rate + 1.0


def run_scenario(config: ScenarioConfig) -> ScenarioResult:
    config = config.validated()
    if config.policy in PLAN_POLICIES:
        sim = _PlanSim(config)
    else:
        sim = _TopoSim(config)
    return sim.run()


class _BaseSim:
    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.horizon_ms = to_ms(config.horizon)
        self.rng = random.Random(config.seed)
        self.queue: list[tuple[int, int, Event]] = []
        self._seq = 0
        self.traces = Traces()
        self.transmissions = 0
        self.control_messages = 0
        self.delivered_delays_ms: list[int] = []
        self.rate_by_source: dict[int, float] = {}
        self.sample_history: dict[int, list[float]] = {}
        self.period_sent: dict[int, int] = {}
        self.period_lost: dict[int, int] = {}
        self.measurement_ticks = 0
        self.rate_ticks = 0
        self.rate_updates = 0
        self._pending_moves = sorted(
            (to_ms(t), node, x, y) for t, node, x, y in config.moves)

    def push(self, t_ms: int, kind: str, payload=None):
        self._seq += 1
        event = Event(time_ms=t_ms, seq=self._seq, kind=kind, payload=payload)
        heapq.heappush(self.queue, (t_ms, self._seq, event))

    def schedule_ticks(self):
        mp = to_ms(self.config.measurement_period)
        k = 1
        while k * mp <= self.horizon_ms:
            self.push(k * mp, MEASUREMENT_TICK)
            k += 1
        rp = to_ms(self.config.rate_update_period)
        k = 1
        while k * rp <= self.horizon_ms:
            self.push(k * rp, RATE_UPDATE_TICK)
            k += 1

    def run(self) -> ScenarioResult:
        self.setup()
        self.schedule_ticks()
        while self.queue:
            t_ms, _, event = heapq.heappop(self.queue)
            if t_ms > self.horizon_ms:
                break
            self.traces.events_processed += 1
            self.dispatch(event)
        return ScenarioResult(metrics=self.collect(), traces=self.traces)

    def dispatch(self, event: Event):
        if event.kind == MEASUREMENT_TICK:
            self.on_measurement_tick(event.time_ms)
        elif event.kind == RATE_UPDATE_TICK:
            self.on_rate_tick(event.time_ms)
        else:
            self.handle(event)

    def on_measurement_tick(self, t_ms: int):
        self.measurement_ticks += 1
        self.apply_moves(t_ms)
        self.maintenance(t_ms)
        for source in sorted(self.rate_by_source):
            sent = self.period_sent.get(source, 0)
            lost = self.period_lost.get(source, 0)
            sample = (lost / sent) if sent > 0 else 0.0
            history = self.sample_history.setdefault(source, [])
            history.append(sample)
            if len(history) > 2:
                del history[0]
            self.traces.loss_samples.append((to_seconds(t_ms), source, sample))
        self.period_sent.clear()
        self.period_lost.clear()

    def on_rate_tick(self, t_ms: int):
        self.rate_ticks += 1
        for source in sorted(self.rate_by_source):
            history = self.sample_history.get(source, [])
            if len(history) < 2:
                continue
            old = self.rate_by_source[source]
            new = rate_update((history[0], history[1]), old, self.config.beta,
                              self.config.measurement_period, self.config.rate_min)
            if new != old:
                self.rate_by_source[source] = new
                self.rate_updates += 1
                self.traces.rate_events.append((to_seconds(t_ms), source, old, new))

    def apply_moves(self, t_ms: int):
        pass

    def maintenance(self, t_ms: int):
        pass

    def setup(self):
        raise NotImplementedError

    def handle(self, event: Event):
        raise NotImplementedError

    def collect(self) -> Metrics:
        raise NotImplementedError

    def base_metrics(self, n: int) -> Metrics:
        m = Metrics(label=self.config.label, policy=self.config.policy,
                    n=n, seed=self.config.seed)
        m.transmissions = self.transmissions
        m.control_messages = self.control_messages
        m.measurement_ticks = self.measurement_ticks
        m.rate_ticks = self.rate_ticks
        m.rate_updates = self.rate_updates
        return m

    def finish_metrics(self, m: Metrics) -> Metrics:
        if m.generated > 0:
            m.delivery_ratio = m.delivered / m.generated
        else:
            m.delivery_ratio = 1.0  # degenerate: nothing to deliver
        if self.delivered_delays_ms:
            m.mean_delay_s = to_seconds(
                sum(self.delivered_delays_ms)) / len(self.delivered_delays_ms)
        m.overhead_ratio = (m.transmissions + m.control_messages) / max(1, m.delivered)
        assert m.delivered + m.lost + m.in_flight == m.generated, \
            "bundle conservation violated"
        return m


@dataclass
class _Flow:
    bundle: Bundle
    dest: int
    at: int
    delivered_ms: Optional[int] = None
    lost: bool = False

    @property
    def key(self):
        return (self.bundle.id, self.dest)


class _PlanSim(_BaseSim):
    """Contact-plan forwarding: esp, dhr_cic, epidemic, gossip, direct."""

    def setup(self):
        cfg = self.config
        plan = cfg.plan
        if plan.is_cyclic:
            plan = unroll_recurring_plan(plan, cfg.horizon)
        self.plan = plan
        self.n = plan.node_count
        if self.n < 2:
            raise ScenarioError("plan scenarios need at least 2 nodes")
        self.busy_until = [0] * len(plan.contacts)
        self.contacts_by_pair: dict[tuple[int, int], list[int]] = {}
        for idx, c in enumerate(plan.contacts):
            self.contacts_by_pair.setdefault((c.frm, c.to), []).append(idx)
        self.flows: dict[tuple[int, int], _Flow] = {}
        self.copies: dict[int, set[int]] = {}
        self.relays: dict[tuple[int, int], bool] = {}
        self.inflight: set[tuple[int, int]] = set()
        self.bundles: dict[int, Bundle] = {}

        if cfg.policy == "dhr_cic":
            self.tree = hierarchy.build_hierarchy(plan, cfg.branching)
            tables = hierarchy.per_level_tables(plan, self.tree, window=cfg.window)
            self.dhr_tables = hierarchy.build_dhr_tables(self.tree, tables)
            self.phase_counters: dict[str, int] = {}

        for event_time_ms, bundle in self._traffic():
            self.push(event_time_ms, BUNDLE_GENERATED, bundle)
        for idx, c in enumerate(plan.contacts):
            self.push(c.start_ms, CONTACT_START, idx)
            self.push(c.end_ms, CONTACT_END, idx)
        self._state_entries()

    def _traffic(self):
        cfg = self.config
        out = []
        for i in range(cfg.bundle_count):
            created = to_ms(cfg.bundle_start) + to_ms(cfg.bundle_interval) * i
            src = cfg.bundle_src if cfg.bundle_src is not None \
                else self.rng.randrange(self.n)
            if cfg.bundle_dsts is not None:
                dsts = tuple(cfg.bundle_dsts)
            else:
                d = self.rng.randrange(self.n)
                while d == src:
                    d = self.rng.randrange(self.n)
                dsts = (d,)
            if src in dsts:
                raise ScenarioError(f"bundle {i} source {src} is a destination")
            bundle = Bundle(id=i, source=src, destinations=frozenset(dsts),
                            size=cfg.bundle_size, created_at_ms=created,
                            ttl_ms=to_ms(cfg.bundle_ttl))
            self.rate_by_source.setdefault(src, cfg.rate_initial)
            out.append((created, bundle))
        return out

    def _state_entries(self):
        cfg = self.config
        if cfg.policy == "esp":
            entries = {node: len(self.plan.contacts) for node in range(self.n)}
        elif cfg.policy == "dhr_cic":
            entries = {}
            for node in range(self.n):
                cluster = self.tree.members_of(self.tree.cluster_of(node, 1), 1)
                entries[node] = self.dhr_tables[node].entry_count() + len(cluster)
        else:
            entries = {node: 0 for node in range(self.n)}
        self.traces.state_entries = entries

    # -- event handlers -----------------------------------------------------

    def handle(self, event: Event):
        if event.kind == BUNDLE_GENERATED:
            self._on_bundle(event.payload, event.time_ms)
        elif event.kind == CONTACT_START:
            self._on_contact_start(event.payload, event.time_ms)
        elif event.kind == CONTACT_END:
            pass  # windows are enforced when transmissions are scheduled
        elif event.kind == HOP_COMPLETE:
            self._on_hop_complete(event.payload, event.time_ms)

    def _on_bundle(self, bundle: Bundle, t_ms: int):
        self.bundles[bundle.id] = bundle
        self.copies[bundle.id] = {bundle.source}
        self.relays[(bundle.id, bundle.source)] = True
        for dest in sorted(bundle.destinations):
            flow = _Flow(bundle=bundle, dest=dest, at=bundle.source)
            self.flows[flow.key] = flow
            if self.config.policy in ("esp", "dhr_cic"):
                self._forward(flow, t_ms)
        if self.config.policy in ("epidemic", "gossip", "direct"):
            self._pump_node(bundle.source, t_ms)

    def _on_contact_start(self, idx: int, t_ms: int):
        if self.config.policy in ("epidemic", "gossip", "direct"):
            self._pump_contact(idx, t_ms)
        elif self.config.policy in ("esp", "dhr_cic"):
            c = self.plan.contacts[idx]
            for flow in self._flows_waiting_at(c.frm):
                self._forward(flow, t_ms)

    def _flows_waiting_at(self, node: int):
        return [f for key, f in sorted(self.flows.items())
                if f.at == node and f.delivered_ms is None and not f.lost
                and key not in self.inflight]

    def _on_hop_complete(self, payload, t_ms: int):
        kind, *rest = payload
        if kind == "flow":
            flow_key, contact_idx = rest
            flow = self.flows[flow_key]
            c = self.plan.contacts[contact_idx]
            self.inflight.discard(flow_key)
            flow.at = c.to
            self._record_hop(flow_key, t_ms, c.frm, c.to)
            self.transmissions += 1
            self.period_sent[flow.bundle.source] = \
                self.period_sent.get(flow.bundle.source, 0) + 1
            if c.to == flow.dest:
                flow.delivered_ms = t_ms
                self.delivered_delays_ms.append(t_ms - flow.bundle.created_at_ms)
            else:
                self._forward(flow, t_ms)
            # the link is free again: flows queued at its tail may proceed
            for waiting in self._flows_waiting_at(c.frm):
                self._forward(waiting, t_ms)
        else:  # epidemic-style copy transfer
            bundle_id, contact_idx = rest
            c = self.plan.contacts[contact_idx]
            bundle = self.bundles[bundle_id]
            self.inflight.discard((bundle_id, c.to))
            self.copies[bundle_id].add(c.to)
            self._record_hop((bundle_id, -1), t_ms, c.frm, c.to)
            self.transmissions += 1
            self.period_sent[bundle.source] = \
                self.period_sent.get(bundle.source, 0) + 1
            if self.config.policy == "direct":
                self.relays[(bundle_id, c.to)] = False
            elif self.config.policy == "gossip":
                self.relays[(bundle_id, c.to)] = \
                    self.rng.random() < self.config.gossip_p
            else:
                self.relays[(bundle_id, c.to)] = True
            flow = self.flows.get((bundle_id, c.to))
            if flow is not None and flow.delivered_ms is None:
                flow.delivered_ms = t_ms
                self.delivered_delays_ms.append(t_ms - bundle.created_at_ms)
            self._pump_contact(contact_idx, t_ms)
            self._pump_node(c.to, t_ms)

    # -- single-custody forwarding (esp, dhr_cic) ---------------------------

    def _forward(self, flow: _Flow, t_ms: int):
        if flow.key in self.inflight:
            return
        bundle, node = flow.bundle, flow.at
        deadline = min(bundle.expiry_ms, self.horizon_ms)
        if t_ms > deadline:
            return
        if self.config.policy == "esp":
            found = greedy_next_hop(self.plan, bundle.size, node, flow.dest,
                                    t_ms, deadline)
            if found is None:
                return  # unreachable from here; stays in flight
            next_node = found[0]
        else:
            try:
                next_node = hierarchy.dhr_next_hop(
                    node, flow.dest, self.tree, self.dhr_tables, self.plan,
                    bundle, to_seconds(t_ms), counters=self.phase_counters)
            except Unreachable:
                return
        self._schedule_transfer(flow, node, next_node, t_ms, deadline)

    def _schedule_transfer(self, flow: _Flow, node: int, next_node: int,
                           t_ms: int, deadline: int):
        choice = self._earliest_slot(node, next_node, t_ms, deadline,
                                     flow.bundle.size)
        if choice is None:
            return  # retried on the next contact start from this node
        idx, start, end = choice
        self.busy_until[idx] = end
        self.inflight.add(flow.key)
        self.push(end, HOP_COMPLETE, ("flow", flow.key, idx))

    def _earliest_slot(self, node: int, next_node: int, t_ms: int,
                       deadline: int, size: int):
        best = None
        for idx in self.contacts_by_pair.get((node, next_node), ()):  # index order
            c = self.plan.contacts[idx]
            dur = transmission_ms(size, c.rate)
            start = max(t_ms, c.start_ms, self.busy_until[idx])
            end = start + dur
            if end > c.end_ms or end > deadline:
                continue
            if best is None or (end, idx) < (best[2], best[0]):
                best = (idx, start, end)
        return best

    # -- replication forwarding (epidemic, gossip, direct) ------------------

    def _pump_node(self, node: int, t_ms: int):
        for idx, c in enumerate(self.plan.contacts):
            if c.frm == node and c.start_ms <= t_ms < c.end_ms:
                self._pump_contact(idx, t_ms)

    def _pump_contact(self, idx: int, t_ms: int):
        c = self.plan.contacts[idx]
        if self.busy_until[idx] > t_ms:
            return  # re-pumped when the in-flight transfer completes
        for bundle_id in sorted(self.copies):
            bundle = self.bundles[bundle_id]
            if c.frm not in self.copies[bundle_id]:
                continue
            if c.to in self.copies[bundle_id] or (bundle_id, c.to) in self.inflight:
                continue
            if not self.relays.get((bundle_id, c.frm), False):
                continue
            if self.config.policy == "direct" and c.to not in bundle.destinations:
                continue
            dur = transmission_ms(bundle.size, c.rate)
            start = max(t_ms, c.start_ms, self.busy_until[idx])
            end = start + dur
            if end > c.end_ms or end > min(bundle.expiry_ms, self.horizon_ms):
                continue
            self.busy_until[idx] = end
            self.inflight.add((bundle_id, c.to))
            self.push(end, HOP_COMPLETE, ("copy", bundle_id, idx))
            return  # one transfer at a time per contact

    def _record_hop(self, key, t_ms: int, frm: int, to: int):
        if self.config.collect_traces:
            self.traces.hop_traces.setdefault(key, []).append((t_ms, frm, to))

    # -- metrics -------------------------------------------------------------

    def collect(self) -> Metrics:
        m = self.base_metrics(self.n)
        m.generated = len(self.flows)
        for flow in self.flows.values():
            if flow.delivered_ms is not None:
                m.delivered += 1
            elif flow.bundle.expiry_ms <= self.horizon_ms or flow.lost:
                m.lost += 1
            else:
                m.in_flight += 1
        entries = self.traces.state_entries
        m.state_entries_per_node = max(entries.values()) if entries else 0
        return self.finish_metrics(m)


class _TopoSim(_BaseSim):
    """Geometric-topology packet forwarding: multipath, power_aware, min_hop."""

    def setup(self):
        cfg = self.config
        self.topo = cfg.topology
        self.n = self.topo.node_count()
        if cfg.bundle_src is None or not cfg.bundle_dsts:
            raise ScenarioError("topology scenarios need bundle_src and bundle_dsts")
        self.src = cfg.bundle_src
        self.dests = tuple(sorted(cfg.bundle_dsts))
        self.packets_total = max(1, -(-cfg.bundle_size // cfg.packet_size))
        self.sent_packets = 0
        self.delivered = 0
        self.lost = 0
        self.rate_by_source[self.src] = cfg.rate_initial

        if cfg.policy == "multipath":
            # the router's running total is the scenario's control count
            self.router = OnDemandRouter(self.topo, expiry=cfg.route_expiry)
            self.path_sets: dict[int, PathSet] = {}
            self.break_time: dict[tuple[int, int], int] = {}
            self.all_broken: set[int] = set()
            for dest in self.dests:
                self.router.discover(self.src, dest, now=cfg.bundle_start)
                self.path_sets[dest] = select_disjoint_paths(
                    self.topo, self.src, dest, cfg.k_paths)
        else:
            sink = self.dests[0]
            self.sink = sink
            self.gradients = diffuse_and_reinforce(self.topo, sink, [self.src])
            # interest flood + one exploratory/reinforcement pass per source
            self.control_messages += self.n + 2 * self.gradients.hop_distance[self.src]
            params = RadioParams(tx_elec=cfg.tx_elec, tx_amp=cfg.tx_amp,
                                 rx_elec=cfg.rx_elec)
            initial = {node: cfg.energy_initial for node in self.topo.positions}
            initial.update(dict(cfg.energy_overrides))
            self.energy = EnergyState(initial=initial, params=params)

        self.push(to_ms(cfg.bundle_start), PACKET_SEND, 1)
        self.traces.state_entries = {node: 0 for node in range(self.n)}
        if cfg.policy == "multipath":
            self.traces.state_entries[self.src] = sum(
                len(ps.paths) for ps in self.path_sets.values())

    def apply_moves(self, t_ms: int):
        while self._pending_moves and self._pending_moves[0][0] <= t_ms:
            _, node, x, y = self._pending_moves.pop(0)
            self.topo.move(node, x, y)
            self.traces.move_events.append((to_seconds(t_ms), node, x, y))

    def maintenance(self, t_ms: int):
        if self.config.policy != "multipath":
            return
        for dest in self.dests:
            if dest in self.all_broken:
                continue
            ps = self.path_sets[dest]
            before_broken = set(ps.broken)
            try:
                maintain_routes(self.topo, ps, router=self.router,
                                now=to_seconds(t_ms))
            except AllPathsBroken:
                self.all_broken.add(dest)
            for idx in (set(ps.broken) - before_broken):
                self.break_time[(dest, idx)] = t_ms

    def handle(self, event: Event):
        if event.kind == PACKET_SEND:
            self._send_packet(event.payload, event.time_ms)
        elif event.kind == HOP_COMPLETE:
            self._arrive_packet(event.payload, event.time_ms)

    def _send_packet(self, packet_no: int, t_ms: int):
        cfg = self.config
        if packet_no > self.packets_total:
            return
        self.sent_packets += 1
        self.period_sent[self.src] = self.period_sent.get(self.src, 0) + 1
        if cfg.policy == "multipath":
            self._send_multipath(packet_no, t_ms)
        else:
            self._send_energy(packet_no, t_ms)
        if packet_no < self.packets_total:
            interval_ms = max(1, round(1000.0 / self.rate_by_source[self.src]))
            self.push(t_ms + interval_ms, PACKET_SEND, packet_no + 1)

    def _send_multipath(self, packet_no: int, t_ms: int):
        links_used: set[tuple[int, int]] = set()
        for dest in self.dests:
            if dest in self.all_broken:
                self.lost += 1
                self.period_lost[self.src] = self.period_lost.get(self.src, 0) + 1
                continue
            ps = self.path_sets[dest]
            idx = ps.active_index()
            if idx is None:
                self.lost += 1
                continue
            path = ps.paths[idx]
            for a, b in zip(path, path[1:]):
                links_used.add((a, b))
            arrival = t_ms + to_ms(self.config.hop_latency) * (len(path) - 1)
            self.push(arrival, HOP_COMPLETE, (dest, idx, packet_no, t_ms))
        self.transmissions += len(links_used)

    def _arrive_packet(self, payload, t_ms: int):
        dest, idx, packet_no, sent_ms = payload
        broken_at = self.break_time.get((dest, idx))
        if broken_at is not None and broken_at < t_ms:
            self.lost += 1
            self.period_lost[self.src] = self.period_lost.get(self.src, 0) + 1
            return
        self.delivered += 1
        self.delivered_delays_ms.append(t_ms - sent_ms)

    def _send_energy(self, packet_no: int, t_ms: int):
        cfg = self.config
        policy = power_aware_next_hop if cfg.policy == "power_aware" \
            else min_hop_next_hop
        node = self.src
        now_s = to_seconds(t_ms)
        hops = 0
        while node != self.sink and hops <= self.n:
            try:
                nxt = policy(node, self.sink, self.gradients, self.energy,
                             self.topo.neighbors(node))
            except NoAliveNeighbor:
                self.lost += 1
                self.period_lost[self.src] = self.period_lost.get(self.src, 0) + 1
                return
            self.energy.charge_tx(node, cfg.packet_size,
                                  self.topo.distance(node, nxt), now_s)
            self.energy.charge_rx(nxt, cfg.packet_size, now_s)
            self.transmissions += 1
            node = nxt
            hops += 1
        if node == self.sink:
            self.delivered += 1
            self.delivered_delays_ms.append(0)
        else:
            self.lost += 1

    def collect(self) -> Metrics:
        m = self.base_metrics(self.n)
        if self.config.policy == "multipath":
            m.generated = self.sent_packets * len(self.dests)
            m.control_messages = self.router.control_messages_total
        else:
            m.generated = self.sent_packets
        m.delivered = self.delivered
        m.lost = self.lost
        m.in_flight = m.generated - m.delivered - m.lost
        entries = self.traces.state_entries
        m.state_entries_per_node = max(entries.values()) if entries else 0
        if self.config.policy in ("power_aware", "min_hop"):
            m.lifetime_s = network_lifetime(self.energy)
            self.traces.residual_energy = dict(self.energy.residual)
            self.traces.death_times = dict(self.energy.death_time)
        return self.finish_metrics(m)
