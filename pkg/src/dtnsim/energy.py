"""Per-node energy accounting, gradient setup and power-aware forwarding.

First-order radio cost model: transmitting `size` bytes over distance d
costs tx_elec*size + tx_amp*size*d^2 joules, receiving costs rx_elec*size.
The defaults are the common first-order constants and every parameter is
overridable. Network lifetime is the time of first node death.

Gradients are established sink-first: the sink's interest floods outward
(duplicate suppressed, lowest-delay parent wins, ties to the lower node
id); nodes on a path that delivered exploratory data back to the sink pin
their upstream parent as the reinforced neighbor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import NoAliveNeighbor, NoGradient, ValidationError
from .multipath import Topology

TX_ELEC_J_PER_BYTE = 5e-8
TX_AMP_J_PER_BYTE_M2 = 1e-10
RX_ELEC_J_PER_BYTE = 5e-8

LIFETIME_UNBOUNDED = math.inf


@dataclass
class RadioParams:
    tx_elec: float = TX_ELEC_J_PER_BYTE
    tx_amp: float = TX_AMP_J_PER_BYTE_M2
    rx_elec: float = RX_ELEC_J_PER_BYTE


def transmit_energy(size: int, distance: float, params: RadioParams = RadioParams()) -> float:
    """Sender-side joules for one transmission."""
    if size <= 0:
        raise ValidationError(f"size must be positive, got {size}")
    if distance < 0:
        raise ValidationError(f"distance must be non-negative, got {distance}")
    return params.tx_elec * size + params.tx_amp * size * distance * distance


def receive_energy(size: int, params: RadioParams = RadioParams()) -> float:
    return params.rx_elec * size


@dataclass
class EnergyState:
    """Residual joules per node; nodes at zero are dead."""

    initial: dict[int, float]
    params: RadioParams = field(default_factory=RadioParams)
    residual: dict[int, float] = field(default_factory=dict)
    charged: dict[int, float] = field(default_factory=dict)
    death_time: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.residual:
            self.residual = dict(self.initial)
        self.charged = {n: self.charged.get(n, 0.0) for n in self.initial}

    @classmethod
    def uniform(cls, nodes: Iterable[int], joules: float,
                params: Optional[RadioParams] = None) -> "EnergyState":
        return cls(initial={n: joules for n in nodes},
                   params=params or RadioParams())

    def alive(self, node: int) -> bool:
        return self.residual[node] > 0.0

    def charge(self, node: int, joules: float, now: float) -> None:
        if joules < 0:
            raise ValidationError("cannot charge negative energy")
        self.charged[node] += joules
        self.residual[node] = self.residual[node] - joules
        if self.residual[node] <= 0.0:
            self.residual[node] = 0.0
            self.death_time.setdefault(node, now)

    def charge_tx(self, node: int, size: int, distance: float, now: float) -> None:
        self.charge(node, transmit_energy(size, distance, self.params), now)

    def charge_rx(self, node: int, size: int, now: float) -> None:
        self.charge(node, receive_energy(size, self.params), now)

    def first_death(self) -> float:
        return min(self.death_time.values(), default=LIFETIME_UNBOUNDED)


@dataclass
class GradientTable:
    """Interest flood results for one sink."""

    sink: int
    hop_distance: dict[int, int]
    parent: dict[int, int]               # neighbor the interest arrived from first
    reinforced: dict[int, int] = field(default_factory=dict)
    expiry: float = math.inf

    def on_gradient(self, node: int) -> bool:
        return node in self.hop_distance

    def reinforced_neighbor(self, node: int) -> Optional[int]:
        return self.reinforced.get(node)


def diffuse_and_reinforce(topo: Topology, sink: int, sources: Iterable[int],
                          now: float = 0.0) -> GradientTable:
    """Flood the sink's interest, then reinforce one lowest-delay path per
    source (exploratory data returning along the reverse pointers)."""
    if sink not in topo.positions:
        raise ValidationError(f"sink {sink} not in topology")
    hop = {sink: 0}
    parent = {sink: sink}
    frontier = [sink]
    while frontier:
        nxt = []
        for node in sorted(frontier):
            for nbr in topo.neighbors(node):
                if nbr not in hop:
                    hop[nbr] = hop[node] + 1
                    parent[nbr] = node
                    nxt.append(nbr)
        frontier = nxt
    table = GradientTable(sink=sink, hop_distance=hop, parent=parent)
    for source in sorted(set(sources)):
        if source not in hop:
            raise NoGradient(f"source {source} unreachable from sink {sink}")
        node = source
        while node != sink:
            table.reinforced[node] = parent[node]
            node = parent[node]
    return table


def power_aware_next_hop(node: int, sink: int, gradients: GradientTable,
                         energy: EnergyState,
                         alternatives: Iterable[int]) -> int:
    """Pick the gradient-holding alive neighbor with the most residual
    energy; ties prefer the reinforced neighbor, then the lower id."""
    if not energy.alive(node):
        raise NoAliveNeighbor(f"node {node} is dead")
    reinforced = gradients.reinforced_neighbor(node)
    best = None
    for nbr in sorted(alternatives):
        if not energy.alive(nbr):
            continue
        if not gradients.on_gradient(nbr):
            continue
        if gradients.hop_distance[nbr] >= gradients.hop_distance.get(node, math.inf) \
                and nbr != sink:
            continue
        key = (energy.residual[nbr], 1 if nbr == reinforced else 0, -nbr)
        if best is None or key > best[0]:
            best = (key, nbr)
    if best is None:
        raise NoAliveNeighbor(f"no alive on-gradient neighbor of {node} toward {sink}")
    return best[1]


def min_hop_next_hop(node: int, sink: int, gradients: GradientTable,
                     energy: EnergyState, alternatives: Iterable[int]) -> int:
    """Baseline: smallest hop distance to the sink, ties to the lower id."""
    if not energy.alive(node):
        raise NoAliveNeighbor(f"node {node} is dead")
    best = None
    for nbr in sorted(alternatives):
        if not energy.alive(nbr) or not gradients.on_gradient(nbr):
            continue
        if gradients.hop_distance[nbr] >= gradients.hop_distance.get(node, math.inf) \
                and nbr != sink:
            continue
        key = (gradients.hop_distance[nbr], nbr)
        if best is None or key < best[0]:
            best = (key, nbr)
    if best is None:
        raise NoAliveNeighbor(f"no alive on-gradient neighbor of {node} toward {sink}")
    return best[1]


def network_lifetime(energy: EnergyState) -> float:
    """Simulated time of the first node death; +inf when none died."""
    return energy.first_death()
