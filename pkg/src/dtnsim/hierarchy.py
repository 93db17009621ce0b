"""Nested cluster hierarchy and two-phase hierarchical forwarding.

The hierarchy is built bottom-up by agglomerating the most strongly
connected clusters (total pairwise contact volume) into groups of
``branching``. Cluster ids are the smallest member node id, which makes
construction deterministic under ties and dumps stable.

Forwarding is hop-by-hop in two phases: while the destination differs at
some cluster level l >= 1, consult the level-l table toward the
destination's cluster; once node and destination share the lowest cluster,
route exactly within it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import cic
from .contacts import Bundle, ContactPlan, to_ms
from .errors import NoRoute, SameNode, Unreachable, ValidationError
from .esp import greedy_next_hop

# nominal bundle used when ranking cluster routes during table construction
PROBE_SIZE = 1


@dataclass(frozen=True)
class ClusterTree:
    """membership[level][node] -> cluster id, for levels 0..levels.

    Level 0 clusters are singletons (id == node id); the top level is a
    single cluster.
    """

    levels: int
    branching: int
    membership: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.levels < 1:
            raise ValidationError("tree needs at least one level")
        if len(self.membership) != self.levels + 1:
            raise ValidationError("membership must cover levels 0..levels")

    @property
    def node_count(self) -> int:
        return len(self.membership[0])

    def cluster_of(self, node: int, level: int) -> int:
        return self.membership[level][node]

    def clusters_at(self, level: int) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for node, cid in enumerate(self.membership[level]):
            out.setdefault(cid, []).append(node)
        return out

    def members_of(self, cluster_id: int, level: int) -> list[int]:
        return [n for n, cid in enumerate(self.membership[level]) if cid == cluster_id]

    def siblings_of(self, cluster_id: int, level: int) -> list[int]:
        """Other clusters at `level` sharing this cluster's parent."""
        if level >= self.levels:
            return []
        members = self.members_of(cluster_id, level)
        parent = self.membership[level + 1][members[0]]
        out = sorted({cid for n, cid in enumerate(self.membership[level])
                      if cid != cluster_id and self.membership[level + 1][n] == parent})
        return out

    def validate_nesting(self) -> None:
        for node in range(self.node_count):
            if self.membership[0][node] != node:
                raise ValidationError("level-0 clusters must be singletons")
        for level in range(self.levels):
            parent_of: dict[int, int] = {}
            for node in range(self.node_count):
                cid = self.membership[level][node]
                parent = self.membership[level + 1][node]
                if cid in parent_of and parent_of[cid] != parent:
                    raise ValidationError(
                        f"cluster {cid} at level {level} splits across parents")
                parent_of[cid] = parent
        if len(set(self.membership[self.levels])) != 1:
            raise ValidationError("top level must be a single cluster")


def pairwise_volumes(plan: ContactPlan) -> dict[tuple[int, int], float]:
    """Undirected total contact volume per node pair."""
    volumes: dict[tuple[int, int], float] = {}
    for c in plan.contacts:
        key = (min(c.frm, c.to), max(c.frm, c.to))
        volumes[key] = volumes.get(key, 0.0) + c.volume
    return volumes


def build_hierarchy(plan: ContactPlan, branching: int) -> ClusterTree:
    """Agglomerate nodes bottom-up on contact volume into a `branching`-ary
    nesting with ceil(log_branching(n)) levels (min 1)."""
    if branching < 2:
        raise ValidationError(f"branching must be >= 2, got {branching}")
    n = plan.node_count
    if n < 1:
        raise ValidationError("plan has no nodes")
    levels = 1
    while branching ** levels < n:
        levels += 1
    volumes = pairwise_volumes(plan)

    membership: list[tuple[int, ...]] = [tuple(range(n))]
    # clusters: cluster id -> member set, id = smallest member
    clusters: dict[int, set[int]] = {i: {i} for i in range(n)}
    for _ in range(levels):
        clusters = _agglomerate(clusters, volumes, branching)
        level_map = [0] * n
        for cid, members in clusters.items():
            for node in members:
                level_map[node] = cid
        membership.append(tuple(level_map))
    return ClusterTree(levels=levels, branching=branching,
                       membership=tuple(membership))


def _cluster_volume(a: set[int], b: set[int],
                    volumes: dict[tuple[int, int], float]) -> float:
    total = 0.0
    for u in a:
        for v in b:
            key = (u, v) if u < v else (v, u)
            total += volumes.get(key, 0.0)
    return total


def _agglomerate(clusters: dict[int, set[int]],
                 volumes: dict[tuple[int, int], float],
                 branching: int) -> dict[int, set[int]]:
    """One level of grouping: repeatedly seed a group with the strongest
    remaining pair, then grow it to `branching` child clusters by strongest
    attachment. Strict > comparisons over sorted ids break ties toward the
    smallest member id."""
    remaining = {cid: set(members) for cid, members in clusters.items()}
    groups: list[set[int]] = []
    while remaining:
        if len(remaining) == 1:
            _, members = remaining.popitem()
            groups.append(members)
            break
        ids = sorted(remaining)
        best_pair = None
        best_vol = -1.0
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                vol = _cluster_volume(remaining[a], remaining[b], volumes)
                if vol > best_vol:
                    best_vol, best_pair = vol, (a, b)
        a, b = best_pair
        group = remaining.pop(a) | remaining.pop(b)
        children = 2
        while children < branching and remaining:
            best_id, best_vol = None, -1.0
            for cid in sorted(remaining):
                vol = _cluster_volume(group, remaining[cid], volumes)
                if vol > best_vol:
                    best_vol, best_id = vol, cid
            group |= remaining.pop(best_id)
            children += 1
        groups.append(group)
    return {min(g): g for g in groups}


def highest_differing_level(tree: ClusterTree, a: int, b: int) -> int:
    """Largest level at which a and b sit in different clusters."""
    if a == b:
        raise SameNode(f"node {a} compared with itself")
    for level in range(tree.levels, -1, -1):
        if tree.cluster_of(a, level) != tree.cluster_of(b, level):
            return level
    raise SameNode(f"nodes {a} and {b} share every cluster")  # pragma: no cover


@dataclass
class DhrTable:
    """Per-level next hops toward sibling clusters, for one owner node.

    entries[(level, target_cluster)] is the next node to hand the bundle
    to, or None when the target was unreachable at table-build time.
    """

    owner: int
    entries: dict[tuple[int, int], Optional[int]] = field(default_factory=dict)

    def next_hop_entry(self, level: int, target_cluster: int) -> Optional[int]:
        if (level, target_cluster) not in self.entries:
            raise Unreachable(
                f"node {self.owner} has no level-{level} entry for cluster {target_cluster}")
        return self.entries[(level, target_cluster)]

    def entry_count(self) -> int:
        return len(self.entries)


def per_level_tables(plan: ContactPlan, tree: ClusterTree,
                     window: Optional[float] = None) -> dict[int, cic.CompressedContactTable]:
    """Compressed tables for levels 0..L: node-level time aggregation at
    level 0, space aggregation above."""
    if window is None:
        window = max(plan.horizon_ms / 1000.0, 1.0)
    tables = {0: cic.compress_time(plan, window)}
    for level in range(1, tree.levels + 1):
        tables[level] = cic.compress_space(plan, tree, level)
    return tables


def build_dhr_tables(tree: ClusterTree,
                     tables: dict[int, cic.CompressedContactTable]) -> dict[int, DhrTable]:
    """Resolve, for every node and every sibling cluster at every level, the
    concrete member node the bundle should head for.

    The cluster-level route comes from the compressed table at that level;
    its first hop is mapped down to the member with the earliest outgoing
    node-level aggregated contact toward the gateway cluster. That member is
    the entry for everyone else in the cluster; for the member itself the
    entry is the remote endpoint of that earliest contact.
    """
    for level in range(1, tree.levels + 1):
        if level not in tables:
            raise ValidationError(f"missing compressed table for level {level}")
    if 0 not in tables:
        raise ValidationError("missing node-level table (level 0)")
    node_entries = tables[0].entries
    probe = Bundle(id=-1, source=0, destinations=frozenset({-1}), size=PROBE_SIZE)

    out: dict[int, DhrTable] = {n: DhrTable(owner=n) for n in range(tree.node_count)}
    for level in range(1, tree.levels + 1):
        table = tables[level]
        for cid, members in sorted(tree.clusters_at(level).items()):
            member_set = set(members)
            for target in tree.siblings_of(cid, level):
                gateway_cluster = _first_gateway(table, probe, cid, target)
                entry_for: dict[int, Optional[int]] = {}
                if gateway_cluster is None:
                    for node in members:
                        entry_for[node] = None
                else:
                    remote_members = set(tree.members_of(gateway_cluster, level))
                    egress = _earliest_egress(node_entries, member_set, remote_members)
                    if egress is None:
                        for node in members:
                            entry_for[node] = None
                    else:
                        m, v = egress
                        for node in members:
                            entry_for[node] = v if node == m else m
                for node in members:
                    out[node].entries[(level, target)] = entry_for[node]
    return out


def _first_gateway(table: cic.CompressedContactTable, probe: Bundle,
                   src_cluster: int, dst_cluster: int) -> Optional[int]:
    try:
        estimate = cic.esp_on_compressed(table, probe, dst_cluster, t0=0.0,
                                         source=src_cluster)
    except NoRoute:
        return None
    hop = estimate.next_hop()
    return dst_cluster if hop is None else hop


def _earliest_egress(node_entries, members: set[int],
                     remote_members: set[int]) -> Optional[tuple[int, int]]:
    best = None
    for e in node_entries:
        if e.frm in members and e.to in remote_members:
            key = (e.window_start_ms, e.frm, e.to)
            if best is None or key < best:
                best = key
    if best is None:
        return None
    return best[1], best[2]


def intra_cluster_plan(plan: ContactPlan, tree: ClusterTree, node: int,
                       level: int) -> ContactPlan:
    """Plan restricted to contacts inside `node`'s level-`level` cluster."""
    members = set(tree.members_of(tree.cluster_of(node, level), level))
    contacts = tuple(c for c in plan.contacts if c.frm in members and c.to in members)
    return ContactPlan(contacts=contacts, period_ms=None, node_count=plan.node_count)


def dhr_next_hop(node: int, dest: int, tree: ClusterTree,
                 tables: dict[int, DhrTable], plan: ContactPlan,
                 bundle: Bundle, t: float,
                 counters: Optional[dict] = None) -> int:
    """Next physical hop for a bundle at `node` heading to `dest`.

    Phase 1 (differing level l >= 1): look up the level-l entry toward the
    destination's cluster; when the entry is a member of our own cluster we
    still have to reach it, so the immediate hop is the first hop of the
    exact route toward that member inside the level-l cluster. Phase 2
    (same lowest cluster): first hop of the exact intra-cluster route.
    """
    if node == dest:
        raise SameNode(f"bundle already at {dest}")
    level = highest_differing_level(tree, node, dest)
    if counters is not None:
        counters["phase1" if level >= 1 else "phase2"] = \
            counters.get("phase1" if level >= 1 else "phase2", 0) + 1
    if level == 0:
        return _intra_next_hop(plan, tree, node, dest, 1, bundle, t)
    target_cluster = tree.cluster_of(dest, level)
    entry = tables[node].next_hop_entry(level, target_cluster)
    if entry is None:
        raise Unreachable(
            f"cluster {target_cluster} marked unreachable from node {node} at level {level}")
    if tree.cluster_of(entry, level) == tree.cluster_of(node, level):
        # entry is our cluster's egress member; walk toward it inside the cluster
        return _intra_next_hop(plan, tree, node, entry, level, bundle, t)
    return entry


def _intra_next_hop(plan: ContactPlan, tree: ClusterTree, node: int,
                    target: int, level: int, bundle: Bundle, t: float) -> int:
    sub = intra_cluster_plan(plan, tree, node, level)
    deadline = min(bundle.expiry_ms, sub.horizon_ms)
    found = greedy_next_hop(sub, bundle.size, node, target,
                            t_ms=to_ms(t), deadline_ms=deadline)
    if found is None:
        raise Unreachable(f"no intra-cluster route {node}->{target} at t={t}")
    return found[0]


def render_cluster_tree(tree: ClusterTree) -> str:
    """`cluster <level> <cluster_id> <member...>` lines for levels 1..L."""
    lines = []
    for level in range(1, tree.levels + 1):
        for cid, members in sorted(tree.clusters_at(level).items()):
            lines.append(f"cluster {level} {cid} " + " ".join(map(str, members)))
    return "\n".join(lines) + "\n"
