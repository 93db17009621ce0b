import itertools

import pytest

from dtnsim.errors import AllPathsBroken, NoRoute, ValidationError
from dtnsim.multipath import (OnDemandRouter, PathSet, Topology, check_disjoint,
                              create_topology, link_topology, maintain_routes,
                              multicast_transmit, select_disjoint_paths)

from conftest import bundle_of


def line_topology(xs, range_m=2.0, capacity=None):
    positions = {i: (x, 0.0) for i, x in enumerate(xs)}
    topo = Topology(positions=positions, links=set(), range_m=range_m,
                    capacity=capacity)
    return topo


def chain_topology(n, spacing=1.0, range_m=1.5):
    topo = line_topology([i * spacing for i in range(n)], range_m=range_m)
    topo.links = {(i, i + 1) for i in range(n - 1)}
    return topo


def grid_topology(side):
    positions = {r * side + c: (float(c), float(r))
                 for r in range(side) for c in range(side)}
    links = set()
    for r in range(side):
        for c in range(side):
            node = r * side + c
            if c + 1 < side:
                links.add((node, node + 1))
            if r + 1 < side:
                links.add((node, node + side))
    return Topology(positions=positions, links=links, range_m=1.5)


class TestCreateTopology:
    def test_collinear_bridge(self):
        # nearest-neighbor pass links {0,1} and {2,3}; bridging adds 1-2
        positions = {0: (0.0, 0.0), 1: (1.0, 0.0), 2: (2.1, 0.0), 3: (3.1, 0.0)}
        topo = link_topology(positions, range_m=2.0, k_neighbors=1)
        assert topo.links == {(0, 1), (2, 3), (1, 2)}
        assert len(topo.components) == 1

    def test_capacity_one_leaves_isolated_node(self):
        positions = {0: (0.0, 0.0), 1: (1.0, 0.0), 2: (2.0, 0.0)}
        topo = link_topology(positions, range_m=2.0, k_neighbors=1, capacity=1)
        assert topo.links == {(0, 1)}
        assert sorted(map(sorted, topo.components)) == [[0, 1], [2]]

    def test_seeded_determinism(self):
        a = create_topology(30, seed=7, range_m=35.0, k_neighbors=3)
        b = create_topology(30, seed=7, range_m=35.0, k_neighbors=3)
        assert a.positions == b.positions
        assert a.links == b.links
        c = create_topology(30, seed=8, range_m=35.0, k_neighbors=3)
        assert c.links != a.links or c.positions != a.positions

    def test_bridging_rule(self):
        topo = create_topology(30, seed=7, range_m=35.0, k_neighbors=2)
        if len(topo.components) > 1:
            # no in-range inter-component pair may remain
            for ca, cb in itertools.combinations(topo.components, 2):
                for a in ca:
                    for b in cb:
                        assert topo.distance(a, b) > topo.range_m or (
                            topo.capacity is not None)
        else:
            assert len(topo.components) == 1

    def test_capacity_limits_degree(self):
        topo = create_topology(10, seed=3, range_m=200.0, k_neighbors=5, capacity=3)
        for node in range(10):
            assert topo.degree(node) <= 3


class TestDiscovery:
    def test_chain_costs_four_messages(self):
        topo = chain_topology(3)
        router = OnDemandRouter(topo)
        result = router.discover(0, 2, now=0.0)
        assert result.path == (0, 1, 2)
        assert result.entry.hop_count == 2
        assert result.control_messages == 4
        assert not result.from_cache

    def test_fresh_entry_costs_zero(self):
        topo = chain_topology(3)
        router = OnDemandRouter(topo, expiry=30.0)
        router.discover(0, 2, now=0.0)
        again = router.discover(0, 2, now=5.0)
        assert again.from_cache
        assert again.control_messages == 0
        assert again.path == (0, 1, 2)

    def test_expired_entry_rediscovers(self):
        topo = chain_topology(3)
        router = OnDemandRouter(topo, expiry=30.0)
        router.discover(0, 2, now=0.0)
        later = router.discover(0, 2, now=31.0)
        assert not later.from_cache
        assert later.control_messages == 4

    def test_two_components_no_route(self):
        topo = line_topology([0.0, 1.0, 10.0, 11.0], range_m=1.5)
        topo.links = {(0, 1), (2, 3)}
        router = OnDemandRouter(topo)
        with pytest.raises(NoRoute):
            router.discover(0, 3, now=0.0)


class TestDisjointPaths:
    def test_diamond(self):
        topo = Topology(positions={0: (0, 0), 1: (1, 1), 2: (1, -1), 3: (2, 0)},
                        links={(0, 1), (0, 2), (1, 3), (2, 3)}, range_m=3.0)
        ps = select_disjoint_paths(topo, 0, 3, k=2)
        assert ps.paths == [(0, 1, 3), (0, 2, 3)]
        assert check_disjoint(ps.paths)

    def test_chain_yields_single_path(self):
        topo = chain_topology(3)
        ps = select_disjoint_paths(topo, 0, 2, k=2)
        assert ps.paths == [(0, 1, 2)]

    def test_grid_matches_exhaustive_disjoint_count(self):
        topo = grid_topology(4)
        ps = select_disjoint_paths(topo, 0, 15, k=3)
        assert check_disjoint(ps.paths)
        assert len(ps.paths) == min(3, _max_disjoint(topo, 0, 15))

    def test_no_route(self):
        topo = line_topology([0.0, 5.0], range_m=1.0)
        with pytest.raises(NoRoute):
            select_disjoint_paths(topo, 0, 1, k=1)


def _max_disjoint(topo, src, dst):
    """Exhaustive oracle: maximum number of interior-disjoint simple paths."""
    all_paths = []

    def dfs(node, visited, path):
        if node == dst:
            all_paths.append(tuple(path))
            return
        for nbr in topo.neighbors(node):
            if nbr not in visited:
                visited.add(nbr)
                path.append(nbr)
                dfs(nbr, visited, path)
                path.pop()
                visited.remove(nbr)

    dfs(src, {src}, [src])

    best = 0

    def pack(start, used, count):
        nonlocal best
        best = max(best, count)
        for i in range(start, len(all_paths)):
            interior = set(all_paths[i][1:-1])
            if interior & used:
                continue
            pack(i + 1, used | interior, count + 1)

    pack(0, set(), 0)
    return best


class TestMaintenance:
    def _diamond(self):
        topo = Topology(positions={0: (0, 0), 1: (1, 1), 2: (1, -1), 3: (2, 0)},
                        links={(0, 1), (0, 2), (1, 3), (2, 3)}, range_m=3.0)
        return topo, select_disjoint_paths(topo, 0, 3, k=2)

    def test_no_movement_keeps_paths(self):
        topo, ps = self._diamond()
        report = maintain_routes(topo, ps)
        assert report.newly_broken == []
        assert report.active_index == 0

    def test_interior_movement_fails_over(self):
        topo, ps = self._diamond()
        report = maintain_routes(topo, ps, positions_now={1: (50.0, 50.0)})
        assert report.newly_broken == [0]
        assert report.active_index == 1
        assert ps.paths[report.active_index] == (0, 2, 3)

    def test_all_paths_broken(self):
        topo, ps = self._diamond()
        with pytest.raises(AllPathsBroken):
            maintain_routes(topo, ps,
                            positions_now={1: (50.0, 50.0), 2: (-50.0, 50.0)})


class TestMulticastTransmit:
    def test_shared_prefix_transmitted_once(self):
        topo = Topology(positions={0: (0, 0), 1: (1, 0), 2: (2, 1), 3: (2, -1)},
                        links={(0, 1), (1, 2), (1, 3)}, range_m=2.0)
        sets = {2: PathSet(paths=[(0, 1, 2)]), 3: PathSet(paths=[(0, 1, 3)])}
        bundle = bundle_of(0, [2, 3], 10 * 1024)
        report = multicast_transmit(topo, sets, bundle, packets=10)
        assert report.link_transmissions[(0, 1)] == 10
        assert report.link_transmissions[(1, 2)] == 10
        assert report.link_transmissions[(1, 3)] == 10
        assert report.delivered == {2: 10, 3: 10}

    def test_failover_loses_packet_in_flight(self):
        topo, ps = TestMaintenance()._diamond()
        bundle = bundle_of(0, [3], 10 * 1024)
        report = multicast_transmit(topo, {3: ps}, bundle, packets=10,
                                    breaks=[(3, 0, 3)])
        assert report.delivered == {3: 9}
        assert report.lost == {3: 1}
        # packets 5..10 went over the second path
        assert report.link_transmissions[(0, 2)] == 6

    def test_stripe_round_robin(self):
        topo, ps = TestMaintenance()._diamond()
        bundle = bundle_of(0, [3], 10 * 1024)
        report = multicast_transmit(topo, {3: ps}, bundle, mode="stripe", packets=10)
        assert report.link_transmissions[(0, 1)] == 5
        assert report.link_transmissions[(0, 2)] == 5
        assert report.delivered == {3: 10}

    def test_single_destination_link_count_equals_packets(self):
        topo = chain_topology(3)
        ps = select_disjoint_paths(topo, 0, 2, k=1)
        bundle = bundle_of(0, [2], 4 * 1024)
        report = multicast_transmit(topo, {2: ps}, bundle, packets=4)
        assert report.link_transmissions == {(0, 1): 4, (1, 2): 4}

    def test_unknown_mode(self):
        topo = chain_topology(3)
        ps = select_disjoint_paths(topo, 0, 2, k=1)
        with pytest.raises(ValidationError):
            multicast_transmit(topo, {2: ps}, bundle_of(0, [2], 10), mode="wat")


class TestPathSetInvariants:
    def test_disjointness_enforced(self):
        with pytest.raises(ValidationError):
            PathSet(paths=[(0, 1, 3), (0, 1, 3)])
        with pytest.raises(ValidationError):
            PathSet(paths=[(0, 1, 3), (0, 2, 4)])
