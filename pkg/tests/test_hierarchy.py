import random

import pytest

from dtnsim.contacts import Bundle
from dtnsim.errors import SameNode, Unreachable
from dtnsim.hierarchy import (ClusterTree, build_dhr_tables, build_hierarchy,
                              dhr_next_hop, highest_differing_level,
                              intra_cluster_plan, per_level_tables,
                              render_cluster_tree)

from conftest import bundle_of, plan_of, random_plan


def uniform_plan(n):
    """Contacts in both directions per pair, identical volume everywhere."""
    specs = []
    for i in range(n):
        for j in range(i + 1, n):
            specs.append((i, j, 0, 10, 1))
            specs.append((j, i, 0, 10, 1))
    return plan_of(*specs)


def triad_plan():
    """9 nodes, three volume-heavy triads, one gateway contact per triad pair
    through node 2 only (single gateway between cluster 0 and cluster 6)."""
    specs = []
    for base in (0, 3, 6):
        for i in (base, base + 1, base + 2):
            for j in (base, base + 1, base + 2):
                if i != j:
                    specs.append((i, j, 0, 10, 1000))
    specs += [(2, 6, 20, 30, 10), (6, 2, 20, 30, 10),
              (0, 3, 20, 30, 10), (3, 0, 20, 30, 10),
              (3, 6, 20, 30, 10), (6, 3, 20, 30, 10)]
    return plan_of(*specs)


class TestBuildHierarchy:
    def test_27_uniform_branching_3(self):
        tree = build_hierarchy(uniform_plan(27), branching=3)
        assert tree.levels == 3
        level1 = tree.clusters_at(1)
        assert all(len(m) == 3 for m in level1.values())
        assert sorted(level1) == [0, 3, 6, 9, 12, 15, 18, 21, 24]
        assert len(tree.clusters_at(3)) == 1
        tree.validate_nesting()

    def test_single_node(self):
        tree = build_hierarchy(plan_of(node_count=1), branching=3)
        assert tree.levels == 1
        assert tree.clusters_at(1) == {0: [0]}

    def test_disconnected_triads_stay_apart(self):
        specs = []
        for base in (0, 3):
            for i in (base, base + 1, base + 2):
                for j in (base, base + 1, base + 2):
                    if i != j:
                        specs.append((i, j, 0, 10, 5))
        tree = build_hierarchy(plan_of(*specs), branching=3)
        assert tree.clusters_at(1) == {0: [0, 1, 2], 3: [3, 4, 5]}

    def test_nesting_invariant_random(self, rng):
        for _ in range(30):
            plan = random_plan(rng, max_nodes=8, max_contacts=12)
            branching = rng.choice([2, 3])
            tree = build_hierarchy(plan, branching)
            tree.validate_nesting()


class TestHighestDifferingLevel:
    def test_same_node_rejected(self):
        tree = build_hierarchy(uniform_plan(27), branching=3)
        with pytest.raises(SameNode):
            highest_differing_level(tree, 5, 5)

    def test_same_level1_cluster(self):
        tree = build_hierarchy(uniform_plan(27), branching=3)
        assert highest_differing_level(tree, 0, 1) == 0

    def test_share_level2_not_level1(self):
        tree = build_hierarchy(uniform_plan(27), branching=3)
        # 0 and 3 are in different triads but the same 9-group
        assert highest_differing_level(tree, 0, 3) == 1
        assert highest_differing_level(tree, 0, 9) == 2


class TestDhrTables:
    def test_single_gateway_contact(self):
        # clusters {0,1} and {2,3}; the only cross contact is 0->2
        plan = plan_of((0, 1, 0, 10, 1000), (1, 0, 0, 10, 1000),
                       (2, 3, 0, 10, 1000), (3, 2, 0, 10, 1000),
                       (0, 2, 50, 60, 10))
        tree = build_hierarchy(plan, branching=2)
        assert tree.clusters_at(1) == {0: [0, 1], 2: [2, 3]}
        tables = build_dhr_tables(tree, per_level_tables(plan, tree))
        assert tables[1].entries[(1, 2)] == 0   # member points at the egress
        assert tables[0].entries[(1, 2)] == 2   # egress points at the remote end
        # no contact back from {2,3}: their sibling entry is unreachable
        assert tables[2].entries[(1, 0)] is None
        assert tables[3].entries[(1, 0)] is None

    def test_fully_connected_siblings_all_present(self):
        tree = build_hierarchy(uniform_plan(9), branching=3)
        tables = build_dhr_tables(tree, per_level_tables(uniform_plan(9), tree))
        for node in range(9):
            own = tree.cluster_of(node, 1)
            for sib in tree.siblings_of(own, 1):
                assert tables[node].entries[(1, sib)] is not None

    def test_state_size_bound(self):
        for n in (9, 27):
            plan = uniform_plan(n)
            tree = build_hierarchy(plan, branching=3)
            tables = build_dhr_tables(tree, per_level_tables(plan, tree))
            for node in range(n):
                assert tables[node].entry_count() <= 3 * tree.levels


class TestDhrNextHop:
    def test_adjacent_same_cluster(self):
        plan = triad_plan()
        tree = build_hierarchy(plan, branching=3)
        tables = build_dhr_tables(tree, per_level_tables(plan, tree))
        b = bundle_of(0, [1], 10)
        assert dhr_next_hop(0, 1, tree, tables, plan, b, t=0.0) == 1

    def test_gateway_chain(self):
        plan = triad_plan()
        tree = build_hierarchy(plan, branching=3)
        assert tree.clusters_at(1) == {0: [0, 1, 2], 3: [3, 4, 5], 6: [6, 7, 8]}
        tables = build_dhr_tables(tree, per_level_tables(plan, tree))
        b = bundle_of(0, [7], 10)
        counters = {}
        trace = [0]
        node, t = 0, 0.0
        while node != 7 and len(trace) < 10:
            node = dhr_next_hop(node, 7, tree, tables, plan, b, t, counters)
            trace.append(node)
            t += 0.5
        assert trace[-1] == 7
        assert 2 in trace and 6 in trace  # forced through the only gateway
        assert counters["phase1"] >= 1 and counters["phase2"] >= 1

    def test_unreachable_marked(self):
        plan = plan_of((0, 1, 0, 10, 1000), (1, 0, 0, 10, 1000),
                       (2, 3, 0, 10, 1000), (3, 2, 0, 10, 1000),
                       (0, 2, 50, 60, 10))
        tree = build_hierarchy(plan, branching=2)
        tables = build_dhr_tables(tree, per_level_tables(plan, tree))
        b = bundle_of(2, [0], 10)
        with pytest.raises(Unreachable):
            dhr_next_hop(2, 0, tree, tables, plan, b, t=0.0)

    def test_phase_dispatch_counts(self):
        plan = triad_plan()
        tree = build_hierarchy(plan, branching=3)
        tables = build_dhr_tables(tree, per_level_tables(plan, tree))
        b = bundle_of(0, [1], 10)
        counters = {}
        dhr_next_hop(0, 1, tree, tables, plan, b, t=0.0, counters=counters)
        assert counters == {"phase2": 1}
        counters = {}
        dhr_next_hop(0, 7, tree, tables, plan, b, t=0.0, counters=counters)
        assert counters == {"phase1": 1}


class TestDumpFormat:
    def test_cluster_lines(self):
        tree = build_hierarchy(uniform_plan(4), branching=2)
        text = render_cluster_tree(tree)
        lines = text.strip().splitlines()
        assert lines[0] == "cluster 1 0 0 1"
        assert lines[1] == "cluster 1 2 2 3"
        assert lines[2] == "cluster 2 0 0 1 2 3"

    def test_intra_cluster_plan_restriction(self):
        plan = triad_plan()
        tree = build_hierarchy(plan, branching=3)
        sub = intra_cluster_plan(plan, tree, 0, 1)
        assert all(c.frm in (0, 1, 2) and c.to in (0, 1, 2) for c in sub.contacts)
