"""Cover tree construction, invariants, bounds, and fault injection."""

import math
from bisect import insort

import numpy as np
import pytest

from covermeans.core import Dataset, DistanceCounter
from covermeans.covertree import (
    CoverTree,
    TreeConfig,
    aggregate,
    build,
    check_invariants,
    child_point_bounds,
    node_point_bounds,
)


def make_data(n, dim, seed, scale=10.0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.uniform(-scale, scale, size=(n, dim)))


# ---------------------------------------------------------------------------
# Reference insertion: a literal per-level walk of the greedy algorithm,
# independent of the package's level-skipping implementation.
# ---------------------------------------------------------------------------

class _RefNode:
    def __init__(self, idx, pdist):
        self.idx = idx
        self.pdist = pdist
        self.children = {}  # level -> [nodes]
        self.dups = []


class _RefBuilder:
    def __init__(self, data, base):
        self.tuples = data.point_tuples
        self.base = base
        self.root = _RefNode(0, 0.0)
        self.root_level = None

    def _clog(self, x):
        level = math.ceil(math.log(x) / math.log(self.base))
        while self.base**level < x:
            level += 1
        while self.base ** (level - 1) >= x:
            level -= 1
        return level

    def insert(self, idx):
        p = self.tuples[idx]
        d0 = math.dist(p, self.tuples[self.root.idx])
        if d0 == 0.0:
            self.root.dups.append(idx)
            return
        if self.root_level is None or d0 > self.base**self.root_level:
            self.root_level = self._clog(d0)
        dup = self._rec(p, idx, [(self.root, d0, self.root_level)], self.root_level)
        assert dup in ("attached", "dup")

    def _rec(self, p, idx, q, ell):
        # q holds (node, dist, own attach level); expand children at ell - 1.
        grown = list(q)
        for node, _, _ in q:
            for ch in node.children.get(ell - 1, ()):
                d = math.dist(p, self.tuples[ch.idx])
                if d == 0.0:
                    ch.dups.append(idx)
                    return "dup"
                grown.append((ch, d, ell - 1))
        dmin = min(d for _, d, _ in grown)
        if dmin > self.base**ell:
            return None
        nxt = [(n, d, a) for n, d, a in grown if d <= self.base**ell]
        res = self._rec(p, idx, nxt, ell - 1)
        if res is not None:
            return res
        picks = [(d, i) for i, (n, d, a) in enumerate(q) if d <= self.base**ell]
        if not picks:
            return None
        d, i = min(picks)
        parent = q[i][0]
        child = _RefNode(idx, d)
        parent.children.setdefault(ell - 1, []).append(child)
        return "attached"


def ref_signature(node):
    levels = sorted(node.children, reverse=True)
    return (
        node.idx,
        tuple(node.dups),
        tuple(
            (lvl, tuple(ref_signature(ch) for ch in node.children[lvl]))
            for lvl in levels
        ),
    )


def flat_signature(builder_node):
    levels = sorted(builder_node.branch_levels, reverse=True)
    return (
        builder_node.idx,
        tuple(builder_node.dups),
        tuple(
            (lvl, tuple(flat_signature(ch) for ch in builder_node.children_by_level[lvl]))
            for lvl in levels
        ),
    )


@pytest.mark.parametrize("seed,n,dim", [(0, 120, 2), (1, 200, 3), (2, 300, 5), (3, 57, 1)])
def test_insertion_matches_reference_walk(seed, n, dim):
    from covermeans.covertree import _Builder

    data = make_data(n, dim, seed)
    cfg = TreeConfig(base=1.3, leaf_threshold=1)
    fast = _Builder(data, cfg)
    for i in range(1, n):
        fast.insert(i)
    ref = _RefBuilder(data, cfg.base)
    for i in range(1, n):
        ref.insert(i)
    assert fast.root_level == ref.root_level
    assert flat_signature(fast.root) == ref_signature(ref.root)


def test_single_point_tree():
    data = Dataset(np.array([[1.5, -2.0]]))
    tree = build(data, TreeConfig())
    assert tree.root.is_leaf
    assert tree.root.radius == 0.0
    assert tree.root.weight == 1
    assert check_invariants(tree) == []


def test_small_dataset_collapses_to_single_leaf():
    data = make_data(50, 3, seed=7)
    tree = build(data, TreeConfig(leaf_threshold=100))
    assert tree.root.is_leaf
    assert tree.root.weight == 50
    dists = np.linalg.norm(data.points - data.points[tree.root.point], axis=1)
    assert tree.root.radius == pytest.approx(dists.max(), rel=1e-12)
    assert check_invariants(tree) == []


@pytest.mark.parametrize(
    "maker,n",
    [
        (lambda n: make_data(n, 2, seed=11), 10_000),
        (lambda n: make_data(n, 6, seed=12, scale=3.0), 4_000),
    ],
)
def test_invariants_on_random_data(maker, n):
    data = maker(n)
    tree = build(data, TreeConfig(base=1.2, leaf_threshold=100))
    assert check_invariants(tree) == []


def test_invariants_with_duplicates():
    rng = np.random.default_rng(21)
    base_pts = rng.normal(size=(300, 3))
    reps = rng.integers(1, 12, size=300)
    pts = np.repeat(base_pts, reps, axis=0)
    data = Dataset(pts)
    tree = build(data, TreeConfig(base=1.2, leaf_threshold=5))
    assert check_invariants(tree) == []
    assert tree.root.weight == data.n


def test_aggregate_root_matches_column_sums():
    data = make_data(3_000, 4, seed=5)
    tree = build(data, TreeConfig(leaf_threshold=20))
    aggregate(tree)
    true = data.points.sum(axis=0)
    assert np.allclose(tree.root.agg_sum, true, rtol=1e-9, atol=1e-9)
    assert tree.root.weight == data.n


def test_two_level_weight_counting():
    pts = np.array([[0.0, 0.0], [10.0, 0.0], [0.1, 0.0]])
    tree = build(Dataset(pts), TreeConfig(leaf_threshold=1))
    assert tree.root.weight == 3
    assert check_invariants(tree) == []


def test_node_point_bounds_arithmetic():
    assert node_point_bounds(10.0, 2.0) == (8.0, 12.0)
    assert node_point_bounds(3.0, 0.0) == (3.0, 3.0)
    assert node_point_bounds(1.0, 5.0)[0] == 0.0


def test_child_point_bounds_arithmetic():
    assert child_point_bounds(10.0, 1.0, 0.5) == (8.5, 11.5)
    # A child sharing the routing object degrades to the plain node bound.
    assert child_point_bounds(7.0, 0.0, 1.5) == node_point_bounds(7.0, 1.5)


def test_bounds_contain_enumerated_extremes():
    rng = np.random.default_rng(33)
    data = make_data(2_000, 4, seed=33)
    tree = build(data, TreeConfig(leaf_threshold=25))
    pts = data.points
    checked = 0
    for _ in range(1200):
        nd = tree.nodes[rng.integers(len(tree.nodes))]
        center = rng.uniform(-12, 12, size=4)
        member_d = np.linalg.norm(pts[tree.members(nd)] - center, axis=1)
        d_pc = float(np.linalg.norm(pts[nd.point] - center))
        lo, hi = node_point_bounds(d_pc, nd.radius)
        assert lo <= member_d.min() + 1e-9
        assert member_d.max() <= hi + 1e-9
        checked += 1
        if not nd.is_leaf:
            ch = nd.children[rng.integers(len(nd.children))]
            lo2, hi2 = child_point_bounds(d_pc, ch.parent_dist, ch.radius)
            child_d = np.linalg.norm(pts[tree.members(ch)] - center, axis=1)
            assert lo2 <= child_d.min() + 1e-9
            assert child_d.max() <= hi2 + 1e-9
    assert checked >= 1000


def test_injected_radius_fault_is_flagged():
    data = make_data(500, 3, seed=9)
    tree = build(data, TreeConfig(leaf_threshold=10))
    victim = max(tree.nodes, key=lambda nd: nd.radius)
    victim.radius *= 0.5
    kinds = {v[0] for v in check_invariants(tree)}
    assert kinds == {"radius"}


def test_injected_separation_fault_is_flagged():
    data = make_data(500, 3, seed=10)
    tree = build(data, TreeConfig(leaf_threshold=10))
    # Force two same-level siblings illegally close by raising their level.
    parent = next(
        nd
        for nd in tree.nodes
        if not nd.is_leaf and len({ch.level for ch in nd.children[1:]}) >= 1
        and len(nd.children) >= 3
    )
    sibs = parent.children[1:3]
    lvl = max(s.level for s in sibs) + 30
    for s in sibs:
        s.level = lvl
    kinds = {v[0] for v in check_invariants(tree)}
    assert "separation" in kinds


def test_build_determinism():
    data = make_data(800, 3, seed=14)
    t1 = build(data, TreeConfig(leaf_threshold=10))
    t2 = build(data, TreeConfig(leaf_threshold=10))
    assert t1.dump_lines() == t2.dump_lines()
    assert np.array_equal(t1.order, t2.order)


def test_levels_strictly_decrease_and_monotone_radii():
    data = make_data(2_000, 3, seed=15)
    tree = build(data, TreeConfig(leaf_threshold=10))
    base = tree.config.base
    for nd in tree.nodes:
        for ch in nd.children:
            assert ch.level < nd.level
            assert ch.radius <= base**nd.level * (1 + 1e-9)


def test_point_conservation():
    data = make_data(5_000, 2, seed=16)
    tree = build(data, TreeConfig(leaf_threshold=50))
    assert np.array_equal(np.sort(tree.order), np.arange(data.n))


def test_build_counts_distances():
    data = make_data(300, 3, seed=17)
    ctr = DistanceCounter()
    tree = build(data, TreeConfig(leaf_threshold=10), ctr)
    assert ctr.count == tree.build_dists > 0
