"""Cover tree index with per-node aggregates for whole-subtree assignment.

The tree is built by greedy insertion in dataset order: each point descends
the existing cover sets level by level until separation forces a new node,
with implicit levels (no structural change) skipped analytically.  A
finalize pass then collapses small subtrees into leaf buckets, materializes
the self-child chains, computes exact subtree radii, and annotates every
node with its coordinate sum and member count.

Level semantics: a node at level ``i`` owns a ball of structural radius
``base**i``; children sit at strictly lower levels within that ball, and
siblings sharing a level are more than ``base**level`` apart.  The *stored*
radius is the exact maximum distance from the routing point to any subtree
member, which is tighter than the structural bound and is what every
pruning rule uses.
"""

from __future__ import annotations

import math
import time
from bisect import bisect_right, insort
from dataclasses import dataclass

import numpy as np

from .core import Dataset, DistanceCounter

__all__ = [
    "TreeConfig",
    "CoverTree",
    "CoverTreeNode",
    "build",
    "aggregate",
    "node_point_bounds",
    "child_point_bounds",
    "check_invariants",
]

_CHECK_SLACK = 1e-9


@dataclass(frozen=True)
class TreeConfig:
    """Scale base of the level hierarchy and the minimum node size."""

    base: float = 1.2
    leaf_threshold: int = 100

    def __post_init__(self) -> None:
        if not self.base > 1.0:
            raise ValueError(f"base must be > 1.0, got {self.base}")
        if self.leaf_threshold < 1:
            raise ValueError(f"leaf_threshold must be >= 1, got {self.leaf_threshold}")


class CoverTreeNode:
    """One ball of the hierarchy.

    Leaf nodes store their member indices together with the distance of each
    member to the routing point (computed at build time, reused by the
    traversal).  Internal nodes carry children; the routing point itself
    reappears as the routing point of exactly one child.
    """

    __slots__ = (
        "point",
        "level",
        "radius",
        "parent_dist",
        "children",
        "leaf_members",
        "leaf_dists",
        "agg_sum",
        "weight",
        "node_id",
        "id_end",
        "start",
        "end",
    )

    def __init__(self, point: int, level: int, parent_dist: float):
        self.point = point
        self.level = level
        self.radius = 0.0
        self.parent_dist = parent_dist
        self.children: list[CoverTreeNode] = []
        self.leaf_members: np.ndarray | None = None
        self.leaf_dists: np.ndarray | None = None
        self.agg_sum: np.ndarray | None = None
        self.weight = 0
        self.node_id = -1
        self.id_end = -1
        self.start = 0
        self.end = 0

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return (
            f"CoverTreeNode(point={self.point}, level={self.level}, "
            f"radius={self.radius:.6g}, weight={self.weight})"
        )


class CoverTree:
    """Finalized, immutable index over one dataset."""

    def __init__(self, root: CoverTreeNode, config: TreeConfig, data: Dataset):
        self.root = root
        self.config = config
        self.data = data
        self.nodes: list[CoverTreeNode] = []
        self.order: np.ndarray = np.empty(0, dtype=np.int64)
        self.build_ns = 0
        self.build_dists = 0

    def members(self, node: CoverTreeNode) -> np.ndarray:
        """Dataset indices of every point in the node's subtree."""
        return self.order[node.start : node.end]

    def dump_lines(self) -> list[str]:
        """One line per node for golden-file style comparisons."""
        lines = []
        for nd in self.nodes:
            lines.append(
                f"level={nd.level} point={nd.point} radius={nd.radius!r} "
                f"weight={nd.weight} parent_dist={nd.parent_dist!r} "
                f"children={len(nd.children)}"
            )
        return lines


# ---------------------------------------------------------------------------
# Construction: greedy insertion over a flat parent/child structure.
# ---------------------------------------------------------------------------

class _FlatNode:
    __slots__ = ("idx", "reg", "pdist", "children_by_level", "branch_levels", "dups")

    def __init__(self, idx: int, reg: int, pdist: float):
        self.idx = idx
        self.reg = reg
        self.pdist = pdist
        self.children_by_level: dict[int, list[_FlatNode]] = {}
        self.branch_levels: list[int] = []  # ascending
        self.dups: list[int] = []


class _Builder:
    def __init__(self, data: Dataset, cfg: TreeConfig):
        self.tuples = data.point_tuples
        self.base = cfg.base
        self._log_base = math.log(cfg.base)
        self._pows: dict[int, float] = {}
        self.registry: list[_FlatNode] = []
        self.root = self._new_node(0, 0.0)
        self.root_level: int | None = None
        self.nd = 0  # distance evaluations

    def _new_node(self, idx: int, pdist: float) -> _FlatNode:
        node = _FlatNode(idx, len(self.registry), pdist)
        self.registry.append(node)
        return node

    def _pow(self, level: int) -> float:
        p = self._pows.get(level)
        if p is None:
            p = self.base**level
            self._pows[level] = p
        return p

    def _ceil_log(self, x: float) -> int:
        """Smallest integer L with base**L >= x, exact at powers of base."""
        level = math.ceil(math.log(x) / self._log_base)
        while self._pow(level) < x:
            level += 1
        while self._pow(level - 1) >= x:
            level -= 1
        return level

    def insert(self, idx: int) -> None:
        tuples = self.tuples
        p = tuples[idx]
        d_root = math.dist(p, tuples[self.root.idx])
        self.nd += 1
        if d_root == 0.0:
            self.root.dups.append(idx)
            return
        if self.root_level is None:
            self.root_level = self._ceil_log(d_root)
        elif d_root > self._pow(self.root_level):
            self.root_level = self._ceil_log(d_root)

        # Discovered candidates: (node, distance, attach level, discovery id).
        entries: list[tuple[_FlatNode, float, int]] = [(self.root, d_root, self.root_level)]
        alive = [0]
        dmin = d_root
        ell = self.root_level

        while True:
            # Highest level < ell at which any live candidate has children.
            c = None
            for ei in alive:
                levels = entries[ei][0].branch_levels
                j = bisect_right(levels, ell - 1) - 1
                if j >= 0 and (c is None or levels[j] > c):
                    c = levels[j]
            att = self._ceil_log(dmin)
            if c is None or att > c + 2:
                # Separation holds down to level att - 1 with no further
                # structure in between; attach without more expansions.
                self._attach(entries, idx, att - 1)
                return
            # Descend to the call that expands children at level c.
            thresh = self._pow(c + 2)
            alive = [ei for ei in alive if entries[ei][1] <= thresh]
            grown = len(entries)
            for ei in list(alive):
                node = entries[ei][0]
                group = node.children_by_level.get(c)
                if not group:
                    continue
                for ch in group:
                    d = math.dist(p, tuples[ch.idx])
                    self.nd += 1
                    if d == 0.0:
                        ch.dups.append(idx)
                        return
                    if d < dmin:
                        dmin = d
                    entries.append((ch, d, c))
            alive.extend(range(grown, len(entries)))
            if dmin > self._pow(c + 1):
                # Even the new children are separated at this granularity.
                self._attach(entries, idx, c + 1)
                return
            ell = c

    def _attach(self, entries, idx: int, level_floor: int) -> None:
        """Attach at the lowest admissible level at or above ``level_floor``.

        A candidate parents a child at level L when its own level is above L
        and its distance fits the cover bound base**(L+1).
        """
        best_key = None
        best_node = None
        best_level = 0
        best_d = 0.0
        for disc, (node, d, a) in enumerate(entries):
            lo = max(level_floor, self._ceil_log(d) - 1)
            if lo > a - 1:
                continue
            key = (lo, d, disc)
            if best_key is None or key < best_key:
                best_key = key
                best_node = node
                best_level = lo
                best_d = d
        child = self._new_node(idx, best_d)
        group = best_node.children_by_level.get(best_level)
        if group is None:
            best_node.children_by_level[best_level] = [child]
            insort(best_node.branch_levels, best_level)
        else:
            group.append(child)

    def flat_weights(self) -> list[int]:
        """Subtree sizes; children register after parents, so scan reversed."""
        w = [0] * len(self.registry)
        for node in reversed(self.registry):
            total = 1 + len(node.dups)
            for group in node.children_by_level.values():
                for ch in group:
                    total += w[ch.reg]
            w[node.reg] = total
        return w


def _flat_members(node: _FlatNode, groups: list[int] | None = None) -> list[int]:
    """All dataset indices under ``node``, restricted to the given top groups."""
    out = [node.idx]
    out.extend(node.dups)
    if groups is None:
        stack = [ch for g in sorted(node.branch_levels, reverse=True)
                 for ch in node.children_by_level[g]]
    else:
        stack = [ch for g in groups for ch in node.children_by_level[g]]
    while stack:
        cur = stack.pop()
        out.append(cur.idx)
        out.extend(cur.dups)
        for g in cur.branch_levels:
            stack.extend(cur.children_by_level[g])
    return out


class _Finalizer:
    def __init__(self, builder: _Builder, data: Dataset, cfg: TreeConfig):
        self.builder = builder
        self.points = data.points
        self.threshold = cfg.leaf_threshold
        self.weights = builder.flat_weights()
        self.nd = 0

    def run(self) -> CoverTreeNode:
        root_level = self.builder.root_level if self.builder.root_level is not None else 0
        return self._materialize(self.builder.root, root_level, 0.0)

    def _materialize(self, f: _FlatNode, level: int, pdist: float) -> CoverTreeNode:
        if self.weights[f.reg] <= self.threshold:
            return self._make_leaf(f, level, pdist, None)
        groups = sorted(f.branch_levels, reverse=True)
        if not groups:
            # Only duplicates below; they can never be separated.
            return self._make_leaf(f, level, pdist, [])
        group_weights = []
        for g in groups:
            group_weights.append(sum(self.weights[ch.reg] for ch in f.children_by_level[g]))
        rem = self.weights[f.reg]
        cut = None
        for t, gw in enumerate(group_weights):
            rem -= gw
            if rem <= self.threshold:
                cut = t
                break
        if cut is None:
            bottom = self._make_leaf(f, groups[-1], 0.0, [])
            top_group = len(groups) - 1
        else:
            bottom = self._make_leaf(f, groups[cut], 0.0, groups[cut + 1 :])
            top_group = cut
        node = bottom
        for t in range(top_group, -1, -1):
            g = groups[t]
            kids = [self._materialize(ch, g, ch.pdist) for ch in f.children_by_level[g]]
            wrapper = CoverTreeNode(
                f.idx,
                level if t == 0 else groups[t - 1],
                pdist if t == 0 else 0.0,
            )
            wrapper.children = [node] + kids
            node = wrapper
        return node

    def _make_leaf(self, f: _FlatNode, level: int, pdist: float,
                   groups: list[int] | None) -> CoverTreeNode:
        leaf = CoverTreeNode(f.idx, level, pdist)
        leaf.leaf_members = np.array(_flat_members(f, groups), dtype=np.int64)
        return leaf


def build(data: Dataset, cfg: TreeConfig | None = None,
          ctr: DistanceCounter | None = None) -> CoverTree:
    """Build, collapse, and annotate the tree for one dataset.

    Distance evaluations performed here are construction cost; they are
    reported on ``tree.build_dists`` (and ``ctr`` when given), separate from
    any clustering run's counter.
    """
    if cfg is None:
        cfg = TreeConfig()
    t0 = time.perf_counter_ns()
    builder = _Builder(data, cfg)
    for idx in range(1, data.n):
        builder.insert(idx)
    fin = _Finalizer(builder, data, cfg)
    root = fin.run()
    tree = CoverTree(root, cfg, data)
    _index_nodes(tree)
    _fill_distances_and_radii(tree, fin)
    aggregate(tree)
    tree.build_dists = builder.nd + fin.nd
    tree.build_ns = time.perf_counter_ns() - t0
    if ctr is not None:
        ctr.add(tree.build_dists)
    return tree


def _index_nodes(tree: CoverTree) -> None:
    """Assign preorder ids and contiguous subtree ranges over a point order."""
    nodes: list[CoverTreeNode] = []
    parts: list[np.ndarray] = []
    pos = 0

    def dfs(nd: CoverTreeNode) -> None:
        nonlocal pos
        nd.node_id = len(nodes)
        nodes.append(nd)
        nd.start = pos
        if nd.is_leaf:
            parts.append(nd.leaf_members)
            pos += len(nd.leaf_members)
        else:
            for ch in nd.children:
                dfs(ch)
        nd.end = pos
        nd.id_end = len(nodes)

    dfs(tree.root)
    tree.nodes = nodes
    tree.order = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)


def _fill_distances_and_radii(tree: CoverTree, fin: _Finalizer) -> None:
    """Exact member distances per self-chain; one batch per routing point."""
    pts = tree.data.points
    order = tree.order

    def handle_chain(top: CoverTreeNode) -> None:
        members = order[top.start : top.end]
        dvec = np.linalg.norm(pts[members] - pts[top.point], axis=1)
        fin.nd += len(members)
        nd = top
        while True:
            sub = dvec[nd.start - top.start : nd.end - top.start]
            nd.radius = float(sub.max()) if len(sub) else 0.0
            if nd.is_leaf:
                nd.leaf_dists = sub.copy()
                return
            for ch in nd.children[1:]:
                handle_chain(ch)
            nd = nd.children[0]  # same routing point, one level down

    handle_chain(tree.root)


def aggregate(tree: CoverTree) -> None:
    """Annotate every node with its subtree coordinate sum and point count."""
    pts = tree.data.points

    def post(nd: CoverTreeNode) -> None:
        if nd.is_leaf:
            nd.agg_sum = pts[nd.leaf_members].sum(axis=0)
            nd.weight = len(nd.leaf_members)
            return
        for ch in nd.children:
            post(ch)
        nd.agg_sum = nd.children[0].agg_sum.copy()
        nd.weight = nd.children[0].weight
        for ch in nd.children[1:]:
            nd.agg_sum += ch.agg_sum
            nd.weight += ch.weight

    post(tree.root)


# ---------------------------------------------------------------------------
# Ball bound helpers
# ---------------------------------------------------------------------------

def node_point_bounds(d_pc: float, r: float) -> tuple[float, float]:
    """Bracket the distance of every node member to a center.

    Given the routing-point-to-center distance and the node radius, every
    member's distance lies within the returned (lower, upper) interval.
    """
    return (max(0.0, d_pc - r), d_pc + r)


def child_point_bounds(d_pc: float, d_pp: float, r_child: float) -> tuple[float, float]:
    """Bracket child-member distances using only parent-side quantities.

    ``d_pc`` is the parent routing point's distance to the center, ``d_pp``
    the stored parent-to-child routing distance.  No distance involving the
    child's routing point is needed.
    """
    slack = d_pp + r_child
    return (max(0.0, d_pc - slack), d_pc + slack)


# ---------------------------------------------------------------------------
# Invariant checking
# ---------------------------------------------------------------------------

def check_invariants(tree: CoverTree) -> list[tuple[str, int, str]]:
    """Scan the whole tree; one (kind, node_id, detail) entry per violation."""
    violations: list[tuple[str, int, str]] = []
    pts = tree.data.points
    base = tree.config.base
    order = tree.order

    for nd in tree.nodes:
        p = pts[nd.point]
        if not nd.is_leaf:
            selfkids = [ch for ch in nd.children if ch.point == nd.point]
            if len(selfkids) != 1:
                violations.append(
                    ("nesting", nd.node_id, f"{len(selfkids)} self children")
                )
            elif selfkids[0].parent_dist != 0.0:
                violations.append(
                    ("nesting", nd.node_id,
                     f"self child parent_dist {selfkids[0].parent_dist!r}")
                )
            cover_r = base**nd.level
            by_level: dict[int, list[CoverTreeNode]] = {}
            for ch in nd.children:
                if ch.level >= nd.level:
                    violations.append(
                        ("levels", ch.node_id, f"child level {ch.level} >= parent {nd.level}")
                    )
                d = float(np.linalg.norm(pts[ch.point] - p))
                if d > cover_r * (1 + _CHECK_SLACK):
                    violations.append(
                        ("cover", ch.node_id, f"child at {d} > base^{nd.level} = {cover_r}")
                    )
                if abs(d - ch.parent_dist) > _CHECK_SLACK * max(1.0, d):
                    violations.append(
                        ("parent_dist", ch.node_id, f"stored {ch.parent_dist} vs true {d}")
                    )
                by_level.setdefault(ch.level, []).append(ch)
            for lvl, sibs in by_level.items():
                sep = base**lvl
                for i in range(len(sibs)):
                    for j in range(i + 1, len(sibs)):
                        d = float(np.linalg.norm(pts[sibs[i].point] - pts[sibs[j].point]))
                        if d <= sep * (1 - _CHECK_SLACK):
                            violations.append(
                                ("separation", sibs[i].node_id,
                                 f"siblings {sibs[i].point},{sibs[j].point} at {d} <= base^{lvl}")
                            )
        member_d = np.linalg.norm(pts[order[nd.start : nd.end]] - p, axis=1)
        if len(member_d):
            worst = float(member_d.max())
            if worst > nd.radius + _CHECK_SLACK * max(1.0, worst):
                violations.append(
                    ("radius", nd.node_id, f"radius {nd.radius} < member at {worst}")
                )
        true_sum = pts[order[nd.start : nd.end]].sum(axis=0)
        scale = np.maximum(1.0, np.abs(true_sum))
        if nd.weight != nd.end - nd.start:
            violations.append(
                ("aggregate", nd.node_id, f"weight {nd.weight} vs {nd.end - nd.start}")
            )
        if np.any(np.abs(nd.agg_sum - true_sum) > 1e-9 * scale):
            violations.append(("aggregate", nd.node_id, "agg_sum mismatch"))

    got = np.sort(tree.order)
    if len(got) != tree.data.n or not np.array_equal(got, np.arange(tree.data.n)):
        violations.append(("conservation", tree.root.node_id, "order is not a permutation"))
    return violations
