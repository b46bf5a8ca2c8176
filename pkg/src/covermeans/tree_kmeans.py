"""Whole-node k-means assignment over a cover tree.

Each iteration walks the tree depth-first, carrying the set of cluster
centers still viable for the current subtree.  Candidates are discarded by
three sound rules: the center-separation filter seeded by every computed
routing distance, the ball filter comparing against the nearest candidate,
and the child handoff that reuses parent-side distances.  A subtree whose
candidate set proves a single winner is assigned wholesale through its
stored aggregate; otherwise leaf points are resolved individually with
their stored routing distances as extra pruning.

The produced labels equal a full nearest-center scan on the same centers.

For bound export (used by the hybrid), every prune also yields a numeric
floor: a lower bound on the pruned center's distance to any point of the
affected subtree.  The minimum floor along the path, combined with the
second-smallest distance computed at the assigning node, gives valid
per-point lower bounds at zero extra distance cost.
"""

from __future__ import annotations

import numpy as np

from .core import Dataset, DistanceCounter
from .covertree import CoverTree, CoverTreeNode
from .kmeans import ClusterState

__all__ = [
    "separation_prune",
    "node_filter",
    "try_assign",
    "child_filter_and_assign",
    "CoverMeansRunner",
]

CACHE_INVALID = -2
CACHE_MIXED = -1


def _separation_keep(cand_ids: np.ndarray, center_id: int, d_pc: float,
                     r_x: float, cc: np.ndarray) -> np.ndarray:
    """Keep mask: false where the separation rule excludes a candidate.

    A candidate j is excluded when cc[i, j] >= 2*d(p, c_i) + 2*r: every
    member of the ball is then at least as close to c_i as to c_j.
    """
    return (cc[center_id, cand_ids] < 2.0 * d_pc + 2.0 * r_x) | (cand_ids == center_id)


def separation_prune(cand_ids: np.ndarray, center_id: int, d_pc: float,
                     r_x: float, cc: np.ndarray) -> np.ndarray:
    """Candidates surviving the separation rule for one computed distance."""
    return cand_ids[_separation_keep(cand_ids, center_id, d_pc, r_x, cc)]


def _nearest_two(cand_ids: np.ndarray, dists: np.ndarray):
    """Positions of the nearest and second-nearest candidates (lowest id on
    ties; ids are kept ascending so argmin's first hit is the tie winner)."""
    pos1 = int(np.argmin(dists))
    if len(dists) == 1:
        return pos1, -1
    masked = dists.copy()
    masked[pos1] = np.inf
    return pos1, int(np.argmin(masked))


def node_filter(cand_ids: np.ndarray, dists: np.ndarray, r_x: float):
    """Drop candidates that cannot be nearest for any ball member.

    Excludes i when d(p, c_1) + r <= d(p, c_i) - r.  The nearest candidate
    is always retained.  Returns (kept_ids, kept_dists, dropped_positions).
    """
    pos1 = int(np.argmin(dists))
    keep = dists[pos1] + r_x > dists - r_x
    keep[pos1] = True
    dropped = np.nonzero(~keep)[0]
    return cand_ids[keep], dists[keep], dropped


def try_assign(cand_ids: np.ndarray, dists: np.ndarray, r_x: float) -> int | None:
    """Whole-node winner, or None if two candidates remain plausible.

    With the nearest candidate c_1 and second c_2, the node belongs to c_1
    when d(p, c_1) + r <= d(p, c_2) - r; equality only counts when c_1 has
    the lower index, so degenerate geometry still matches the global tie
    rule.  A single surviving candidate is assigned outright.
    """
    if len(cand_ids) == 1:
        return int(cand_ids[0])
    pos1, pos2 = _nearest_two(cand_ids, dists)
    lhs = dists[pos1] + r_x
    rhs = dists[pos2] - r_x
    if lhs < rhs or (lhs == rhs and cand_ids[pos1] < cand_ids[pos2]):
        return int(cand_ids[pos1])
    return None


def child_filter_and_assign(
    cand_ids: np.ndarray,
    dists: np.ndarray,
    d_pp: float,
    r_y: float,
    d_pyc1: float | None = None,
):
    """Hand a child ball off using only parent-side distances.

    First tries to assign the child to the parent's nearest candidate with
    zero new evaluations.  If that fails and ``d_pyc1`` (the child routing
    point's distance to that candidate) is provided, retries with the
    tightened left side and finally reduces the child's candidate set.

    Returns ``(status, c1, keep_positions)`` where status is "assign",
    "need_dist", or "descend"; keep_positions indexes into ``cand_ids``.
    """
    pos1, pos2 = _nearest_two(cand_ids, dists)
    c1 = int(cand_ids[pos1])
    if pos2 < 0:
        return ("assign", c1, None)
    c2 = int(cand_ids[pos2])
    rhs = dists[pos2] - d_pp - r_y
    lhs = dists[pos1] + d_pp + r_y
    if lhs < rhs or (lhs == rhs and c1 < c2):
        return ("assign", c1, None)
    if d_pyc1 is None:
        return ("need_dist", c1, None)
    lhs2 = d_pyc1 + r_y
    if lhs2 < rhs or (lhs2 == rhs and c1 < c2):
        return ("assign", c1, None)
    keep = lhs2 > dists - d_pp - r_y
    keep[pos1] = True
    return ("descend", c1, np.nonzero(keep)[0])


class CoverMeansRunner:
    """Per-run traversal state for tree-accelerated assignment."""

    def __init__(self, data: Dataset, state: ClusterState, ctr: DistanceCounter,
                 tree: CoverTree):
        self.data = data
        self.state = state
        self.ctr = ctr
        self.tree = tree
        n = data.n
        self.labels = np.full(n, -1, dtype=np.int64)
        self.node_cache = np.full(len(tree.nodes), CACHE_INVALID, dtype=np.int64)
        self.pending: tuple[np.ndarray, np.ndarray] | None = None
        self.trace: list | None = None
        self.capture = False
        self.exp_upper = np.empty(0)
        self.exp_lower = np.empty(0)
        self.exp_second = np.empty(0, dtype=np.int64)
        # Set per assignment pass:
        self._cc = None
        self._centers = None
        self._sums = None
        self._counts = None
        self._changed = 0

    def set_trace(self, trace: list) -> None:
        self.trace = trace

    def enable_capture(self) -> None:
        """Record per-point bounds during the next assignment pass."""
        self.capture = True
        n = self.data.n
        self.exp_upper = np.full(n, np.inf)
        self.exp_lower = np.zeros(n)
        self.exp_second = np.full(n, -1, dtype=np.int64)

    # -- driver protocol ----------------------------------------------------

    def update_means(self) -> None:
        sums, counts = self.pending
        self.state.apply_sums(sums, counts)

    def after_update(self) -> None:
        pass

    def assign(self, iteration: int) -> int:
        state = self.state
        self._cc = state.get_cc(self.ctr)
        self._centers = state.centers
        self._sums = np.zeros_like(state.centers)
        self._counts = np.zeros(state.k, dtype=np.int64)
        self._changed = 0
        cand = np.arange(state.k)
        unknown = np.full(state.k, np.nan)
        self._visit(self.tree.root, cand, unknown, np.zeros(state.k), np.inf, -1)
        self.pending = (self._sums, self._counts)
        changed = self._changed
        self.capture = False
        return changed

    # -- traversal ----------------------------------------------------------

    def _visit(self, node: CoverTreeNode, cand_ids: np.ndarray,
               known: np.ndarray, order_keys: np.ndarray,
               floor: float, floor_id: int) -> None:
        cc = self._cc
        centers = self._centers
        p = self.data.points[node.point]
        r = node.radius
        dists = known.copy()
        alive = np.ones(len(cand_ids), dtype=bool)

        def apply_sep(pos: int) -> None:
            nonlocal floor, floor_id
            keep = _separation_keep(cand_ids, int(cand_ids[pos]), float(dists[pos]), r, cc)
            dead = np.nonzero(alive & ~keep)[0]
            if len(dead):
                # Every excluded j satisfies d(q, c_j) >= cc[i, j] - d(q, c_i)
                # >= cc[i, j] - (d_i + r) for all members q.
                vals = cc[int(cand_ids[pos]), cand_ids[dead]] - (float(dists[pos]) + r)
                vpos = int(vals.argmin())
                if vals[vpos] < floor:
                    floor = float(vals[vpos])
                    floor_id = int(cand_ids[dead[vpos]])
                if self.trace is not None:
                    for dpos in dead:
                        self.trace.append(
                            ("separation", node.node_id, int(cand_ids[dpos]),
                             int(cand_ids[pos]), -1)
                        )
            np.logical_and(alive, keep, out=alive)

        known_pos = np.nonzero(~np.isnan(dists))[0]
        for pos in known_pos[np.argsort(dists[known_pos], kind="stable")]:
            if alive[pos]:
                apply_sep(int(pos))
        unknown_pos = np.nonzero(np.isnan(dists))[0]
        for pos in unknown_pos[np.argsort(order_keys[unknown_pos], kind="stable")]:
            if not alive[pos]:
                continue
            dists[pos] = np.linalg.norm(p - centers[cand_ids[pos]])
            self.ctr.count += 1
            apply_sep(int(pos))

        cand_ids = cand_ids[alive]
        dists = dists[alive]

        kept_ids, kept_dists, dropped = node_filter(cand_ids, dists, r)
        if len(dropped):
            pos1 = int(np.argmin(dists))
            # Excluded i satisfies d(q, c_i) >= d(p, c_i) - r for all q.
            vals = dists[dropped] - r
            vpos = int(vals.argmin())
            if vals[vpos] < floor:
                floor = float(vals[vpos])
                floor_id = int(cand_ids[dropped[vpos]])
            if self.trace is not None:
                for dpos in dropped:
                    self.trace.append(
                        ("ball", node.node_id, int(cand_ids[dpos]), int(cand_ids[pos1]), -1)
                    )

        winner = try_assign(kept_ids, kept_dists, r)
        if winner is not None:
            self._assign_whole(node, winner, cand_ids, dists, floor, floor_id)
            return
        if node.is_leaf:
            self._leaf_points(node, kept_ids, kept_dists, floor, floor_id)
            return
        self.node_cache[node.node_id] = CACHE_MIXED
        for child in node.children:
            if child.point == node.point:
                # Self child: every routing distance carries over unchanged.
                self._visit(child, kept_ids, kept_dists.copy(), kept_dists,
                            floor, floor_id)
                continue
            status, c1, keep = child_filter_and_assign(
                kept_ids, kept_dists, child.parent_dist, child.radius
            )
            if status == "assign":
                self._assign_child(child, c1, kept_ids, kept_dists,
                                   None, floor, floor_id)
                continue
            d_pyc1 = float(np.linalg.norm(self.data.points[child.point] - centers[c1]))
            self.ctr.count += 1
            status, c1, keep = child_filter_and_assign(
                kept_ids, kept_dists, child.parent_dist, child.radius, d_pyc1
            )
            if status == "assign":
                self._assign_child(child, c1, kept_ids, kept_dists,
                                   d_pyc1, floor, floor_id)
                continue
            keepmask = np.zeros(len(kept_ids), dtype=bool)
            keepmask[keep] = True
            cut = np.nonzero(~keepmask)[0]
            child_floor, child_floor_id = floor, floor_id
            if len(cut):
                # Excluded i: d(q, c_i) >= d(p_x, c_i) - d_pp - r_y inside y.
                vals = kept_dists[cut] - child.parent_dist - child.radius
                vpos = int(vals.argmin())
                if vals[vpos] < child_floor:
                    child_floor = float(vals[vpos])
                    child_floor_id = int(kept_ids[cut[vpos]])
                if self.trace is not None:
                    for dpos in cut:
                        self.trace.append(
                            ("child", child.node_id, int(kept_ids[dpos]), c1, -1)
                        )
            child_ids = kept_ids[keep]
            child_known = np.full(len(child_ids), np.nan)
            child_known[np.searchsorted(child_ids, c1)] = d_pyc1
            self._visit(child, child_ids, child_known, kept_dists[keep],
                        child_floor, child_floor_id)

    # -- assignment bookkeeping ----------------------------------------------

    def _record_whole(self, node: CoverTreeNode, label: int) -> None:
        self._sums[label] += node.agg_sum
        self._counts[label] += node.weight
        cache = self.node_cache
        if cache[node.node_id] != label:
            seg = self.tree.order[node.start : node.end]
            self._changed += int((self.labels[seg] != label).sum())
            self.labels[seg] = label
            cache[node.node_id + 1 : node.id_end] = CACHE_INVALID
            cache[node.node_id] = label

    def _assign_whole(self, node: CoverTreeNode, label: int,
                      computed_ids: np.ndarray, computed_dists: np.ndarray,
                      floor: float, floor_id: int) -> None:
        self._record_whole(node, label)
        if self.capture:
            pos = int(np.searchsorted(computed_ids, label))
            d1 = float(computed_dists[pos])
            l_anch, second = self._second_known(computed_ids, computed_dists, label)
            self._export_subtree(node, d1, l_anch, d1 + node.radius, second,
                                 floor, floor_id)

    def _assign_child(self, child: CoverTreeNode, label: int,
                      kept_ids, kept_dists, d_pyc1: float | None,
                      floor: float, floor_id: int) -> None:
        self._record_whole(child, label)
        if self.capture:
            d_pp = child.parent_dist
            pos = int(np.searchsorted(kept_ids, label))
            if d_pyc1 is not None:
                u_base = d_pyc1
            else:
                u_base = float(kept_dists[pos]) + d_pp
            l_anch, second = self._second_known(kept_ids, kept_dists, label)
            self._export_subtree(child, u_base, l_anch - d_pp,
                                 u_base + child.radius, second, floor, floor_id)

    def _second_known(self, ids: np.ndarray, dists: np.ndarray, label: int):
        """Second-smallest computed routing distance and its center id; +inf
        when nothing besides the winner was computed."""
        others = ids != label
        if not others.any():
            return np.inf, -1
        pos = int(np.argmin(np.where(others, dists, np.inf)))
        return float(dists[pos]), int(ids[pos])

    def _export_subtree(self, anchor: CoverTreeNode, u_base: float,
                        l_anch: float, u_max: float, second: int,
                        floor: float, floor_id: int) -> None:
        """Fill bounds for every point under a wholesale assignment.

        Upper bounds and the computed-second lower bound tighten with depth
        via accumulated routing-chain distances; the path floor covers every
        candidate that was pruned before its distance was computed.
        """

        def rec(nd: CoverTreeNode, acc: float, u_inh: float, l_inh: float) -> None:
            if nd.is_leaf:
                idxs = nd.leaf_members
                chain = acc + nd.leaf_dists
                self.exp_upper[idxs] = np.minimum(u_inh, u_base + chain)
                anch = np.maximum(l_inh, l_anch - chain)
                use_floor = floor < anch
                self.exp_lower[idxs] = np.maximum(np.where(use_floor, floor, anch), 0.0)
                self.exp_second[idxs] = np.where(use_floor, floor_id, second)
                return
            u_here = min(u_inh, u_base + acc + nd.radius)
            l_here = max(l_inh, l_anch - acc - nd.radius)
            for ch in nd.children:
                rec(ch, acc + ch.parent_dist, u_here, l_here)

        rec(anchor, 0.0, u_max, l_anch - anchor.radius)

    # -- leaf resolution -----------------------------------------------------

    def _leaf_points(self, node: CoverTreeNode, cand_ids: np.ndarray,
                     dists: np.ndarray, floor: float, floor_id: int) -> None:
        """Assign leaf members one by one, pruning with stored routing
        distances before evaluating real point-to-center distances."""
        self.node_cache[node.node_id] = CACHE_MIXED
        idxs = node.leaf_members
        dq = node.leaf_dists
        pts = self.data.points[idxs]
        centers = self._centers
        m = len(idxs)
        pos1 = int(np.argmin(dists))
        c1 = int(cand_ids[pos1])
        final = np.full(m, c1, dtype=np.int64)

        capture = self.capture
        if len(cand_ids) == 1:
            if capture:
                self.exp_upper[idxs] = dists[pos1] + dq
                self.exp_lower[idxs] = max(floor, 0.0) if np.isfinite(floor) else np.inf
                self.exp_second[idxs] = floor_id
            self._finish_leaf(node, idxs, pts, final)
            return

        d1 = float(dists[pos1])
        masked = dists.copy()
        masked[pos1] = np.inf
        pos2 = int(np.argmin(masked))
        c2 = int(cand_ids[pos2])
        d2 = float(masked[pos2])

        def put_bounds(sel_idx, u_vals, anch_vals):
            use_floor = floor < anch_vals
            self.exp_upper[sel_idx] = u_vals
            self.exp_lower[sel_idx] = np.maximum(np.where(use_floor, floor, anch_vals), 0.0)
            self.exp_second[sel_idx] = np.where(use_floor, floor_id, c2)

        lhs = d1 + dq
        rhs = d2 - dq
        settled = (lhs < rhs) | ((lhs == rhs) & (c1 < c2))
        if capture:
            sel = np.nonzero(settled)[0]
            put_bounds(idxs[sel], lhs[sel], rhs[sel])

        rem = np.nonzero(~settled)[0]
        if len(rem):
            dc1 = np.linalg.norm(pts[rem] - centers[c1], axis=1)
            self.ctr.count += len(rem)
            rhs_rem = d2 - dq[rem]
            near = (dc1 < rhs_rem) | ((dc1 == rhs_rem) & (c1 < c2))
            if capture:
                sel = rem[near]
                put_bounds(idxs[sel], dc1[near], rhs_rem[near])

            open_rows = np.nonzero(~near)[0]
            if len(open_rows):
                rows = rem[open_rows]
                dc1_o = dc1[open_rows]
                nc = len(cand_ids)
                v = np.full((len(rows), nc), np.inf)
                v[:, pos1] = dc1_o
                row_floor = np.full(len(rows), floor)
                row_floor_id = np.full(len(rows), floor_id, dtype=np.int64)
                for posi in range(nc):
                    if posi == pos1:
                        continue
                    ci = int(cand_ids[posi])
                    # Per-point exclusion: c_i is out when even the exact
                    # nearest distance cannot undercut its routing bound.
                    limit = dists[posi] - dq[rows]
                    evaluate = dc1_o > limit
                    cut = np.nonzero(~evaluate)[0]
                    if len(cut):
                        better = limit[cut] < row_floor[cut]
                        row_floor[cut[better]] = limit[cut[better]]
                        row_floor_id[cut[better]] = ci
                        if self.trace is not None:
                            for row in cut:
                                self.trace.append(
                                    ("point", node.node_id, ci, c1, int(idxs[rows[row]]))
                                )
                    sel = np.nonzero(evaluate)[0]
                    if len(sel):
                        dji = np.linalg.norm(pts[rows[sel]] - centers[ci], axis=1)
                        self.ctr.count += len(sel)
                        v[sel, posi] = dji
                best_pos = v.argmin(axis=1)
                rowsel = np.arange(len(rows))
                final[rows] = cand_ids[best_pos]
                if capture:
                    masked_v = v.copy()
                    masked_v[rowsel, best_pos] = np.inf
                    sec_pos = masked_v.argmin(axis=1)
                    sec_val = masked_v[rowsel, sec_pos]
                    use_floor = row_floor < sec_val
                    lo = np.where(use_floor, row_floor, sec_val)
                    sec_id = np.where(use_floor, row_floor_id, cand_ids[sec_pos])
                    self.exp_upper[idxs[rows]] = v[rowsel, best_pos]
                    self.exp_lower[idxs[rows]] = np.maximum(lo, 0.0)
                    self.exp_second[idxs[rows]] = sec_id
        self._finish_leaf(node, idxs, pts, final)

    def _finish_leaf(self, node: CoverTreeNode, idxs: np.ndarray,
                     pts: np.ndarray, final: np.ndarray) -> None:
        np.add.at(self._sums, final, pts)
        self._counts += np.bincount(final, minlength=self.state.k)
        self._changed += int((self.labels[idxs] != final).sum())
        self.labels[idxs] = final
