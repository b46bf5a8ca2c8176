"""Brute-force oracles and invariant checkers.

Everything here recomputes distances directly from coordinates, with no
pruning and no code shared with the accelerated assignment paths.  The
checkers are used by the property-test suite to validate bounds, pruning
decisions, and label equivalence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "OracleResult",
    "brute_force_assign",
    "verify_bounds",
    "verify_prune_soundness",
]

# Relative slack for floating-point comparisons in all checkers.  Bound
# arithmetic chains several additions, so exact equality is unattainable.
SLACK = 1e-9

_CHUNK = 4096


def _chunk_distances(block: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # Deliberately plain: differences, squares, sum, sqrt.
    diff = block[:, None, :] - centers[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


@dataclass
class OracleResult:
    """Exact nearest/second-nearest assignment computed by enumeration."""

    labels: np.ndarray
    nearest_dist: np.ndarray
    second_dist: np.ndarray
    second_id: np.ndarray


def brute_force_assign(points: np.ndarray, centers: np.ndarray) -> OracleResult:
    """Exact argmin assignment with ties broken by lowest center index.

    ``second_dist`` is the minimum distance over all centers other than the
    assigned one; with a single center it is +inf and ``second_id`` is -1.
    """
    points = np.asarray(points, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    n = points.shape[0]
    k = centers.shape[0]
    labels = np.empty(n, dtype=np.int64)
    nearest = np.empty(n)
    second = np.full(n, np.inf)
    second_id = np.full(n, -1, dtype=np.int64)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        d = _chunk_distances(points[start:stop], centers)
        lab = d.argmin(axis=1)
        rows = np.arange(stop - start)
        labels[start:stop] = lab
        nearest[start:stop] = d[rows, lab]
        if k > 1:
            d2 = d.copy()
            d2[rows, lab] = np.inf
            sid = d2.argmin(axis=1)
            second_id[start:stop] = sid
            second[start:stop] = d2[rows, sid]
    return OracleResult(labels, nearest, second, second_id)


def verify_bounds(
    points: np.ndarray,
    centers: np.ndarray,
    labels: np.ndarray,
    upper: np.ndarray,
    lower: np.ndarray,
) -> list[tuple[int, str, float, float]]:
    """Check stored bounds against true distances.

    ``lower`` may be one bound per point (must under-estimate the minimum
    distance to every non-assigned center) or an (n, k) matrix of per-center
    bounds.  Returns one ``(point, kind, bound, truth)`` tuple per violation;
    an empty list means the bounds are valid.
    """
    points = np.asarray(points, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    labels = np.asarray(labels)
    n = points.shape[0]
    k = centers.shape[0]
    per_center = np.ndim(lower) == 2
    violations: list[tuple[int, str, float, float]] = []
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        d = _chunk_distances(points[start:stop], centers)
        rows = np.arange(stop - start)
        lab = labels[start:stop]
        assigned = d[rows, lab]
        tol = SLACK * np.maximum(1.0, assigned)
        bad_u = np.nonzero(upper[start:stop] < assigned - tol)[0]
        for i in bad_u:
            violations.append(
                (start + int(i), "upper", float(upper[start + i]), float(assigned[i]))
            )
        if per_center:
            tol_m = SLACK * np.maximum(1.0, d)
            bad = np.argwhere(lower[start:stop] > d + tol_m)
            for i, j in bad:
                violations.append(
                    (
                        start + int(i),
                        f"lower[{j}]",
                        float(lower[start + i, j]),
                        float(d[i, j]),
                    )
                )
        elif k > 1:
            masked = d.copy()
            masked[rows, lab] = np.inf
            other = masked.min(axis=1)
            tol_o = SLACK * np.maximum(1.0, other)
            bad_l = np.nonzero(lower[start:stop] > other + tol_o)[0]
            for i in bad_l:
                violations.append(
                    (start + int(i), "lower", float(lower[start + i]), float(other[i]))
                )
    return violations


def verify_prune_soundness(
    tree,
    centers: np.ndarray,
    trace,
) -> list[tuple[str, int, int, int, int]]:
    """Replay a pruning trace against enumerated subtree members.

    Each trace entry claims that, for every point the entry covers, the
    pruned center is at least as far as the center that justified the prune.
    Entries scoped to a single point (leaf handling) carry that point's
    index; node-scoped entries cover the node's whole subtree.  Returns one
    ``(rule, node_id, pruned, pruner, point)`` tuple per violated entry.
    """
    centers = np.asarray(centers, dtype=np.float64)
    pts = tree.data.points
    order = tree.order
    violations = []
    for entry in trace:
        rule, node_id, pruned, pruner, point_idx = entry
        node = tree.nodes[node_id]
        if point_idx >= 0:
            members = pts[point_idx : point_idx + 1]
        else:
            members = pts[order[node.start : node.end]]
        dp = np.linalg.norm(members - centers[pruned], axis=1)
        dk = np.linalg.norm(members - centers[pruner], axis=1)
        tol = SLACK * np.maximum(1.0, dk)
        if (dp < dk - tol).any():
            violations.append(entry)
    return violations
