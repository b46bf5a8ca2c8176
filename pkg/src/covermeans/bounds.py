"""Triangle-inequality baseline accelerators: Hamerly and Elkan.

Both keep a per-point upper bound on the distance to the assigned center
and lower bound(s) on the distances to the others, maintained across center
movement so that most points are re-assigned without any distance work.
Labels produced each iteration are identical to a full nearest-center scan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, DistanceCounter, matrix_distances_counted
from .kmeans import Assignment, ClusterState, update_means

__all__ = [
    "HamerlyBounds",
    "ElkanBounds",
    "phillips_skip",
    "hamerly_iterate",
    "update_hamerly_bounds",
    "elkan_iterate",
    "update_elkan_bounds",
    "HamerlyRunner",
    "ElkanRunner",
]


def phillips_skip(cc_dist_ij: float, d_si: float) -> bool:
    """True when the center-separation filter rules out center j.

    If centers i and j are at least twice as far apart as the point is from
    center i, then j cannot be strictly closer than i.
    """
    return cc_dist_ij >= 2.0 * d_si


@dataclass
class HamerlyBounds:
    """One upper and one lower bound per point."""

    labels: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    initialized: bool = False

    @classmethod
    def empty(cls, n: int) -> "HamerlyBounds":
        return cls(
            labels=np.full(n, -1, dtype=np.int64),
            upper=np.full(n, np.inf),
            lower=np.zeros(n),
        )


@dataclass
class ElkanBounds:
    """One upper bound per point, one lower bound per point and center."""

    labels: np.ndarray
    upper: np.ndarray
    lower: np.ndarray  # shape (n, k)
    initialized: bool = False

    @classmethod
    def empty(cls, n: int, k: int) -> "ElkanBounds":
        return cls(
            labels=np.full(n, -1, dtype=np.int64),
            upper=np.full(n, np.inf),
            lower=np.zeros((n, k)),
        )


def _full_scan(data: Dataset, state: ClusterState, ctr: DistanceCounter):
    d = matrix_distances_counted(data.points, state.centers, ctr)
    labels = d.argmin(axis=1)
    best = d[np.arange(data.n), labels]
    if state.k > 1:
        second = np.partition(d, 1, axis=1)[:, 1]
    else:
        second = np.full(data.n, np.inf)
    return d, labels, best, second


def hamerly_iterate(
    data: Dataset, state: ClusterState, bounds: HamerlyBounds, ctr: DistanceCounter
) -> Assignment:
    """One assignment pass over valid Hamerly bounds.

    Points with upper <= lower keep their label for free.  The rest first
    tighten the upper bound (one distance) and retest; only on failure are
    the remaining k-1 center distances evaluated.
    """
    X = data.points
    C = state.centers
    k = state.k
    if not bounds.initialized:
        _, labels, best, second = _full_scan(data, state, ctr)
        bounds.labels = labels
        bounds.upper = best
        bounds.lower = second
        bounds.initialized = True
        return Assignment(labels, data.n)

    old = bounds.labels.copy()
    loose = np.nonzero(bounds.upper > bounds.lower)[0]
    if len(loose):
        tight = np.linalg.norm(X[loose] - C[old[loose]], axis=1)
        ctr.count += len(loose)
        bounds.upper[loose] = tight
        rows = loose[tight > bounds.lower[loose]]
        m = len(rows)
        if m:
            lab_rows = old[rows]
            d = np.empty((m, k))
            for j in range(k):
                sel = np.nonzero(lab_rows != j)[0]
                if len(sel):
                    d[sel, j] = np.linalg.norm(X[rows[sel]] - C[j], axis=1)
                    ctr.count += len(sel)
            d[np.arange(m), lab_rows] = bounds.upper[rows]  # reuse, not recompute
            new_lab = d.argmin(axis=1)
            bounds.labels[rows] = new_lab
            bounds.upper[rows] = d[np.arange(m), new_lab]
            if k > 1:
                bounds.lower[rows] = np.partition(d, 1, axis=1)[:, 1]
    changed = int((bounds.labels != old).sum())
    return Assignment(bounds.labels, changed)


def update_hamerly_bounds(
    bounds: HamerlyBounds, state: ClusterState, ctr: DistanceCounter
) -> None:
    """Correct bounds for center movement after a mean update.

    The upper bound grows by the assigned center's movement.  The lower
    bound shrinks by the largest movement of any other center: the global
    maximum, except for points assigned to the maximal mover, which use the
    second-largest.
    """
    moved = state.get_moved(ctr)
    top, _, second = state.movement_extremes(ctr)
    bounds.upper += moved[bounds.labels]
    dec = np.where(bounds.labels == top, second, moved[top])
    bounds.lower = np.maximum(bounds.lower - dec, 0.0)


def elkan_iterate(
    data: Dataset, state: ClusterState, bounds: ElkanBounds, ctr: DistanceCounter
) -> Assignment:
    """One assignment pass over valid per-center bounds.

    A center j is evaluated for point s only when the upper bound exceeds
    lower[s, j] and the center-separation filter does not already exclude j.
    Every evaluated distance refreshes its bound exactly.
    """
    X = data.points
    C = state.centers
    n = data.n
    k = state.k
    if not bounds.initialized:
        d, labels, best, _ = _full_scan(data, state, ctr)
        bounds.labels = labels
        bounds.upper = best
        bounds.lower = d
        bounds.initialized = True
        return Assignment(labels, n)

    old = bounds.labels.copy()
    cc = state.get_cc(ctr)
    u = bounds.upper
    mask = (u[:, None] > bounds.lower) & (cc[old] < 2.0 * u[:, None])
    mask[np.arange(n), old] = False
    rows = np.nonzero(mask.any(axis=1))[0]
    if len(rows):
        lab_rows = old[rows]
        tight = np.linalg.norm(X[rows] - C[lab_rows], axis=1)
        ctr.count += len(rows)
        u[rows] = tight
        bounds.lower[rows, lab_rows] = tight
        sub = (tight[:, None] > bounds.lower[rows]) & (cc[lab_rows] < 2.0 * tight[:, None])
        m = len(rows)
        sub[np.arange(m), lab_rows] = False
        v = np.full((m, k), np.inf)
        for j in range(k):
            sel = np.nonzero(sub[:, j])[0]
            if len(sel):
                dj = np.linalg.norm(X[rows[sel]] - C[j], axis=1)
                ctr.count += len(sel)
                bounds.lower[rows[sel], j] = dj
                v[sel, j] = dj
        v[np.arange(m), lab_rows] = tight
        new_lab = v.argmin(axis=1)
        bounds.labels[rows] = new_lab
        u[rows] = v[np.arange(m), new_lab]
    changed = int((bounds.labels != old).sum())
    return Assignment(bounds.labels, changed)


def update_elkan_bounds(
    bounds: ElkanBounds, state: ClusterState, ctr: DistanceCounter
) -> None:
    """Per-center movement correction: each lower-bound column shrinks by
    its own center's movement."""
    moved = state.get_moved(ctr)
    bounds.upper += moved[bounds.labels]
    bounds.lower = np.maximum(bounds.lower - moved[None, :], 0.0)


# ---------------------------------------------------------------------------
# Run-driver adapters
# ---------------------------------------------------------------------------

class HamerlyRunner:
    def __init__(self, data: Dataset, state: ClusterState, ctr: DistanceCounter,
                 bounds: HamerlyBounds | None = None):
        self.data = data
        self.state = state
        self.ctr = ctr
        self.bounds = bounds if bounds is not None else HamerlyBounds.empty(data.n)

    @property
    def labels(self) -> np.ndarray:
        return self.bounds.labels

    def update_means(self) -> None:
        update_means(self.data, self.bounds.labels, self.state)

    def after_update(self) -> None:
        update_hamerly_bounds(self.bounds, self.state, self.ctr)

    def assign(self, iteration: int) -> int:
        return hamerly_iterate(self.data, self.state, self.bounds, self.ctr).changed


class ElkanRunner:
    def __init__(self, data: Dataset, state: ClusterState, ctr: DistanceCounter):
        self.data = data
        self.state = state
        self.ctr = ctr
        self.bounds = ElkanBounds.empty(data.n, state.k)

    @property
    def labels(self) -> np.ndarray:
        return self.bounds.labels

    def update_means(self) -> None:
        update_means(self.data, self.bounds.labels, self.state)

    def after_update(self) -> None:
        update_elkan_bounds(self.bounds, self.state, self.ctr)

    def assign(self, iteration: int) -> int:
        return elkan_iterate(self.data, self.state, self.bounds, self.ctr).changed
