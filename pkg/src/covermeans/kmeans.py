"""Shared k-means machinery: initialization, Lloyd iteration, run driver.

The driver structures every run the same way: iteration 1 assigns against
the initial centers, and each later iteration first moves the centers using
the previous assignment (updating any stored bounds for the movement) and
then assigns.  With that framing the first iteration of a stored-bounds
algorithm costs exactly n*k counted distances, and center-movement /
center-to-center evaluations are charged to the iteration that consumes
them.  A run stops at the first assignment that changes no label.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Dataset,
    DistanceCounter,
    matrix_distances_counted,
    movement_distances_counted,
    pairwise_distances_counted,
    row_distances_counted,
)
from .covertree import CoverTree, TreeConfig, build as build_tree
from .metrics import IterationMetrics, RunMetrics

__all__ = [
    "ALGORITHMS",
    "Assignment",
    "ClusterState",
    "RunConfig",
    "RunResult",
    "kmeanspp_init",
    "lloyd_assign",
    "update_means",
    "run",
    "sse_of",
]

ALGORITHMS = ("standard", "hamerly", "elkan", "cover", "hybrid")


@dataclass
class Assignment:
    labels: np.ndarray
    changed: int


class ClusterState:
    """Centers plus the per-iteration byproducts the accelerators need.

    The center-to-center matrix and the per-center movement are computed
    lazily and counted when first requested, so algorithms that never look
    at them never pay for them.
    """

    def __init__(self, centers: np.ndarray):
        centers = np.array(centers, dtype=np.float64)
        self.k, self.dim = centers.shape
        self.centers = centers
        self.prev_centers = centers.copy()
        self.sums = np.zeros_like(centers)
        self.counts = np.zeros(self.k, dtype=np.int64)
        self._cc: np.ndarray | None = None
        self._moved: np.ndarray | None = None

    def apply_sums(self, sums: np.ndarray, counts: np.ndarray) -> None:
        """Move centers to the accumulated means; empty clusters stay put."""
        self.sums = sums
        self.counts = counts
        self.prev_centers = self.centers
        new = self.prev_centers.copy()
        nonzero = counts > 0
        new[nonzero] = sums[nonzero] / counts[nonzero, None]
        self.centers = new
        self._cc = None
        self._moved = None

    def get_cc(self, ctr: DistanceCounter) -> np.ndarray:
        if self._cc is None:
            self._cc = pairwise_distances_counted(self.centers, ctr)
        return self._cc

    def get_moved(self, ctr: DistanceCounter) -> np.ndarray:
        if self._moved is None:
            self._moved = movement_distances_counted(self.prev_centers, self.centers, ctr)
        return self._moved

    def movement_extremes(self, ctr: DistanceCounter) -> tuple[int, float, float]:
        """(argmax, max, second max) of center movement; second is 0 for k=1."""
        moved = self.get_moved(ctr)
        if self.k == 1:
            return 0, float(moved[0]), 0.0
        top = int(np.argmax(moved))
        rest = np.delete(moved, top)
        return top, float(moved[top]), float(rest.max())


def kmeanspp_init(
    data: Dataset, k: int, rng_seed: int, ctr: DistanceCounter
) -> np.ndarray:
    """D^2-proportional seeding: k distinct dataset rows, deterministic per seed."""
    n = data.n
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(rng_seed)
    chosen = [int(rng.integers(n))]
    d2: np.ndarray | None = None
    for _ in range(k - 1):
        nd = row_distances_counted(data.points, data.points[chosen[-1]], ctr) ** 2
        d2 = nd if d2 is None else np.minimum(d2, nd)
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            # All remaining mass is zero (duplicate-only leftovers);
            # fall back to a uniform pick among unchosen indices.
            remaining = np.setdiff1d(np.arange(n), np.array(chosen))
            nxt = int(rng.choice(remaining))
        chosen.append(nxt)
    return data.points[chosen].copy()


def lloyd_assign(
    data: Dataset,
    state: ClusterState,
    ctr: DistanceCounter,
    prev_labels: np.ndarray | None = None,
) -> Assignment:
    """Full nearest-center assignment; ties go to the lowest center index."""
    d = matrix_distances_counted(data.points, state.centers, ctr)
    labels = d.argmin(axis=1)
    changed = data.n if prev_labels is None else int((labels != prev_labels).sum())
    return Assignment(labels, changed)


def label_sums(points: np.ndarray, labels: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    counts = np.bincount(labels, minlength=k)
    sums = np.empty((k, points.shape[1]))
    for dim in range(points.shape[1]):
        sums[:, dim] = np.bincount(labels, weights=points[:, dim], minlength=k)
    return sums, counts


def update_means(data: Dataset, labels: np.ndarray, state: ClusterState) -> None:
    """Recompute cluster means from a complete assignment."""
    sums, counts = label_sums(data.points, labels, state.k)
    state.apply_sums(sums, counts)


def sse_of(points: np.ndarray, labels: np.ndarray, centers: np.ndarray) -> float:
    """Sum of squared assigned distances.  Reporting only: not counted."""
    diff = points - centers[labels]
    return float(np.einsum("ij,ij->", diff, diff))


# ---------------------------------------------------------------------------
# Run driver
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    max_iter: int = 1000
    tol: float = 0.0
    tree_config: TreeConfig = field(default_factory=TreeConfig)
    switch_iter: int = 7
    tree: CoverTree | None = None  # prebuilt index to reuse across runs


@dataclass
class RunResult:
    labels: np.ndarray
    centers: np.ndarray
    sse: float
    metrics: RunMetrics
    init_dists: int


class StandardRunner:
    """Plain Lloyd iteration: every point against every center."""

    def __init__(self, data: Dataset, state: ClusterState, ctr: DistanceCounter):
        self.data = data
        self.state = state
        self.ctr = ctr
        self.labels: np.ndarray | None = None

    def update_means(self) -> None:
        update_means(self.data, self.labels, self.state)

    def after_update(self) -> None:
        pass

    def assign(self, iteration: int) -> int:
        result = lloyd_assign(self.data, self.state, self.ctr, self.labels)
        self.labels = result.labels
        return result.changed


def _make_runner(algorithm: str, data: Dataset, state: ClusterState,
                 ctr: DistanceCounter, cfg: RunConfig):
    from .bounds import ElkanRunner, HamerlyRunner
    from .hybrid import HybridRunner
    from .tree_kmeans import CoverMeansRunner

    if algorithm == "standard":
        return StandardRunner(data, state, ctr)
    if algorithm == "hamerly":
        return HamerlyRunner(data, state, ctr)
    if algorithm == "elkan":
        return ElkanRunner(data, state, ctr)
    if algorithm == "cover":
        return CoverMeansRunner(data, state, ctr, cfg.tree)
    if algorithm == "hybrid":
        return HybridRunner(data, state, ctr, cfg.tree, cfg.switch_iter)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def run(
    algorithm: str,
    data: Dataset,
    k: int,
    seed: int,
    cfg: RunConfig | None = None,
    ctr: DistanceCounter | None = None,
    iteration_callback=None,
    trace: list | None = None,
    state_callback=None,
) -> RunResult:
    """Execute one clustering run to convergence or ``max_iter``.

    ``iteration_callback(t, centers, labels)`` fires after each assignment
    with the centers that assignment used.  ``state_callback(t, runner)``
    fires at the same point and may inspect runner internals (test hook).
    ``trace``, when given, collects pruning decisions of tree traversals.
    """
    if cfg is None:
        cfg = RunConfig()
    if ctr is None:
        ctr = DistanceCounter()
    init_ctr = DistanceCounter()
    centers = kmeanspp_init(data, k, seed, init_ctr)
    state = ClusterState(centers)

    tree_ns = tree_dists = None
    if algorithm in ("cover", "hybrid"):
        if cfg.tree is None:
            cfg = RunConfig(cfg.max_iter, cfg.tol, cfg.tree_config, cfg.switch_iter,
                            build_tree(data, cfg.tree_config))
        tree_ns = cfg.tree.build_ns
        tree_dists = cfg.tree.build_dists

    runner = _make_runner(algorithm, data, state, ctr, cfg)
    if trace is not None and hasattr(runner, "set_trace"):
        runner.set_trace(trace)

    per_iter: list[IterationMetrics] = []
    converged = False
    iterations = 0
    for t in range(1, cfg.max_iter + 1):
        t0 = time.perf_counter_ns()
        c0 = ctr.count
        if t > 1:
            runner.update_means()
            if cfg.tol > 0.0 and float(state.get_moved(ctr).max()) <= cfg.tol:
                per_iter.append(IterationMetrics(ctr.count - c0, time.perf_counter_ns() - t0))
                iterations = t
                converged = True
                break
            runner.after_update()
        changed = runner.assign(t)
        per_iter.append(IterationMetrics(ctr.count - c0, time.perf_counter_ns() - t0))
        iterations = t
        if iteration_callback is not None:
            iteration_callback(t, state.centers.copy(), runner.labels.copy())
        if state_callback is not None:
            state_callback(t, runner)
        if changed == 0:
            converged = True
            break

    labels = runner.labels
    sse = sse_of(data.points, labels, state.centers)
    metrics = RunMetrics(
        algorithm=algorithm,
        seed=seed,
        k=k,
        iterations=iterations,
        converged=converged,
        sse=sse,
        per_iter=per_iter,
        tree_build_ns=tree_ns,
        tree_build_dists=tree_dists,
    )
    return RunResult(labels, state.centers.copy(), sse, metrics, init_ctr.count)
