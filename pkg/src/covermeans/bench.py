"""Benchmark harness: single runs, seed-by-k sweeps, and ratio reports.

A sweep builds the cover tree once per dataset and reuses it across every
tree-backed run, so the construction cost is amortized and reported
identically on each record.  Reports express each algorithm's cumulative
distance count and wall time relative to the standard algorithm's on the
same seed and k, averaged over seeds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import Dataset
from .covertree import CoverTree, TreeConfig, build as build_tree
from .kmeans import ALGORITHMS, RunConfig, run
from .metrics import RunMetrics

__all__ = ["make_blobs", "parse_synth", "run_single", "run_sweep", "report"]

_TREE_ALGOS = ("cover", "hybrid")


def make_blobs(n: int, dim: int, k_true: int, spread: float, seed: int) -> Dataset:
    """Gaussian blobs around uniformly placed centers in [-50, 50]^dim."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-50.0, 50.0, size=(k_true, dim))
    assign = rng.integers(0, k_true, size=n)
    pts = centers[assign] + rng.normal(0.0, spread, size=(n, dim))
    return Dataset(pts)


def parse_synth(spec: str) -> Dataset:
    """Parse a generator spec of the form ``blobs:N,d,k_true,spread,seed``."""
    kind, _, rest = spec.partition(":")
    if kind != "blobs":
        raise ValueError(f"unknown synthetic generator {kind!r}")
    parts = rest.split(",")
    if len(parts) != 5:
        raise ValueError("expected blobs:N,d,k_true,spread,seed")
    n, dim, k_true = int(parts[0]), int(parts[1]), int(parts[2])
    spread = float(parts[3])
    seed = int(parts[4])
    return make_blobs(n, dim, k_true, spread, seed)


@dataclass
class BenchOptions:
    scale_factor: float = 1.2
    leaf_size: int = 100
    switch_iter: int = 7
    max_iter: int = 1000
    tol: float = 0.0

    def tree_config(self) -> TreeConfig:
        return TreeConfig(base=self.scale_factor, leaf_threshold=self.leaf_size)


def run_single(
    data: Dataset,
    algorithm: str,
    k: int,
    seed: int,
    opts: BenchOptions | None = None,
    tree: CoverTree | None = None,
) -> RunMetrics:
    """One (algorithm, k, seed) execution; returns its metrics record."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if opts is None:
        opts = BenchOptions()
    cfg = RunConfig(
        max_iter=opts.max_iter,
        tol=opts.tol,
        tree_config=opts.tree_config(),
        switch_iter=opts.switch_iter,
        tree=tree,
    )
    return run(algorithm, data, k, seed, cfg).metrics


def run_sweep(
    data: Dataset,
    algorithms: list[str],
    ks: list[int],
    seeds: list[int],
    opts: BenchOptions | None = None,
) -> list[RunMetrics]:
    """Cartesian product of algorithm x seed x k over one dataset.

    The cover tree is built exactly once and shared, so every tree-backed
    record carries the same build time and build distance count.
    """
    if opts is None:
        opts = BenchOptions()
    tree = None
    if any(a in _TREE_ALGOS for a in algorithms):
        tree = build_tree(data, opts.tree_config())
    out = []
    for algorithm in algorithms:
        for seed in seeds:
            for k in ks:
                out.append(run_single(data, algorithm, k, seed, opts, tree))
    return out


def report(records: list[dict]) -> tuple[str, dict]:
    """Ratios relative to the standard algorithm, averaged over seeds.

    Every (seed, k) pair present must include a standard run; its distance
    total and wall time are the denominators for the other algorithms on
    that pair.  Returns an aligned-text table and a machine-readable dict.
    """
    baselines: dict[tuple[int, int], dict] = {}
    for rec in records:
        if rec["algorithm"] == "standard":
            baselines[(rec["seed"], rec["k"])] = rec
    ratios: dict[tuple[str, int], list[tuple[float, float]]] = {}
    for rec in records:
        key = (rec["seed"], rec["k"])
        base = baselines.get(key)
        if base is None:
            raise ValueError(
                f"missing standard baseline for (dataset, seed={key[0]}, k={key[1]})"
            )
        dist_ratio = rec["dist_total"] / base["dist_total"]
        time_ratio = rec["time_total_ns"] / base["time_total_ns"]
        ratios.setdefault((rec["algorithm"], rec["k"]), []).append((dist_ratio, time_ratio))

    summary: dict = {"rows": []}
    lines = [f"{'algorithm':<10} {'k':>6} {'dist_ratio':>12} {'time_ratio':>12} {'runs':>5}"]
    for (algorithm, k), pairs in sorted(ratios.items()):
        d = sum(p[0] for p in pairs) / len(pairs)
        t = sum(p[1] for p in pairs) / len(pairs)
        row = {
            "algorithm": algorithm,
            "k": k,
            "dist_ratio": d,
            "time_ratio": t,
            "runs": len(pairs),
        }
        summary["rows"].append(row)
        lines.append(f"{algorithm:<10} {k:>6} {d:>12.4f} {t:>12.4f} {len(pairs):>5}")
    return "\n".join(lines), summary


def records_to_jsonl(metrics: list[RunMetrics]) -> str:
    return "\n".join(json.dumps(m.to_record()) for m in metrics) + "\n"


def records_to_csv(metrics: list[RunMetrics]) -> str:
    cols = [
        "algorithm", "seed", "k", "iterations", "converged", "sse",
        "dist_total", "time_total_ns", "tree_build_ns", "tree_build_dists",
        "per_iter",
    ]
    lines = [",".join(cols)]
    for m in metrics:
        rec = m.to_record()
        per_iter = json.dumps(rec["per_iter"]).replace(",", ";")
        vals = [str(rec[c]) if c != "per_iter" else f'"{per_iter}"' for c in cols]
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"
