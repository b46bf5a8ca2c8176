"""Per-run instrumentation records emitted by the benchmark harness."""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = ["IterationMetrics", "RunMetrics"]


@dataclass
class IterationMetrics:
    dists: int
    time_ns: int


@dataclass
class RunMetrics:
    """Everything one clustering execution reports.

    Distance counts are exact and machine-independent; wall times are not.
    Totals are always the sum of the per-iteration values.  Tree fields are
    None for algorithms that build no index.
    """

    algorithm: str
    seed: int
    k: int
    iterations: int
    converged: bool
    sse: float
    per_iter: list[IterationMetrics] = field(default_factory=list)
    tree_build_ns: int | None = None
    tree_build_dists: int | None = None

    @property
    def dist_total(self) -> int:
        return sum(it.dists for it in self.per_iter)

    @property
    def time_total_ns(self) -> int:
        return sum(it.time_ns for it in self.per_iter)

    def to_record(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "k": self.k,
            "iterations": self.iterations,
            "converged": self.converged,
            "sse": self.sse,
            "dist_total": self.dist_total,
            "time_total_ns": self.time_total_ns,
            "tree_build_ns": self.tree_build_ns,
            "tree_build_dists": self.tree_build_dists,
            "per_iter": [{"dists": it.dists, "time_ns": it.time_ns} for it in self.per_iter],
        }
