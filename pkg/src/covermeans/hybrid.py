"""Tree-then-bounds hybrid clustering.

The first iterations run the cover tree traversal, which is cheap while
centers move a lot.  At the configured switch iteration the traversal also
records, for every point, an upper bound on its assigned-center distance
and a lower bound on all other centers, derived purely from quantities the
traversal already computed.  Those seed a stored-bounds backend that takes
over for the remaining iterations, skipping the usual full-scan warm-up.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bounds import HamerlyBounds, HamerlyRunner, update_hamerly_bounds
from .core import Dataset, DistanceCounter
from .covertree import CoverTree
from .kmeans import ClusterState
from .tree_kmeans import CoverMeansRunner

__all__ = ["HybridConfig", "ExportedBounds", "export_bounds", "HybridRunner", "run_hybrid"]


@dataclass(frozen=True)
class HybridConfig:
    t_switch: int = 7
    backend: str = "hamerly"

    def __post_init__(self) -> None:
        if self.t_switch < 1:
            raise ValueError(f"t_switch must be >= 1, got {self.t_switch}")
        if self.backend != "hamerly":
            raise ValueError(f"unsupported backend {self.backend!r}")


@dataclass
class ExportedBounds:
    """Per-point bounds handed to the stored-bounds backend at the switch.

    ``second_id`` names the cluster each lower bound was derived from; it is
    not necessarily the true second-nearest cluster, only the bound must
    hold.  Valid for the centers the exporting traversal assigned against.
    """

    labels: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    second_id: np.ndarray


def export_bounds(runner: CoverMeansRunner) -> ExportedBounds:
    """Bounds recorded by the runner's last capture-enabled traversal."""
    if runner.exp_upper.size != runner.data.n:
        raise ValueError("no capture-enabled traversal has run")
    return ExportedBounds(
        labels=runner.labels.copy(),
        upper=runner.exp_upper.copy(),
        lower=runner.exp_lower.copy(),
        second_id=runner.exp_second.copy(),
    )


class HybridRunner:
    """Cover traversal for the first ``switch_iter`` iterations, then a
    Hamerly backend seeded from the exported bounds."""

    def __init__(self, data: Dataset, state: ClusterState, ctr: DistanceCounter,
                 tree: CoverTree, switch_iter: int):
        HybridConfig(t_switch=switch_iter)
        self.data = data
        self.state = state
        self.ctr = ctr
        self.switch_iter = switch_iter
        self.cover = CoverMeansRunner(data, state, ctr, tree)
        self.backend: HamerlyRunner | None = None
        self.exported: ExportedBounds | None = None
        self._switch_pending = False

    @property
    def labels(self) -> np.ndarray:
        return self.backend.labels if self.backend is not None else self.cover.labels

    def set_trace(self, trace: list) -> None:
        self.cover.set_trace(trace)

    def update_means(self) -> None:
        if self.backend is None:
            self.cover.update_means()
        else:
            self.backend.update_means()

    def after_update(self) -> None:
        if self._switch_pending:
            self._switch_pending = False
            self.exported = export_bounds(self.cover)
            bounds = HamerlyBounds(
                labels=self.exported.labels.copy(),
                upper=self.exported.upper.copy(),
                lower=self.exported.lower.copy(),
                initialized=True,
            )
            # The exported bounds hold for the pre-update centers; correct
            # them for the movement the update just applied.
            update_hamerly_bounds(bounds, self.state, self.ctr)
            self.backend = HamerlyRunner(self.data, self.state, self.ctr, bounds)
        elif self.backend is not None:
            self.backend.after_update()

    def assign(self, iteration: int) -> int:
        if self.backend is None:
            if iteration == self.switch_iter:
                self.cover.enable_capture()
            changed = self.cover.assign(iteration)
            if iteration >= self.switch_iter and changed != 0:
                self._switch_pending = True
            return changed
        return self.backend.assign(iteration)


def run_hybrid(
    data: Dataset,
    tree: CoverTree,
    k: int,
    seed: int,
    hcfg: HybridConfig | None = None,
    ctr: DistanceCounter | None = None,
    **kwargs,
):
    """Convenience wrapper: full hybrid run over a prebuilt tree."""
    from .kmeans import RunConfig, run

    if hcfg is None:
        hcfg = HybridConfig()
    cfg = RunConfig(switch_iter=hcfg.t_switch, tree=tree)
    return run("hybrid", data, k, seed, cfg, ctr, **kwargs)
