"""Dataset handling, the Euclidean metric, and distance-evaluation accounting.

Every algorithm in this package is benchmarked by how many point-to-point
Euclidean distance evaluations it performs.  The counter is therefore part of
the core API: scalar evaluations go through :func:`counted_distance`, batched
evaluations through the ``*_counted`` helpers, and both report into the same
:class:`DistanceCounter`.
"""

from __future__ import annotations

import io
import math
from typing import IO, Iterable, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

__all__ = [
    "Dataset",
    "DatasetFormatError",
    "DistanceCounter",
    "distance",
    "counted_distance",
    "load_dataset",
]


class DatasetFormatError(ValueError):
    """Raised when delimited input cannot be parsed into a numeric table."""


class DistanceCounter:
    """Monotone tally of point-to-point Euclidean distance evaluations.

    One counter belongs to exactly one clustering run (or one tree build).
    Batched evaluations add their batch size; the count never decreases.
    """

    __slots__ = ("count",)

    def __init__(self) -> None:
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"DistanceCounter(count={self.count})"


class Dataset:
    """Immutable table of n points in d dimensions.

    The backing array is locked after construction so that indexes built over
    the dataset (e.g. a cover tree) can safely share it.
    """

    __slots__ = ("points", "n", "dim", "_tuples")

    def __init__(self, points: np.ndarray):
        arr = np.ascontiguousarray(points, dtype=np.float64)
        if arr.ndim != 2:
            raise DatasetFormatError(f"expected a 2-d table, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DatasetFormatError(f"dataset must be at least 1x1, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            bad = np.argwhere(~np.isfinite(arr))[0]
            raise DatasetFormatError(
                f"non-finite value at row {bad[0] + 1}, column {bad[1] + 1}"
            )
        arr = arr.copy()
        arr.flags.writeable = False
        self.points = arr
        self.n = arr.shape[0]
        self.dim = arr.shape[1]
        self._tuples: list[tuple[float, ...]] | None = None

    @property
    def point_tuples(self) -> list[tuple[float, ...]]:
        """Rows as plain tuples; fast operands for ``math.dist`` hot loops."""
        if self._tuples is None:
            self._tuples = [tuple(row) for row in self.points]
        return self._tuples

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Dataset(n={self.n}, dim={self.dim})"


def distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Euclidean distance between two points of equal dimension."""
    return math.dist(a, b)


def counted_distance(ctr: DistanceCounter, a: Sequence[float], b: Sequence[float]) -> float:
    """Same value as :func:`distance`; increments ``ctr`` by exactly one."""
    d = math.dist(a, b)
    ctr.count += 1
    return d


# ---------------------------------------------------------------------------
# Batched counted evaluations.  These are the vectorized equivalents of
# calling counted_distance in a loop; the counter advances by the number of
# pairs evaluated.
# ---------------------------------------------------------------------------

def row_distances_counted(
    points: np.ndarray, center: np.ndarray, ctr: DistanceCounter
) -> np.ndarray:
    """Distances from each row of ``points`` to a single ``center``."""
    d = np.linalg.norm(points - center, axis=1)
    ctr.count += points.shape[0]
    return d


def matrix_distances_counted(
    points: np.ndarray, centers: np.ndarray, ctr: DistanceCounter
) -> np.ndarray:
    """Full rows-by-centers distance matrix; counts every entry."""
    d = cdist(points, centers)
    ctr.count += points.shape[0] * centers.shape[0]
    return d


def pairwise_distances_counted(centers: np.ndarray, ctr: DistanceCounter) -> np.ndarray:
    """Symmetric center-to-center matrix; each unordered pair counts once."""
    k = centers.shape[0]
    if k == 1:
        return np.zeros((1, 1))
    m = squareform(pdist(centers))
    ctr.count += k * (k - 1) // 2
    return m


def movement_distances_counted(
    prev: np.ndarray, cur: np.ndarray, ctr: DistanceCounter
) -> np.ndarray:
    """Per-row distance between old and new center positions."""
    d = np.linalg.norm(cur - prev, axis=1)
    ctr.count += prev.shape[0]
    return d


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def load_dataset(
    source: str | IO[bytes] | IO[str],
    delimiter: str = ",",
    has_header: bool = False,
) -> Dataset:
    """Parse delimited numeric text into a :class:`Dataset`.

    ``source`` may be a path, a text stream, or a byte stream (decoded as
    UTF-8).  One point per row; all columns numeric.  Errors carry the
    offending row and column.
    """
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    else:
        raw = source.read()
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        lines = raw.splitlines()

    rows: list[list[float]] = []
    width = -1
    first_data_line = 1
    if has_header:
        if not lines:
            raise DatasetFormatError("empty input")
        lines = lines[1:]
        first_data_line = 2

    for offset, line in enumerate(lines):
        lineno = first_data_line + offset
        if not line.strip():
            continue
        cells = line.split(delimiter)
        if width == -1:
            width = len(cells)
        elif len(cells) != width:
            raise DatasetFormatError(
                f"row {lineno}: expected {width} columns, found {len(cells)}"
            )
        row = []
        for col, cell in enumerate(cells):
            try:
                row.append(float(cell))
            except ValueError:
                raise DatasetFormatError(
                    f"row {lineno}, column {col + 1}: not numeric: {cell.strip()!r}"
                ) from None
        rows.append(row)

    if not rows:
        raise DatasetFormatError("empty input")
    return Dataset(np.array(rows, dtype=np.float64))
