"""Spatial adjacency from coordinates and the spatial-temporal synchronous graph."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autograd import Tensor, hadamard
from .errors import DegenerateGeometryError, DimensionError, EmptyInputError

WEIGHT_MODES = ("similarity", "distance", "binary")


@dataclass(frozen=True)
class SpatialGraph:
    """N vertices with a symmetric, zero-diagonal weighted adjacency."""

    vertex_names: tuple[str, ...]
    adjacency: np.ndarray
    coords: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=np.float64)
        n = len(self.vertex_names)
        if a.shape != (n, n):
            raise DimensionError(f"adjacency shape {a.shape} does not match {n} vertex names")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        object.__setattr__(self, "vertex_names", tuple(self.vertex_names))

    @property
    def num_vertices(self) -> int:
        return len(self.vertex_names)

    @property
    def num_edges(self) -> int:
        """Undirected edge count."""
        return int(np.count_nonzero(np.triu(self.adjacency, 1)))

    @property
    def density(self) -> float:
        n = self.num_vertices
        return 0.0 if n < 2 else self.num_edges / (n * (n - 1) / 2)

    def permuted(self, order: Sequence[int]) -> "SpatialGraph":
        order = np.asarray(order)
        coords = None if self.coords is None else self.coords[order]
        return SpatialGraph(
            tuple(self.vertex_names[i] for i in order),
            self.adjacency[np.ix_(order, order)],
            coords,
        )


def build_spatial_adjacency(
    coords,
    threshold: float = 0.3,
    weight: str = "similarity",
    vertex_names: Sequence[str] | None = None,
) -> SpatialGraph:
    """Threshold max-normalised Euclidean distances between (lat, lon) pairs.

    Pairs with normalised distance ``d <= threshold`` become edges weighted
    ``1 - d`` (``similarity``), ``d`` (``distance``) or ``1`` (``binary``).
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.size == 0:
        raise EmptyInputError("no coordinates given")
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise DimensionError(f"coords must be N x 2, got {coords.shape}")
    if not np.all(np.isfinite(coords)):
        raise ValueError("coordinates must be finite")
    if weight not in WEIGHT_MODES:
        raise ValueError(f"weight must be one of {WEIGHT_MODES}, got {weight!r}")
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    n = coords.shape[0]
    names = tuple(vertex_names) if vertex_names is not None else tuple(str(i) for i in range(n))
    if n == 1:
        return SpatialGraph(names, np.zeros((1, 1)), coords)

    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=-1))
    dmax = dist.max()
    if dmax == 0:
        raise DegenerateGeometryError(f"all {n} coordinates coincide; cannot normalise distances")
    dnorm = dist / dmax
    keep = (dnorm <= threshold) & ~np.eye(n, dtype=bool)
    if weight == "similarity":
        w = 1.0 - dnorm
    elif weight == "distance":
        w = dnorm
    else:
        w = np.ones_like(dnorm)
    adjacency = np.where(keep, w, 0.0)
    # exact symmetry regardless of floating-point order in the distance sum
    adjacency = np.triu(adjacency, 1)
    adjacency = adjacency + adjacency.T
    return SpatialGraph(names, adjacency, coords)


def vertex_index(t: int, p: int, n: int, steps: int | None = None) -> int:
    """1-based index of vertex ``p`` at step ``t`` in the synchronous graph.

    Arrays are indexed with ``vertex_index(t, p, n) - 1``, i.e.
    ``(t - 1) * n + (p - 1)``: time-major, the same block layout.
    """
    if n < 1:
        raise IndexError("n must be positive")
    if not 1 <= p <= n:
        raise IndexError(f"vertex {p} outside 1..{n}")
    if t < 1 or (steps is not None and t > steps):
        raise IndexError(f"time step {t} outside 1..{steps if steps is not None else 'M'}")
    return (t - 1) * n + p


@dataclass(frozen=True)
class SyncGraph:
    """M stacked copies of a spatial graph, each vertex linked to itself at adjacent steps."""

    steps: int
    base: SpatialGraph
    adjacency: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.steps * self.base.num_vertices

    def block(self, row: int, col: int) -> np.ndarray:
        """0-based (row, col) N x N block."""
        n = self.base.num_vertices
        return self.adjacency[row * n:(row + 1) * n, col * n:(col + 1) * n]


def build_sync_adjacency(base: SpatialGraph, steps: int) -> SyncGraph:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    n = base.num_vertices
    # kron(I_M, A) places A on the diagonal blocks; kron(band, I_N) links
    # each vertex to itself one step earlier and later
    band = np.eye(steps, k=1) + np.eye(steps, k=-1)
    adjacency = np.kron(np.eye(steps), base.adjacency) + np.kron(band, np.eye(n))
    adjacency.setflags(write=False)
    return SyncGraph(steps, base, adjacency)


def apply_mask(sync: SyncGraph | np.ndarray, mask: Tensor) -> Tensor:
    """Elementwise ``mask * A_sync``; zero entries of ``A_sync`` stay zero."""
    adjacency = sync.adjacency if isinstance(sync, SyncGraph) else np.asarray(sync)
    if mask.shape != adjacency.shape:
        raise DimensionError(f"mask shape {mask.shape} does not match adjacency {adjacency.shape}")
    return hadamard(mask, Tensor(adjacency))


# ---------------------------------------------------------------------------
# CSV import / export: a header row of N labels, then N rows of N numbers


def write_adjacency_csv(graph: SpatialGraph, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(graph.vertex_names)
        for row in graph.adjacency:
            writer.writerow([repr(float(v)) for v in row])


def read_adjacency_csv(path) -> SpatialGraph:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise EmptyInputError(f"{path}: empty adjacency file")
    names, body = rows[0], rows[1:]
    if len(body) != len(names) or any(len(r) != len(names) for r in body):
        raise DimensionError(f"{path}: expected {len(names)} rows of {len(names)} values")
    return SpatialGraph(tuple(names), np.array(body, dtype=np.float64))


def write_coords_csv(names: Sequence[str], coords: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["vertex", "lat", "lon"])
        for name, (lat, lon) in zip(names, coords):
            writer.writerow([name, repr(float(lat)), repr(float(lon))])


def read_coords_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    names = [r["vertex"] for r in rows]
    coords = np.array([[float(r["lat"]), float(r["lon"])] for r in rows]).reshape(-1, 2)
    return names, coords


__all__ = [
    "SpatialGraph",
    "SyncGraph",
    "WEIGHT_MODES",
    "apply_mask",
    "build_spatial_adjacency",
    "build_sync_adjacency",
    "read_adjacency_csv",
    "read_coords_csv",
    "vertex_index",
    "write_adjacency_csv",
    "write_coords_csv",
]
