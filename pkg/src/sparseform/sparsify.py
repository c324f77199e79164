"""Globally rigid sparsification of complete formation graphs.

A base set of at least four non-coplanar vertices is wired as a complete
subgraph; every other vertex gets directed edges to all base vertices and no
edges among themselves. Extension and gluing arguments make the result
globally rigid in 3D, and :func:`sparseform.graph.rigidity_rank` can confirm
infinitesimal rigidity numerically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from sparseform.errors import CoplanarBaseError, InvalidInputError, UnrepairableBaseError
from sparseform.graph import COPLANAR_TOL, FormationGraph, as_positions, coplanarity_check

MIN_BASE = 4


@dataclass(frozen=True)
class BaseSetSelection:
    indices: tuple
    noncoplanar: bool
    score: float = float("nan")

    @classmethod
    def of(cls, positions, indices, score: float = float("nan"), tol: float = COPLANAR_TOL) -> "BaseSetSelection":
        p = as_positions(positions)
        idx = tuple(int(i) for i in indices)
        if len(set(idx)) != len(idx):
            raise InvalidInputError("base indices must be distinct")
        if any(i < 0 or i >= len(p) for i in idx):
            raise InvalidInputError("base index out of range")
        if len(idx) < MIN_BASE:
            raise InvalidInputError(f"base set needs at least {MIN_BASE} vertices, got {len(idx)}")
        return cls(idx, not coplanarity_check(p[list(idx)], tol), float(score))

    @property
    def k(self) -> int:
        return len(self.indices)

    def one_based(self) -> list:
        return [i + 1 for i in self.indices]


@dataclass(frozen=True)
class SparseGraphPlan:
    base: BaseSetSelection
    remaining: tuple
    connection_rate: float

    @classmethod
    def make(cls, n: int, base: BaseSetSelection, connection_rate: float) -> "SparseGraphPlan":
        chosen = set(base.indices)
        return cls(base, tuple(i for i in range(n) if i not in chosen), float(connection_rate))


def edges_per_drone(n: int, rate: float) -> int:
    """Base-set size for ``n`` drones at connection rate ``rate``.

    Uses the ceiling of ``rate * n`` (48 drones at 30% give 15) and clamps to
    ``[4, n]``. A tiny slack absorbs float noise such as ``0.1 * 30``.
    """
    if not 0.0 < rate <= 1.0:
        raise InvalidInputError(f"connection rate must lie in (0, 1], got {rate}")
    if n < MIN_BASE:
        raise InvalidInputError(f"need at least {MIN_BASE} drones, got {n}")
    k = math.ceil(rate * n - 1e-9)
    return int(min(max(k, MIN_BASE), n))


def sparse_edge_list(n: int, base_indices) -> list:
    base = list(base_indices)
    chosen = set(base)
    edges = [(i, j) for i in base for j in base if i != j]
    edges += [(r, b) for r in range(n) if r not in chosen for b in base]
    return edges


def build_sparse_graph(positions, base, squared: bool = False, allow_coplanar: bool = False) -> FormationGraph:
    """Sparse graph on ``positions`` around ``base``.

    ``base`` is a :class:`BaseSetSelection` or a sequence of 0-based indices.
    ``allow_coplanar`` skips the non-coplanarity requirement; the result is
    then not guaranteed to be rigid (used for ablation runs).
    """
    p = as_positions(positions)
    if not isinstance(base, BaseSetSelection):
        base = BaseSetSelection.of(p, base)
    if any(i < 0 or i >= len(p) for i in base.indices):
        raise InvalidInputError("base index out of range")
    if base.k < MIN_BASE:
        raise InvalidInputError(f"base set needs at least {MIN_BASE} vertices")
    if not base.noncoplanar and not allow_coplanar:
        raise CoplanarBaseError(base.indices)
    return FormationGraph.from_edges(p, sparse_edge_list(len(p), base.indices), squared=squared, label="sparse")


def _plane_distances(points: np.ndarray, subset: np.ndarray) -> np.ndarray:
    centroid = subset.mean(axis=0)
    _, _, vt = np.linalg.svd(subset - centroid)
    normal = vt[-1]
    return np.abs((points - centroid) @ normal)


def repair_coplanar_base(positions, base, tol: float = COPLANAR_TOL) -> BaseSetSelection:
    """Grow a coplanar base with the vertex farthest from its best-fit plane.

    Repeats until the base passes the non-coplanarity test. Ties go to the
    lowest vertex index, so the result depends only on the positions.
    """
    p = as_positions(positions)
    if not isinstance(base, BaseSetSelection):
        base = BaseSetSelection.of(p, base, tol=tol)
    idx = list(base.indices)
    if base.noncoplanar:
        return base
    scale = np.linalg.norm(p - p.mean(axis=0), axis=1).max()
    while coplanarity_check(p[idx], tol):
        dist = _plane_distances(p, p[idx])
        dist[idx] = -1.0
        best = int(np.argmax(dist))
        if dist[best] <= tol * scale:
            raise UnrepairableBaseError("all vertices are coplanar; no 3D base set exists")
        idx.append(best)
    return BaseSetSelection(tuple(idx), True, base.score)
