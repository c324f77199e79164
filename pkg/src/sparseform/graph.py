"""Formation graphs over 3D drone positions and their Laplacian matrices.

Vertices are 0-based internally. Edges are directed pairs ``(i, j)``: drone
``i`` observes drone ``j`` and row ``i`` of the adjacency matrix carries the
edge weight.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from sparseform.errors import InvalidInputError

COPLANAR_TOL = 1e-6
RANK_TOL = 1e-8


def as_positions(points, min_count: int = 1) -> np.ndarray:
    p = np.array(points, dtype=float)
    if p.ndim != 2 or p.shape[1] != 3:
        raise InvalidInputError(f"positions must have shape (N, 3), got {p.shape}")
    if p.shape[0] < min_count:
        raise InvalidInputError(f"need at least {min_count} positions, got {p.shape[0]}")
    if not np.all(np.isfinite(p)):
        raise InvalidInputError("positions must be finite")
    return p


def edge_weights(positions: np.ndarray, edges: np.ndarray, squared: bool = False) -> np.ndarray:
    if len(edges) == 0:
        return np.zeros(0)
    d = positions[edges[:, 0]] - positions[edges[:, 1]]
    w = np.einsum("ij,ij->i", d, d)
    return w if squared else np.sqrt(w)


@dataclass(frozen=True, eq=False)
class FormationGraph:
    """Directed, distance-weighted graph over a fixed set of drone positions.

    Build instances with :meth:`from_edges` (or the constructors in this
    package); weights are derived from the positions, never passed in.
    """

    positions: np.ndarray
    edges: np.ndarray
    weights: np.ndarray
    squared: bool = False
    label: str = field(default="", compare=False)

    @classmethod
    def from_edges(cls, positions, edges, squared: bool = False, label: str = "") -> "FormationGraph":
        p = as_positions(positions)
        n = len(p)
        e = np.array(sorted({(int(i), int(j)) for i, j in edges}), dtype=np.intp).reshape(-1, 2)
        if len(e):
            if e.min() < 0 or e.max() >= n:
                raise InvalidInputError("edge endpoint out of range")
            if np.any(e[:, 0] == e[:, 1]):
                raise InvalidInputError("self-loops are not allowed")
        w = edge_weights(p, e, squared)
        for arr in (p, e, w):
            arr.setflags(write=False)
        return cls(p, e, w, squared, label)

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def edge_set(self) -> frozenset:
        return frozenset(map(tuple, self.edges.tolist()))

    def undirected_edges(self) -> np.ndarray:
        if not len(self.edges):
            return np.zeros((0, 2), dtype=np.intp)
        return np.unique(np.sort(self.edges, axis=1), axis=0)

    def out_neighbors(self, i: int) -> np.ndarray:
        return self.edges[self.edges[:, 0] == i, 1]

    def with_positions(self, positions) -> "FormationGraph":
        """Same edge set, weights re-evaluated at new positions."""
        p = as_positions(positions)
        if p.shape != self.positions.shape:
            raise InvalidInputError("position count does not match the graph")
        w = edge_weights(p, self.edges, self.squared)
        p.setflags(write=False)
        w.setflags(write=False)
        return FormationGraph(p, self.edges, w, self.squared, self.label)

    @cached_property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        if self.edge_count:
            a[self.edges[:, 0], self.edges[:, 1]] = self.weights
        a.setflags(write=False)
        return a

    @cached_property
    def degree(self) -> np.ndarray:
        d = np.diag(self.adjacency.sum(axis=1))
        d.setflags(write=False)
        return d

    @cached_property
    def laplacian(self) -> np.ndarray:
        lap = self.degree - self.adjacency
        lap.setflags(write=False)
        return lap


def build_complete_graph(positions, squared: bool = False) -> FormationGraph:
    p = as_positions(positions, min_count=2)
    n = len(p)
    edges = [(i, j) for i in range(n) for j in range(n) if i != j]
    return FormationGraph.from_edges(p, edges, squared=squared, label="complete")


def laplacian(graph: FormationGraph) -> np.ndarray:
    """``L = D - A`` with row ``i`` holding the out-edge weights of vertex ``i``."""
    return graph.laplacian


def coplanarity_check(points, tol: float = COPLANAR_TOL) -> bool:
    """True when the points lie (numerically) in a common plane.

    Compares the smallest singular value of the centered coordinates with
    ``tol`` times the largest one, which makes the test scale invariant.
    """
    p = as_positions(points)
    if len(p) < 4:
        raise InvalidInputError("coplanarity is only meaningful for 4 or more points")
    s = np.linalg.svd(p - p.mean(axis=0), compute_uv=False)
    return bool(s[-1] <= tol * s[0])


def rigidity_matrix(graph: FormationGraph) -> np.ndarray:
    """One row per undirected edge with ``±(p_i - p_j)`` in the endpoint blocks."""
    und = graph.undirected_edges()
    p = graph.positions
    r = np.zeros((len(und), 3 * graph.n))
    for row, (i, j) in enumerate(und):
        d = p[i] - p[j]
        r[row, 3 * i:3 * i + 3] = d
        r[row, 3 * j:3 * j + 3] = -d
    return r


def rigidity_rank(graph: FormationGraph, tol: float = RANK_TOL) -> int:
    if graph.n < 4:
        raise InvalidInputError("rigidity rank needs at least 4 vertices")
    r = rigidity_matrix(graph)
    if r.size == 0:
        return 0
    s = np.linalg.svd(r, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def is_infinitesimally_rigid(graph: FormationGraph) -> bool:
    return rigidity_rank(graph) == 3 * graph.n - 6
