import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparseform.errors import InvalidInputError
from sparseform.graph import (
    FormationGraph,
    build_complete_graph,
    coplanarity_check,
    laplacian,
    rigidity_matrix,
    rigidity_rank,
)

from conftest import generic_points


def loop_laplacian(p, edges, squared=False):
    # independent oracle: explicit double loop over the edge list
    n = len(p)
    lap = np.zeros((n, n))
    for i, j in edges:
        w = np.sum((p[i] - p[j]) ** 2)
        w = w if squared else np.sqrt(w)
        lap[i, j] -= w
        lap[i, i] += w
    return lap


TETRA = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])


def test_tetrahedron_laplacian_frozen():
    g = build_complete_graph(TETRA)
    s2 = np.sqrt(2.0)
    expected = np.array([
        [3.0, -1, -1, -1],
        [-1, 1 + 2 * s2, -s2, -s2],
        [-1, -s2, 1 + 2 * s2, -s2],
        [-1, -s2, -s2, 1 + 2 * s2],
    ])
    np.testing.assert_allclose(g.laplacian, expected, rtol=0, atol=1e-15)
    np.testing.assert_allclose(laplacian(g), expected, atol=1e-15)


def test_squared_weights():
    g = build_complete_graph(TETRA, squared=True)
    assert g.laplacian[1, 2] == pytest.approx(-2.0)
    assert g.degree[0, 0] == pytest.approx(3.0)


def test_directed_laplacian_matches_loop(rng):
    p = generic_points(rng, 7)
    edges = [(0, 1), (1, 0), (2, 5), (6, 3), (3, 4), (4, 6), (5, 2)]
    g = FormationGraph.from_edges(p, edges)
    np.testing.assert_allclose(g.laplacian, loop_laplacian(p, edges), atol=1e-12)
    np.testing.assert_allclose(g.laplacian.sum(axis=1), 0, atol=1e-12)
    assert g.adjacency[2, 5] > 0 and g.adjacency[5, 3] == 0


def test_graph_arrays_are_read_only(rng):
    g = build_complete_graph(generic_points(rng, 5))
    with pytest.raises(ValueError):
        g.positions[0, 0] = 1.0
    with pytest.raises(ValueError):
        g.laplacian[0, 0] = 1.0


def test_invalid_edges_rejected(rng):
    p = generic_points(rng, 4)
    with pytest.raises(InvalidInputError):
        FormationGraph.from_edges(p, [(0, 0)])
    with pytest.raises(InvalidInputError):
        FormationGraph.from_edges(p, [(0, 9)])
    with pytest.raises(InvalidInputError):
        build_complete_graph(np.zeros((3, 2)))


def test_coplanarity():
    square = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])
    assert coplanarity_check(square)
    assert not coplanarity_check(TETRA)
    assert coplanarity_check(np.vstack([square, [[0.5, 0.5, 1e-9]]]))
    with pytest.raises(InvalidInputError):
        coplanarity_check(TETRA[:3])


def test_rigidity_frozen_cases():
    g = build_complete_graph(TETRA)
    r = rigidity_matrix(g)
    assert r.shape == (6, 12)
    assert rigidity_rank(g) == 6
    # four coplanar points: the out-of-plane flex drops the rank to 5
    square = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])
    assert rigidity_rank(build_complete_graph(square)) == 5
    # a path is flexible
    path = FormationGraph.from_edges(TETRA, [(0, 1), (1, 2), (2, 3)])
    assert rigidity_rank(path) == 3


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 9), st.integers(0, 2**32 - 1))
def test_laplacian_permutation_equivariant(n, seed):
    rng = np.random.default_rng(seed)
    p = generic_points(rng, n)
    perm = rng.permutation(n)
    a = build_complete_graph(p).laplacian
    b = build_complete_graph(p[perm]).laplacian
    np.testing.assert_allclose(b, a[np.ix_(perm, perm)], atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 9), st.integers(0, 2**32 - 1))
def test_laplacian_rigid_motion_invariant(n, seed):
    from conftest import random_rotation

    rng = np.random.default_rng(seed)
    p = generic_points(rng, n)
    q = p @ random_rotation(rng).T + rng.normal(size=3)
    np.testing.assert_allclose(build_complete_graph(q).laplacian, build_complete_graph(p).laplacian, atol=1e-10)
