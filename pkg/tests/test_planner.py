import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparseform.errors import InvalidInputError, SingularGradientError
from sparseform.graph import FormationGraph, build_complete_graph
from sparseform.planner import (
    CostWeights,
    Cylinder,
    FormationTerm,
    ObstacleMap,
    OptimizerConfig,
    PlanningProblem,
    formation_cost,
    formation_gradient,
    plan,
    total_cost_and_gradient,
)
from sparseform.sparsify import build_sparse_graph

from conftest import generic_points, random_rotation


def fd_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def dense_cost(x, desired):
    # oracle: build both Laplacians densely and take the Frobenius distance
    cur = FormationGraph.from_edges(x, desired.edges, desired.squared)
    return float(np.sum((cur.laplacian - desired.laplacian) ** 2))


@pytest.fixture
def sparse(rng):
    p = generic_points(rng, 8)
    return build_sparse_graph(p, [0, 2, 3, 6])


def test_cost_matches_dense_laplacian(sparse, rng):
    x = sparse.positions + rng.normal(scale=0.3, size=sparse.positions.shape)
    assert formation_cost(x, sparse) == pytest.approx(dense_cost(x, sparse), rel=1e-12)
    assert formation_cost(sparse.positions, sparse) == 0.0


@pytest.mark.parametrize("squared", [False, True])
def test_gradient_matches_finite_differences(rng, squared):
    p = generic_points(rng, 6)
    g = build_sparse_graph(p, [1, 2, 4, 5], squared=squared)
    x = p + rng.normal(scale=0.5, size=p.shape)
    num = fd_gradient(lambda y: dense_cost(y, g), x)
    np.testing.assert_allclose(formation_gradient(x, g), num, rtol=1e-6, atol=1e-6)


def test_batched_matches_single(sparse, rng):
    x = sparse.positions + rng.normal(scale=0.2, size=(4, 8, 3))
    term = FormationTerm(sparse)
    c, g = term.cost_and_gradient(x)
    for m in range(4):
        cm, gm = term.cost_and_gradient(x[m])
        assert c[m] == pytest.approx(cm, rel=1e-13)
        np.testing.assert_allclose(g[m], gm, rtol=1e-12, atol=1e-13)


def test_coincident_neighbours(sparse):
    x = sparse.positions.copy()
    x[1] = x[0]
    with pytest.raises(SingularGradientError):
        formation_gradient(x, sparse)
    _, g = FormationTerm(sparse).cost_and_gradient(x, guard=True)
    assert np.all(np.isfinite(g))


def test_edge_set_mismatch(sparse):
    other = build_complete_graph(sparse.positions)
    with pytest.raises(InvalidInputError):
        formation_cost(other, sparse)
    with pytest.raises(InvalidInputError):
        formation_cost(sparse.positions[:5], sparse)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_cost_rigid_motion_invariant(seed):
    rng = np.random.default_rng(seed)
    p = generic_points(rng, 7)
    g = build_sparse_graph(p, [0, 1, 2, 3])
    x = p + rng.normal(scale=0.4, size=p.shape)
    y = x @ random_rotation(rng).T + rng.normal(scale=10, size=3)
    assert formation_cost(y, g) == pytest.approx(formation_cost(x, g), rel=1e-9, abs=1e-12)


def _problem(rng, n=6, obstacles=(), waypoints=12):
    p = generic_points(rng, n, scale=1.0)
    g = build_complete_graph(p)
    # scattered start, so the formation term has work to do
    start = p + np.array([2.0, 10.0, 2.5]) + rng.normal(scale=0.2, size=p.shape)
    return PlanningProblem(
        start=start,
        goal_centroid=np.array([12.0, 10.0, 2.5]),
        desired=g,
        obstacles=ObstacleMap(obstacles=obstacles),
        waypoints=waypoints,
        dt=1.0,
        velocity_limit=2.0,
    )


def test_total_gradient_matches_finite_differences(rng):
    prob = _problem(rng, obstacles=(Cylinder(6.0, 10.0, 1.0),), waypoints=6)
    x = np.linspace(prob.start, prob.start + [10, 0, 0], 6) + rng.normal(scale=0.3, size=(6, 6, 3))
    x[:, 1] = x[:, 0] + 0.1  # exercise the clearance hinge
    _, g = total_cost_and_gradient(x, prob)

    def f(y):
        y = y.copy()
        y[0] = x[0]
        return total_cost_and_gradient(y, prob)[0]

    num = fd_gradient(f, x)
    num[0] = 0.0
    np.testing.assert_allclose(g, num, rtol=1e-5, atol=1e-5)


def test_plan_reaches_goal_in_formation(rng):
    prob = _problem(rng)
    traj, stats = plan(prob)
    assert stats.converged
    assert traj.waypoints.shape == (12, 6, 3)
    np.testing.assert_array_equal(traj.waypoints[0], prob.start)
    assert np.linalg.norm(traj.waypoints[-1].mean(axis=0) - prob.goal_centroid) < 0.5
    assert stats.final_cost < stats.initial_cost
    assert stats.cost_history[0] >= stats.cost_history[-1]
    assert formation_cost(traj.waypoints[-1], prob.desired) < 0.1 * formation_cost(prob.start, prob.desired)


def test_plan_avoids_obstacle(rng):
    prob = _problem(rng, obstacles=(Cylinder(7.0, 10.0, 1.0),), waypoints=16)
    traj, _ = plan(prob)
    d = np.linalg.norm(traj.waypoints[..., :2] - [7.0, 10.0], axis=-1)
    assert d.min() > 1.0


def test_gradient_descent_option(rng):
    prob = _problem(rng, waypoints=6)
    traj, stats = plan(prob, OptimizerConfig(method="gd", max_iters=300))
    assert stats.final_cost < stats.initial_cost
    assert stats.iterations <= 300
    with pytest.raises(InvalidInputError):
        plan(prob, OptimizerConfig(method="newton"))


def test_weights_validated():
    with pytest.raises(InvalidInputError):
        CostWeights(formation=-1.0)
