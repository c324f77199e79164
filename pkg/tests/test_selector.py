import itertools

import numpy as np
import pytest

from sparseform.errors import BudgetExceededError, InfeasibleSelectionError, InvalidInputError
from sparseform.graph import build_complete_graph, coplanarity_check
from sparseform.selector import GaConfig, solve_exhaustive, solve_ga

from conftest import generic_points


def brute_force(lap, p, k, key):
    best, best_val = None, None
    for c in itertools.combinations(range(len(p)), k):
        if coplanarity_check(p[list(c)]):
            continue
        v = key(lap[np.ix_(c, c)])
        if best_val is None or v > best_val:
            best, best_val = c, v
    return best, best_val


@pytest.fixture
def instance(rng):
    p = generic_points(rng, 9)
    return p, build_complete_graph(p).laplacian


def test_exhaustive_matches_brute_force(instance):
    p, lap = instance
    res = solve_exhaustive(lap, p, 4, "max-trace")
    best, val = brute_force(lap, p, 4, np.trace)
    assert res.selection.indices == best
    assert res.value == pytest.approx(val, rel=1e-14)
    res = solve_exhaustive(lap, p, 5, "max-logdet")
    best, _ = brute_force(lap, p, 5, lambda m: np.linalg.slogdet(0.5 * (m + m.T))[1])
    assert res.selection.indices == best


def test_ga_deterministic(instance):
    p, lap = instance
    cfg = GaConfig(population_size=40, generations=15, seed=7)
    h1, h2 = [], []
    a = solve_ga(lap, p, 5, "max-trace", cfg, h1)
    b = solve_ga(lap, p, 5, "max-trace", cfg, h2)
    assert a == b and h1 == h2
    assert len(h1) == 15
    # elitism keeps the best score monotone
    assert all(y >= x for x, y in zip(h1, h1[1:]))
    assert a.selection.noncoplanar and len(a.selection.indices) == 5


def test_ga_full_selection(instance):
    p, lap = instance
    res = solve_ga(lap, p, 9, "max-trace")
    assert res.selection.indices == tuple(range(9))


def test_ga_finds_optimum_small(instance):
    p, lap = instance
    res = solve_ga(lap, p, 4, "max-trace", GaConfig(population_size=100, generations=30))
    assert res.value == solve_exhaustive(lap, p, 4, "max-trace").value


def test_min_cond_is_minimized(instance):
    p, lap = instance
    res = solve_exhaustive(lap, p, 4, "min-cond")
    _, val = brute_force(lap, p, 4, lambda m: -np.linalg.cond(0.5 * (m + m.T)))
    assert res.value == pytest.approx(-val, rel=1e-10)


def test_budget_exceeded(rng):
    p = generic_points(rng, 30)
    with pytest.raises(BudgetExceededError):
        solve_exhaustive(build_complete_graph(p).laplacian, p, 12, "max-trace", budget=1000)


def test_planar_formation_infeasible():
    p = np.c_[np.random.default_rng(3).uniform(size=(7, 2)), np.zeros(7)]
    lap = build_complete_graph(p).laplacian
    with pytest.raises(InfeasibleSelectionError):
        solve_exhaustive(lap, p, 4, "max-trace")
    with pytest.raises(InfeasibleSelectionError):
        solve_ga(lap, p, 4, "max-trace", GaConfig(population_size=10, generations=2))


def test_ga_repairs_when_nothing_feasible_found():
    # only vertex 6 lifts out of the plane, so most 4-subsets are coplanar
    rng = np.random.default_rng(5)
    p = np.c_[rng.uniform(size=(7, 2)), np.zeros(7)]
    p[6, 2] = 0.01
    lap = build_complete_graph(p).laplacian
    res = solve_ga(lap, p, 4, "max-trace", GaConfig(population_size=4, generations=1, mutation_prob=0, crossover_prob=0, seed=2))
    assert res.selection.noncoplanar
    assert 6 in res.selection.indices


@pytest.mark.parametrize("kw", [{"population_size": 1}, {"generations": 0}, {"crossover_prob": 1.5}, {"elitism_count": 500}])
def test_config_validation(kw):
    with pytest.raises(InvalidInputError):
        GaConfig(**kw)


def test_k_out_of_range(instance):
    p, lap = instance
    with pytest.raises(InvalidInputError):
        solve_ga(lap, p, 3, "max-trace")
    with pytest.raises(InvalidInputError):
        solve_ga(lap, p, 10, "max-trace")
