"""Base-set selection: a fixed-size-subset genetic algorithm plus exhaustive
enumeration for small instances.

Chromosomes are sorted tuples of ``k`` distinct 0-based vertex indices.
Fitness is the metric score oriented so that larger is better; coplanar
chromosomes get ``-inf`` and are only repaired when nothing feasible turns up.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from sparseform.errors import BudgetExceededError, InfeasibleSelectionError, InvalidInputError
from sparseform.graph import COPLANAR_TOL, as_positions, coplanarity_check
from sparseform.metrics import MetricKind, score
from sparseform.sparsify import MIN_BASE, BaseSetSelection, repair_coplanar_base

EXHAUSTIVE_BUDGET = 10**7


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 200
    generations: int = 60
    crossover_prob: float = 0.4
    mutation_prob: float = 0.4
    seed: int = 0
    elitism_count: int = 2

    def __post_init__(self):
        if self.population_size < 2:
            raise InvalidInputError("population_size must be at least 2")
        if self.generations < 1:
            raise InvalidInputError("generations must be at least 1")
        for name in ("crossover_prob", "mutation_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1], got {v}")
        if not 0 <= self.elitism_count <= self.population_size:
            raise InvalidInputError("elitism_count must lie in [0, population_size]")

    @classmethod
    def paper(cls, seed: int = 0) -> "GaConfig":
        return cls(population_size=6000, generations=100, seed=seed)


@dataclass(frozen=True)
class ScoredSelection:
    selection: BaseSetSelection
    metric: MetricKind
    value: float


class SelectionProblem:
    """Memoized fitness for one (Laplacian, positions, k, metric) instance."""

    def __init__(self, lap, positions, k: int, metric, tol: float = COPLANAR_TOL):
        self.lap = np.asarray(lap, dtype=float)
        self.positions = as_positions(positions)
        self.n = len(self.positions)
        if self.lap.shape != (self.n, self.n):
            raise InvalidInputError("Laplacian and positions disagree on N")
        if not MIN_BASE <= k <= self.n:
            raise InvalidInputError(f"k must lie in [{MIN_BASE}, {self.n}], got {k}")
        self.k = int(k)
        self.metric = MetricKind.parse(metric)
        self.tol = tol
        self._cache: dict = {}

    def feasible(self, genes) -> bool:
        return not coplanarity_check(self.positions[list(genes)], self.tol)

    def raw_score(self, genes) -> float:
        return score(self.lap, genes, self.metric)

    def fitness(self, genes: tuple) -> float:
        f = self._cache.get(genes)
        if f is None:
            if not self.feasible(genes):
                f = -np.inf
            else:
                s = self.raw_score(genes)
                f = s if self.metric.maximize else -s
            self._cache[genes] = f
        return f

    def result(self, genes, noncoplanar: bool = True) -> ScoredSelection:
        value = self.raw_score(genes)
        sel = BaseSetSelection(tuple(genes), noncoplanar, value)
        return ScoredSelection(sel, self.metric, value)


def _resample_duplicates(genes: list, n: int, rng: np.random.Generator) -> tuple:
    seen: set = set()
    out = []
    for g in genes:
        if g in seen:
            out.append(None)
        else:
            seen.add(g)
            out.append(g)
    missing = out.count(None)
    if missing:
        unused = np.array([i for i in range(n) if i not in seen])
        fill = iter(rng.choice(unused, size=missing, replace=False).tolist())
        out = [next(fill) if g is None else g for g in out]
    return tuple(sorted(out))


def _crossover(a: tuple, b: tuple, n: int, rng: np.random.Generator) -> tuple:
    """Exchange crossover: swap a random gene mask between two parents."""
    mask = rng.random(len(a)) < 0.5
    c1 = [x if m else y for x, y, m in zip(a, b, mask)]
    c2 = [y if m else x for x, y, m in zip(a, b, mask)]
    return _resample_duplicates(c1, n, rng), _resample_duplicates(c2, n, rng)


def _mutate(genes: tuple, n: int, rng: np.random.Generator) -> tuple:
    if len(genes) == n:
        return genes
    chosen = set(genes)
    unused = [i for i in range(n) if i not in chosen]
    pos = int(rng.integers(len(genes)))
    new = list(genes)
    new[pos] = unused[int(rng.integers(len(unused)))]
    return tuple(sorted(new))


def _rank_weights(fit: np.ndarray) -> np.ndarray:
    # rank 1 for the worst; ties broken by position, which is deterministic
    order = np.argsort(fit, kind="stable")
    ranks = np.empty(len(fit))
    ranks[order] = np.arange(1, len(fit) + 1)
    return ranks / ranks.sum()


def ga_step(population: list, problem: SelectionProblem, cfg: GaConfig, rng: np.random.Generator) -> list:
    """One generation: elitism, rank-roulette parents, crossover, mutation.

    Fitness evaluation never touches ``rng``, so results depend only on the
    seed and not on evaluation order.
    """
    size = len(population)
    fit = np.array([problem.fitness(c) for c in population])
    order = np.argsort(-fit, kind="stable")
    elite = min(cfg.elitism_count, size)
    nxt = [population[i] for i in order[:elite]]
    if elite == size:
        return nxt
    probs = _rank_weights(fit)
    while len(nxt) < size:
        i, j = rng.choice(size, size=2, p=probs)
        a, b = population[i], population[j]
        if rng.random() < cfg.crossover_prob:
            a, b = _crossover(a, b, problem.n, rng)
        for child in (a, b):
            if rng.random() < cfg.mutation_prob:
                child = _mutate(child, problem.n, rng)
            nxt.append(child)
            if len(nxt) == size:
                break
    return nxt


def initial_population(n: int, k: int, size: int, rng: np.random.Generator) -> list:
    return [tuple(sorted(rng.choice(n, size=k, replace=False).tolist())) for _ in range(size)]


def _best(population: list, problem: SelectionProblem) -> tuple:
    best, best_fit = None, -np.inf
    for c in population:
        f = problem.fitness(c)
        if best is None or f > best_fit or (f == best_fit and c < best):
            best, best_fit = c, f
    return best, best_fit


def _finalize_infeasible(genes: tuple, problem: SelectionProblem) -> ScoredSelection:
    """Repair a coplanar answer, then trim back toward ``k`` members.

    Members are dropped in order of increasing weighted degree, skipping any
    drop that would make the base coplanar again. If no drop is possible the
    base stays larger than ``k``.
    """
    members = list(repair_coplanar_base(problem.positions, genes, problem.tol).indices)
    degree = np.diag(problem.lap)
    while len(members) > problem.k:
        for drop in sorted(members, key=lambda i: (degree[i], -i)):
            trial = [i for i in members if i != drop]
            if problem.feasible(trial):
                members = trial
                break
        else:
            break
    return problem.result(tuple(sorted(members)))


def solve_ga(lap, positions, k: int, metric, cfg: GaConfig | None = None, history: list | None = None) -> ScoredSelection:
    """Best feasible base set found by the genetic algorithm.

    ``history``, when given, receives the best fitness of every generation.
    """
    cfg = cfg or GaConfig()
    problem = SelectionProblem(lap, positions, k, metric)
    n = problem.n
    if k == n:
        genes = tuple(range(n))
        if not problem.feasible(genes):
            raise InfeasibleSelectionError("all vertices are coplanar")
        return problem.result(genes)

    rng = np.random.default_rng(cfg.seed)
    population = initial_population(n, k, cfg.population_size, rng)
    best, best_fit = _best(population, problem)
    for _ in range(cfg.generations):
        population = ga_step(population, problem, cfg, rng)
        cand, cand_fit = _best(population, problem)
        if cand_fit > best_fit or (cand_fit == best_fit and cand < best):
            best, best_fit = cand, cand_fit
        if history is not None:
            history.append(cand_fit)

    if np.isfinite(best_fit) or problem.feasible(best):
        return problem.result(best)
    try:
        return _finalize_infeasible(best, problem)
    except Exception as exc:
        raise InfeasibleSelectionError(str(exc)) from exc


def solve_exhaustive(lap, positions, k: int, metric, budget: int = EXHAUSTIVE_BUDGET) -> ScoredSelection:
    """Global optimum over all feasible k-subsets; ties go to the
    lexicographically smallest index set."""
    problem = SelectionProblem(lap, positions, k, metric)
    total = math.comb(problem.n, k)
    if total > budget:
        raise BudgetExceededError(
            f"C({problem.n},{k}) = {total} subsets exceeds the enumeration budget {budget}; use solve_ga"
        )
    best, best_fit = None, -np.inf
    for genes in itertools.combinations(range(problem.n), k):
        f = problem.fitness(genes)
        if f == -np.inf and not problem.feasible(genes):
            continue
        if best is None or f > best_fit:
            best, best_fit = genes, f
    if best is None:
        raise InfeasibleSelectionError("no non-coplanar subset of the requested size exists")
    return problem.result(best)
