"""Waypoint-based swarm formation planner.

The formation cost compares the Laplacian of the current positions with the
Laplacian of the desired formation over one fixed edge set:

    F = ||L(p) - L_des||_F^2 = sum_i delta_i^2 + sum_(i,j) r_ij^2

with ``r_ij = w_ij(p) - w_ij(desired)`` per edge and ``delta_i`` the sum of
``r_ij`` over the out-edges of ``i`` (the diagonal residual). Its gradient
is assembled edge by edge, so one evaluation costs O(|E|) per time sample.

Other terms are deliberately simple: squared second differences for
smoothness, squared hinge penalties for cylinder obstacles, drone clearance
and the speed limit, and a quadratic pull of the final centroid to the goal.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from sparseform.errors import InvalidInputError, SingularGradientError
from sparseform.graph import FormationGraph, as_positions

log = logging.getLogger(__name__)

COINCIDENT_EPS = 1e-6


@dataclass(frozen=True)
class CostWeights:
    formation: float = 1.0
    smooth: float = 1.0
    time: float = 0.0
    collision: float = 100.0
    feasibility: float = 10.0
    goal: float = 10.0

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if v < 0:
                raise InvalidInputError(f"weight {k} must be non-negative")


@dataclass(frozen=True)
class Cylinder:
    x: float
    y: float
    radius: float


@dataclass(frozen=True)
class ObstacleMap:
    size: tuple = (60.0, 20.0, 5.0)
    obstacles: tuple = ()
    margin: float = 0.3

    def __post_init__(self):
        for c in self.obstacles:
            if c.radius <= 0:
                raise InvalidInputError("obstacle radius must be positive")
            if not (0 <= c.x <= self.size[0] and 0 <= c.y <= self.size[1]):
                raise InvalidInputError("obstacle center outside the map")

    @property
    def centers(self) -> np.ndarray:
        return np.array([[c.x, c.y] for c in self.obstacles]).reshape(-1, 2)

    @property
    def radii(self) -> np.ndarray:
        return np.array([c.radius for c in self.obstacles])


@dataclass(frozen=True)
class SwarmTrajectory:
    waypoints: np.ndarray  # (M, N, 3)
    dt: float

    def __post_init__(self):
        if self.waypoints.ndim != 3 or self.waypoints.shape[2] != 3:
            raise InvalidInputError("waypoints must have shape (M, N, 3)")
        if self.dt <= 0:
            raise InvalidInputError("dt must be positive")

    @property
    def m(self) -> int:
        return self.waypoints.shape[0]

    @property
    def n(self) -> int:
        return self.waypoints.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.m) * self.dt


class FormationTerm:
    """Formation similarity cost and gradient for a fixed desired graph.

    Works on a single sample ``(N, 3)`` or on a stack ``(..., N, 3)``; the
    cost is returned per sample.
    """

    def __init__(self, desired: FormationGraph):
        self.graph = desired
        self.n = desired.n
        self.src = np.ascontiguousarray(desired.edges[:, 0]) if desired.edge_count else np.zeros(0, np.intp)
        self.dst = np.ascontiguousarray(desired.edges[:, 1]) if desired.edge_count else np.zeros(0, np.intp)
        self.target = np.asarray(desired.weights, dtype=float)
        self.squared = desired.squared

    def _weights(self, x: np.ndarray):
        d = x[..., self.src, :] - x[..., self.dst, :]
        sq = np.einsum("...ej,...ej->...e", d, d)
        if self.squared:
            return d, sq, sq
        return d, sq, np.sqrt(sq)

    def _residuals(self, w: np.ndarray):
        r = w - self.target
        lead = r.shape[:-1]
        flat = r.reshape(-1, r.shape[-1])
        rows = flat.shape[0]
        idx = (np.arange(rows)[:, None] * self.n + self.src[None, :]).ravel()
        delta = np.bincount(idx, weights=flat.ravel(), minlength=rows * self.n).reshape(*lead, self.n)
        return r, delta

    def cost(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        _, _, w = self._weights(x)
        r, delta = self._residuals(w)
        return np.sum(delta**2, axis=-1) + np.sum(r**2, axis=-1)

    def cost_and_gradient(self, x, guard: bool = False):
        """Cost per sample and ``dF/dp``.

        With ``guard`` the edge lengths are clamped at ``COINCIDENT_EPS``
        instead of raising on coincident neighbours.
        """
        x = np.asarray(x, dtype=float)
        d, sq, w = self._weights(x)
        r, delta = self._residuals(w)
        cost = np.sum(delta**2, axis=-1) + np.sum(r**2, axis=-1)
        # dF/dw_e: diagonal residual of the source row plus the entry itself
        g = 2.0 * (delta[..., self.src] + r)
        if self.squared:
            coef = 2.0 * g
        else:
            length = np.sqrt(sq)
            if not guard and length.size and length.min() <= COINCIDENT_EPS:
                raise SingularGradientError("adjacent drones coincide; distance gradient undefined")
            coef = g / np.maximum(length, COINCIDENT_EPS)
        contrib = coef[..., None] * d
        return cost, self._scatter(contrib, x.shape)

    def _scatter(self, contrib: np.ndarray, shape) -> np.ndarray:
        lead = shape[:-2]
        rows = int(np.prod(lead)) if lead else 1
        c = contrib.reshape(rows, -1, 3)
        base = (np.arange(rows)[:, None] * self.n)
        idx = np.concatenate([(base + self.src).ravel(), (base + self.dst).ravel()])
        out = np.empty((rows * self.n, 3))
        flat = c.reshape(-1, 3)
        for k in range(3):
            out[:, k] = np.bincount(idx, weights=np.concatenate([flat[:, k], -flat[:, k]]), minlength=rows * self.n)
        return out.reshape(shape)

    def gradient(self, x, guard: bool = False) -> np.ndarray:
        return self.cost_and_gradient(x, guard)[1]


def _term(desired) -> FormationTerm:
    if isinstance(desired, FormationTerm):
        return desired
    return FormationTerm(desired)


def _current_positions(current, term: FormationTerm) -> np.ndarray:
    if isinstance(current, FormationGraph):
        if current.edge_set() != term.graph.edge_set():
            raise InvalidInputError("current and desired Laplacians use different edge sets")
        return current.positions
    p = as_positions(current)
    if len(p) != term.n:
        raise InvalidInputError("current and desired formations differ in drone count")
    return p


def formation_cost(current, desired) -> float:
    """Squared Frobenius distance between the current and desired Laplacians.

    ``current`` is an (N, 3) position array or a graph with the same edge set
    as ``desired``; ``desired`` is the desired-formation graph.
    """
    term = _term(desired)
    return float(term.cost(_current_positions(current, term)))


def formation_gradient(current, desired) -> np.ndarray:
    term = _term(desired)
    return term.gradient(_current_positions(current, term))


@dataclass(frozen=True)
class PlanningProblem:
    start: np.ndarray  # (N, 3)
    goal_centroid: np.ndarray  # (3,)
    desired: FormationGraph
    obstacles: ObstacleMap = field(default_factory=ObstacleMap)
    weights: CostWeights = field(default_factory=CostWeights)
    waypoints: int = 30
    dt: float = 1.5
    velocity_limit: float = 2.0
    clearance: float = 0.3

    @property
    def n(self) -> int:
        return len(self.start)


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "lbfgs"
    max_iters: int = 5000
    grad_tol: float = 1e-6
    rel_tol: float = 1e-8


def _smoothness(x: np.ndarray):
    acc = x[2:] - 2.0 * x[1:-1] + x[:-2]
    g = np.zeros_like(x)
    g[2:] += 2 * acc
    g[1:-1] -= 4 * acc
    g[:-2] += 2 * acc
    return float(np.sum(acc**2)), g


def _obstacle_penalty(x: np.ndarray, omap: ObstacleMap):
    g = np.zeros_like(x)
    if not omap.obstacles:
        return 0.0, g
    diff = x[..., None, :2] - omap.centers  # (M, N, O, 2)
    dist = np.sqrt(np.einsum("...k,...k->...", diff, diff))
    gap = np.maximum(omap.radii + omap.margin - dist, 0.0)
    cost = float(np.sum(gap**2))
    coef = -2.0 * gap / np.maximum(dist, COINCIDENT_EPS)
    g[..., :2] = np.einsum("mno,mnok->mnk", coef, diff)
    return cost, g


def _clearance_penalty(x: np.ndarray, clearance: float):
    g = np.zeros_like(x)
    n = x.shape[1]
    if clearance <= 0 or n < 2:
        return 0.0, g
    iu, ju = np.triu_indices(n, 1)
    diff = x[:, iu] - x[:, ju]
    dist = np.sqrt(np.einsum("mpk,mpk->mp", diff, diff))
    gap = np.maximum(clearance - dist, 0.0)
    if not gap.any():
        return 0.0, g
    coef = (-2.0 * gap / np.maximum(dist, COINCIDENT_EPS))[..., None] * diff
    np.add.at(g, (slice(None), iu), coef)
    np.add.at(g, (slice(None), ju), -coef)
    return float(np.sum(gap**2)), g


def _speed_penalty(x: np.ndarray, dt: float, vmax: float):
    g = np.zeros_like(x)
    step = x[1:] - x[:-1]
    length = np.sqrt(np.einsum("mnk,mnk->mn", step, step))
    excess = np.maximum(length / dt - vmax, 0.0)
    if not excess.any():
        return 0.0, g
    coef = (2.0 * excess / dt / np.maximum(length, COINCIDENT_EPS))[..., None] * step
    g[1:] += coef
    g[:-1] -= coef
    return float(np.sum(excess**2)), g


def total_cost_and_gradient(x, problem: PlanningProblem, term: FormationTerm | None = None, parts: dict | None = None):
    """Weighted planner cost and its gradient for a full ``(M, N, 3)`` trajectory.

    The gradient of the fixed first sample is zeroed. ``parts`` collects the
    unweighted term values when given.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 3 or x.shape[1:] != problem.start.shape:
        raise InvalidInputError("trajectory shape does not match the problem")
    w = problem.weights
    total = 0.0
    grad = np.zeros_like(x)

    if w.formation > 0:
        term = term or FormationTerm(problem.desired)
        fc, fg = term.cost_and_gradient(x, guard=True)
        total += w.formation * float(fc.sum())
        grad += w.formation * fg
        if parts is not None:
            parts["formation"] = float(fc.sum())
    for name, weight, fn in (
        ("smooth", w.smooth, lambda: _smoothness(x)),
        ("obstacle", w.collision, lambda: _obstacle_penalty(x, problem.obstacles)),
        ("clearance", w.collision, lambda: _clearance_penalty(x, problem.clearance)),
        ("feasibility", w.feasibility, lambda: _speed_penalty(x, problem.dt, problem.velocity_limit)),
    ):
        if weight > 0:
            c, g = fn()
            total += weight * c
            grad += weight * g
            if parts is not None:
                parts[name] = c
    if w.goal > 0:
        off = x[-1].mean(axis=0) - problem.goal_centroid
        total += w.goal * float(off @ off)
        grad[-1] += w.goal * 2.0 * off / problem.n
        if parts is not None:
            parts["goal"] = float(off @ off)
    # flight time is fixed by (M, dt); the term is constant
    total += w.time * (x.shape[0] - 1) * problem.dt
    grad[0] = 0.0
    return total, grad


def initial_guess(problem: PlanningProblem) -> np.ndarray:
    """Start shape carried along the straight centroid line to the goal."""
    s = np.linspace(0.0, 1.0, problem.waypoints)[:, None, None]
    shift = problem.goal_centroid - problem.start.mean(axis=0)
    return problem.start[None] + s * shift


@dataclass
class PlanStats:
    iterations: int
    t_cpu: float
    initial_cost: float
    final_cost: float
    converged: bool
    message: str = ""
    cost_history: list = field(default_factory=list)


def _gradient_descent(fun, x0, cfg: OptimizerConfig, history: list):
    x = x0.copy()
    f, g = fun(x)
    history.append(f)
    step = 1e-3
    it = 0
    converged = False
    for it in range(1, cfg.max_iters + 1):
        if np.max(np.abs(g)) <= cfg.grad_tol:
            converged = True
            it -= 1
            break
        gg = float(g @ g)
        while True:
            xn = x - step * g
            fn, gn = fun(xn)
            if fn <= f - 1e-4 * step * gg:
                break
            step *= 0.5
            if step < 1e-16:
                return x, f, g, it, False
        x, f, g = xn, fn, gn
        history.append(f)
        step *= 2.0
    else:
        converged = np.max(np.abs(g)) <= cfg.grad_tol
    return x, f, g, it, converged


def plan(problem: PlanningProblem, cfg: OptimizerConfig | None = None, x0=None):
    """Optimize the swarm trajectory; returns ``(SwarmTrajectory, PlanStats)``.

    Hitting ``max_iters`` is not an error: the best iterate is returned with
    ``converged=False``.
    """
    cfg = cfg or OptimizerConfig()
    term = FormationTerm(problem.desired)
    x0 = initial_guess(problem) if x0 is None else np.asarray(x0, dtype=float)
    shape = x0.shape
    fixed = x0[0].copy()

    # decision variables are per-step displacements; waypoints are their
    # running sum, which conditions the smoothness term far better
    def unpack(flat):
        steps = flat.reshape(shape[0] - 1, *shape[1:])
        return np.concatenate([fixed[None], fixed[None] + np.cumsum(steps, axis=0)])

    def fun(flat):
        c, g = total_cost_and_gradient(unpack(flat), problem, term)
        return c, np.cumsum(g[1:][::-1], axis=0)[::-1].ravel()

    history: list = []
    start_vec = np.diff(x0, axis=0).ravel()
    init_cost = fun(start_vec)[0]
    t0 = time.perf_counter()
    if cfg.method == "gd":
        xf, ff, gf, iters, converged = _gradient_descent(fun, start_vec, cfg, history)
        msg = "gradient tolerance reached" if converged else "iteration limit"
    elif cfg.method == "lbfgs":
        history.append(init_cost)
        res = scipy.optimize.minimize(
            fun,
            start_vec,
            jac=True,
            method="L-BFGS-B",
            callback=lambda intermediate_result: history.append(float(intermediate_result.fun)),
            options={"maxiter": cfg.max_iters, "gtol": cfg.grad_tol, "ftol": cfg.rel_tol, "maxcor": 20},
        )
        xf, ff, gf, iters = res.x, float(res.fun), res.jac, int(res.nit)
        converged = bool(res.success) or float(np.max(np.abs(gf))) <= cfg.grad_tol
        msg = str(res.message)
    else:
        raise InvalidInputError(f"unknown optimizer {cfg.method!r}")
    t_cpu = time.perf_counter() - t0
    if not converged:
        log.warning("planner stopped without convergence after %d iterations: %s", iters, msg)
    x = unpack(np.asarray(xf))
    stats = PlanStats(iters, t_cpu, float(init_cost), float(ff), converged, msg, history)
    return SwarmTrajectory(x, problem.dt), stats
