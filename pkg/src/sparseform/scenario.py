"""Scenario configuration, formation shapes and seeded map generation."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from sparseform.errors import InvalidInputError, ScenarioGenerationError
from sparseform.planner import CostWeights, Cylinder, ObstacleMap, OptimizerConfig
from sparseform.selector import GaConfig

SHAPES = ("cube", "triangular-prism", "octahedron", "custom")

DEFAULTS = {
    "map.size_x": 60.0,
    "map.size_y": 20.0,
    "map.size_z": 5.0,
    "map.obstacle_count": 20,
    "map.obstacle_radius_min": 0.5,
    "map.obstacle_radius_max": 1.0,
    "map.margin_m": 0.3,
    "formation.shape": "octahedron",
    "formation.spacing_m": 2.0,
    "formation.points": None,
    "swarm.n": 16,
    "swarm.connection_rate": 0.3,
    "swarm.velocity_limit_mps": 2.0,
    "swarm.clearance_m": 0.3,
    "start.x": 2.0,
    "start.scatter_m": 0.0,
    "goal.x": 58.0,
    "select.metric": "max-trace",
    "select.population": 200,
    "select.generations": 60,
    "select.crossover_prob": 0.4,
    "select.mutation_prob": 0.4,
    "select.seed": 0,
    "plan.optimizer": "lbfgs",
    "plan.max_iters": 5000,
    "plan.grad_tol": 1e-6,
    "plan.dt_s": 1.5,
    "plan.waypoints": 30,
    "weights.formation": 1.0,
    "weights.smooth": 1.0,
    "weights.collision": 100.0,
    "weights.feasibility": 10.0,
    "weights.goal": 10.0,
    "weights.squared_distance": False,
    "seed": 0,
}


def flatten(tree: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the YAML file (nested or dotted keys), then overrides."""
    cfg = dict(DEFAULTS)
    if path is not None:
        text = Path(path).read_text()
        data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise InvalidInputError(f"{path}: expected a mapping at the top level")
        for k, v in flatten(data).items():
            if k not in cfg:
                raise InvalidInputError(f"{path}: unknown config key {k!r}")
            cfg[k] = v
    for k, v in (overrides or {}).items():
        if k not in cfg:
            raise InvalidInputError(f"unknown config key {k!r}")
        cfg[k] = v
    return cfg


def _cube(s):
    h = s / 2
    v = np.array(list(itertools.product((-h, h), repeat=3)))
    # keep a non-coplanar prefix: corners 0, 1, 2 and the opposite corner 7
    v = v[[0, 7, 1, 2, 4, 3, 5, 6]]
    return v


def _prism(s):
    r = s / np.sqrt(3)
    ang = np.deg2rad([90, 210, 330])
    tri = np.c_[r * np.cos(ang), r * np.sin(ang)]
    top = np.c_[tri, np.full(3, s / 2)]
    bottom = np.c_[tri, np.full(3, -s / 2)]
    return np.array([top[0], top[1], top[2], bottom[0], bottom[1], bottom[2]])


def _octahedron(s):
    a = s / np.sqrt(2)
    return np.array([[0, 0, a], [a, 0, 0], [0, a, 0], [-a, 0, 0], [0, -a, 0], [0, 0, -a]], dtype=float)


def shape_vertices(shape: str, spacing: float) -> np.ndarray:
    if spacing <= 0:
        raise InvalidInputError("spacing must be positive")
    builders = {"cube": _cube, "triangular-prism": _prism, "octahedron": _octahedron}
    if shape not in builders:
        raise InvalidInputError(f"unknown formation shape {shape!r}; choose from {SHAPES}")
    return builders[shape](float(spacing))


def _skeleton(vertices: np.ndarray) -> list:
    """Polyhedron edges: vertex pairs at the shortest distances (the side length)."""
    pairs = list(itertools.combinations(range(len(vertices)), 2))
    d = np.array([np.linalg.norm(vertices[i] - vertices[j]) for i, j in pairs])
    side = d.min()
    return [p for p, dist in zip(pairs, d) if dist <= side * (1 + 1e-9)]


def formation_points(shape: str, n: int, spacing: float = 2.0, points=None) -> np.ndarray:
    """Desired formation with ``n`` drones, centered at the origin.

    Polyhedron corners come first; extra drones are spread evenly along the
    skeleton edges, round-robin over edges.
    """
    if shape == "custom":
        if points is None:
            raise InvalidInputError("custom formation needs formation.points")
        p = np.asarray(points, dtype=float)
        if p.shape != (n, 3):
            raise InvalidInputError(f"custom formation must list {n} points")
        return p - p.mean(axis=0)
    v = shape_vertices(shape, spacing)
    if n <= len(v):
        p = v[:n]
    else:
        edges = _skeleton(v)
        extra = n - len(v)
        counts = [extra // len(edges) + (1 if e < extra % len(edges) else 0) for e in range(len(edges))]
        pts = [v]
        for (i, j), c in zip(edges, counts):
            for t in range(1, c + 1):
                frac = t / (c + 1)
                pts.append(((1 - frac) * v[i] + frac * v[j])[None])
        p = np.concatenate(pts)
    return p - p.mean(axis=0)


@dataclass(frozen=True)
class ScenarioSpec:
    map: ObstacleMap
    formation_shape: str
    n: int
    connection_rate: float
    velocity_limit: float
    seed: int
    desired: np.ndarray
    start: np.ndarray
    goal_centroid: np.ndarray
    spacing: float = 2.0
    clearance: float = 0.3
    waypoints: int = 30
    dt: float = 1.5
    squared: bool = False
    weights: CostWeights = CostWeights()
    optimizer: OptimizerConfig = OptimizerConfig()
    metric: str = "max-trace"
    ga: GaConfig = GaConfig()

    def __post_init__(self):
        if self.n < 4:
            raise InvalidInputError("scenario needs at least 4 drones")
        if not 0 < self.connection_rate <= 1:
            raise InvalidInputError("connection rate must lie in (0, 1]")
        if self.velocity_limit <= 0:
            raise InvalidInputError("velocity limit must be positive")


def _place_obstacles(cfg: dict, rng: np.random.Generator, keep_clear: list, radius: float) -> tuple:
    count = int(cfg["map.obstacle_count"])
    rmin, rmax = float(cfg["map.obstacle_radius_min"]), float(cfg["map.obstacle_radius_max"])
    if count and not 0 < rmin <= rmax:
        raise InvalidInputError("obstacle radii must satisfy 0 < min <= max")
    sx, sy = float(cfg["map.size_x"]), float(cfg["map.size_y"])
    margin = float(cfg["map.margin_m"])
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > 1000 * max(count, 1):
            raise ScenarioGenerationError(f"placed only {len(out)} of {count} obstacles with start/goal clearance")
        r = rng.uniform(rmin, rmax)
        c = rng.uniform([r, r], [sx - r, sy - r])
        if any(np.linalg.norm(c - k[:2]) < radius + r + margin + 1.0 for k in keep_clear):
            continue
        out.append(Cylinder(float(c[0]), float(c[1]), float(r)))
    return tuple(out)


def generate_scenario(template: dict, seed: int | None = None) -> ScenarioSpec:
    """Deterministic scenario from a flat config dict and a seed."""
    cfg = dict(DEFAULTS)
    cfg.update(template)
    seed = int(cfg["seed"] if seed is None else seed)
    rng = np.random.default_rng(seed)
    n = int(cfg["swarm.n"])
    shape = str(cfg["formation.shape"])
    spacing = float(cfg["formation.spacing_m"])
    desired = formation_points(shape, n, spacing, cfg.get("formation.points"))
    sy, sz = float(cfg["map.size_y"]), float(cfg["map.size_z"])
    start_c = np.array([float(cfg["start.x"]), sy / 2, sz / 2])
    goal_c = np.array([float(cfg["goal.x"]), sy / 2, sz / 2])
    radius = float(np.linalg.norm(desired, axis=1).max())
    omap = ObstacleMap(
        (float(cfg["map.size_x"]), sy, sz),
        _place_obstacles(cfg, rng, [start_c, goal_c], radius),
        float(cfg["map.margin_m"]),
    )
    start = desired + start_c
    scatter = float(cfg["start.scatter_m"])
    if scatter > 0:
        start = start + rng.normal(scale=scatter, size=start.shape)
    return ScenarioSpec(
        map=omap,
        formation_shape=shape,
        n=n,
        connection_rate=float(cfg["swarm.connection_rate"]),
        velocity_limit=float(cfg["swarm.velocity_limit_mps"]),
        seed=seed,
        desired=desired,
        start=start,
        goal_centroid=goal_c,
        spacing=spacing,
        clearance=float(cfg["swarm.clearance_m"]),
        waypoints=int(cfg["plan.waypoints"]),
        dt=float(cfg["plan.dt_s"]),
        squared=bool(cfg["weights.squared_distance"]),
        weights=CostWeights(
            formation=float(cfg["weights.formation"]),
            smooth=float(cfg["weights.smooth"]),
            collision=float(cfg["weights.collision"]),
            feasibility=float(cfg["weights.feasibility"]),
            goal=float(cfg["weights.goal"]),
        ),
        optimizer=OptimizerConfig(str(cfg["plan.optimizer"]), int(cfg["plan.max_iters"]), float(cfg["plan.grad_tol"])),
        metric=str(cfg["select.metric"]),
        ga=GaConfig(
            population_size=int(cfg["select.population"]),
            generations=int(cfg["select.generations"]),
            crossover_prob=float(cfg["select.crossover_prob"]),
            mutation_prob=float(cfg["select.mutation_prob"]),
            seed=int(cfg["select.seed"]),
        ),
    )

