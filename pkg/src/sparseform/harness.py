"""Experiment pipeline: select -> sparsify -> plan -> evaluate, plus the
reproduction studies and their report/plot-data files."""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from sparseform.evaluation import (
    BASELINES,
    average_formation_error,
    baseline_graph,
    relative_error,
    tradeoff_score,
)
from sparseform.graph import FormationGraph, build_complete_graph, coplanarity_check, rigidity_rank
from sparseform.planner import PlanningProblem, SwarmTrajectory, plan
from sparseform.scenario import DEFAULTS, ScenarioSpec, generate_scenario
from sparseform.selector import GaConfig, solve_exhaustive, solve_ga
from sparseform.sparsify import BaseSetSelection, build_sparse_graph, edges_per_drone, repair_coplanar_base

log = logging.getLogger(__name__)

REPORT_COLUMNS = ["method", "n", "rate", "seed", "t_cpu_s", "e_bar_dist", "r_e", "b_c", "converged_at_s", "rigidity_ok"]
METHODS = ("ours",) + BASELINES + ("ours-coplanar", "ours-repaired")
STUDIES = ("metric-comparison", "efficiency-sweep", "benchmark-error", "recovery", "ablation")


@dataclass
class ReportRow:
    method: str
    n: int
    rate: float
    seed: int
    t_cpu_s: float = math.nan
    e_bar_dist: float = math.nan
    r_e: float = math.nan
    b_c: float = math.nan
    converged_at_s: float | None = None
    rigidity_ok: bool = False
    # not part of the CSV schema
    status: str = "ok"
    shape: str = ""
    metric: str = ""
    t_select_s: float = 0.0
    iterations: int = 0
    planner_converged: bool = False
    final_e_dist: float = math.nan
    edge_count: int = 0
    base: list = field(default_factory=list)
    e_dist_series: list = field(default_factory=list)

    def csv_row(self) -> dict:
        out = {k: getattr(self, k) for k in REPORT_COLUMNS}
        out["converged_at_s"] = "" if self.converged_at_s is None else self.converged_at_s
        out["rigidity_ok"] = int(bool(self.rigidity_ok))
        return out

    @property
    def formation_converged(self) -> bool:
        return self.final_e_dist <= 0.65


def select_base(scenario: ScenarioSpec, k: int | None = None, metric: str | None = None,
                ga: GaConfig | None = None, exhaustive: bool = False) -> BaseSetSelection:
    """Optimized base set on the desired formation's complete-graph Laplacian."""
    k = k or edges_per_drone(scenario.n, scenario.connection_rate)
    complete = build_complete_graph(scenario.desired, scenario.squared)
    metric = metric or scenario.metric
    if exhaustive:
        res = solve_exhaustive(complete.laplacian, scenario.desired, k, metric)
    else:
        res = solve_ga(complete.laplacian, scenario.desired, k, metric, ga or scenario.ga)
    return res.selection


def coplanar_base(positions, k: int, rng: np.random.Generator) -> BaseSetSelection:
    """A deliberately coplanar base of ``k`` vertices (for ablation runs).

    Candidate planes pass through vertex triples. Among the planes holding
    the most formation vertices (a face or cross-section of the shape) one is
    chosen at random and ``k`` of its vertices are drawn.
    """
    p = np.asarray(positions, dtype=float)
    scale = np.linalg.norm(p - p.mean(axis=0), axis=1).max()
    planes = {}
    for tri in itertools.combinations(range(len(p)), 3):
        normal = np.cross(p[tri[1]] - p[tri[0]], p[tri[2]] - p[tri[0]])
        norm = np.linalg.norm(normal)
        if norm <= 1e-9 * scale**2:
            continue
        on = tuple(np.nonzero(np.abs((p - p[tri[0]]) @ (normal / norm)) <= 1e-9 * scale)[0].tolist())
        if len(on) >= k:
            planes[on] = True
    if not planes:
        raise ValueError(f"no plane holds {k} formation vertices")
    most = max(len(on) for on in planes)
    members = sorted(on for on in planes if len(on) == most)
    pick = members[int(rng.integers(len(members)))]
    idx = sorted(rng.choice(pick, size=k, replace=False).tolist())
    return BaseSetSelection(tuple(idx), not coplanarity_check(p[idx]))


def build_graph(scenario: ScenarioSpec, method: str, ga: GaConfig | None = None,
                metric: str | None = None) -> tuple[FormationGraph, list]:
    """Graph for ``method`` on the desired formation and the base set used (1-based)."""
    p = scenario.desired
    k = edges_per_drone(scenario.n, scenario.connection_rate)
    if method == "ours":
        base = select_base(scenario, k, metric, ga)
        g = build_sparse_graph(p, base, scenario.squared)
    elif method in ("ours-coplanar", "ours-repaired"):
        base = coplanar_base(p, k, np.random.default_rng(scenario.seed))
        if method == "ours-repaired":
            base = repair_coplanar_base(p, base)
        g = build_sparse_graph(p, base, scenario.squared, allow_coplanar=True)
    elif method in BASELINES:
        g = baseline_graph(method, p, k, scenario.seed, scenario.squared)
        return FormationGraph.from_edges(p, g.edges, scenario.squared, method), []
    else:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    return FormationGraph.from_edges(p, g.edges, scenario.squared, method), base.one_based()


def planning_problem(scenario: ScenarioSpec, graph: FormationGraph) -> PlanningProblem:
    return PlanningProblem(
        start=scenario.start,
        goal_centroid=scenario.goal_centroid,
        desired=graph,
        obstacles=scenario.map,
        weights=scenario.weights,
        waypoints=scenario.waypoints,
        dt=scenario.dt,
        velocity_limit=scenario.velocity_limit,
        clearance=scenario.clearance,
    )


def run_pipeline(scenario: ScenarioSpec, method: str, ga: GaConfig | None = None,
                 metric: str | None = None, keep_trajectory: bool = False):
    """One report row for ``method`` on ``scenario``.

    ``t_cpu_s`` times the planner only; graph construction goes into
    ``t_select_s``. Failures produce a row with ``status`` set instead of
    raising. With ``keep_trajectory`` the planned trajectory is returned too.
    """
    row = ReportRow(method, scenario.n, scenario.connection_rate, scenario.seed,
                    shape=scenario.formation_shape, metric=metric or scenario.metric)
    traj = None
    try:
        t0 = time.perf_counter()
        graph, base = build_graph(scenario, method, ga, metric)
        row.t_select_s = time.perf_counter() - t0
        row.base = base
        row.edge_count = graph.edge_count
        row.rigidity_ok = rigidity_rank(graph) == 3 * scenario.n - 6
        traj, stats = plan(planning_problem(scenario, graph), scenario.optimizer)
        row.t_cpu_s = stats.t_cpu
        row.iterations = stats.iterations
        row.planner_converged = stats.converged
        report = average_formation_error(traj, scenario.desired)
        row.e_bar_dist = report.e_bar_dist
        row.e_dist_series = [float(v) for v in report.e_dist_series]
        row.final_e_dist = float(report.e_dist_series[-1])
        row.converged_at_s = report.converged_at
        row.b_c = tradeoff_score(row.t_cpu_s, row.e_bar_dist)
        if not stats.converged:
            row.status = "planner-not-converged"
    except Exception as exc:  # recorded, never aborts a batch
        log.warning("run %s seed=%d failed: %s", method, scenario.seed, exc)
        row.status = f"failed: {exc}"
    return (row, traj) if keep_trajectory else row


def fill_relative_errors(rows: list) -> list:
    """Set ``r_e`` against the complete-graph row of the same scenario."""
    ref = {(r.shape, r.n, r.seed): r.e_bar_dist for r in rows if r.method == "complete" and not r.status.startswith("failed")}
    for r in rows:
        e_c = ref.get((r.shape, r.n, r.seed))
        if e_c is not None and e_c > 0 and math.isfinite(r.e_bar_dist):
            r.r_e = relative_error(r.e_bar_dist, e_c)
    return rows


def write_report(rows: list, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow(r.csv_row())
    with path.with_suffix(".jsonl").open("w") as fh:
        for r in rows:
            fh.write(json.dumps(asdict(r), default=float) + "\n")
    return path


def read_report(path) -> list:
    with Path(path).open() as fh:
        return list(csv.DictReader(fh))


def write_trajectory(traj: SwarmTrajectory, path) -> Path:
    """Tab-separated ``time, drone_id, x, y, z`` rows; drone ids are 1-based."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write("time\tdrone_id\tx\ty\tz\n")
        for m, t in enumerate(traj.times):
            for i, p in enumerate(traj.waypoints[m]):
                fh.write(f"{t:.9g}\t{i + 1}\t{p[0]:.9g}\t{p[1]:.9g}\t{p[2]:.9g}\n")
    return path


def read_trajectory(path) -> SwarmTrajectory:
    data = np.loadtxt(path, skiprows=1, ndmin=2)
    times = np.unique(data[:, 0])
    n = int(data[:, 1].max())
    x = np.zeros((len(times), n, 3))
    t_index = {t: i for i, t in enumerate(times)}
    for t, d, px, py, pz in data:
        x[t_index[t], int(d) - 1] = (px, py, pz)
    dt = float(times[1] - times[0]) if len(times) > 1 else 1.0
    return SwarmTrajectory(x, dt)


def write_edges(graph: FormationGraph, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write("src\tdst\tweight\n")
        for (i, j), w in zip(graph.edges, graph.weights):
            fh.write(f"{i + 1}\t{j + 1}\t{w:.9g}\n")
    return path


# -- studies -----------------------------------------------------------------

# Desk scale keeps CI-sized instances; paper scale mirrors the published setup.
SCALES = {
    "desk": {
        "metric-comparison": {"shapes": ("cube", "triangular-prism", "octahedron"), "ns": (8, 16, 24), "reps": 5, "rate": 0.3},
        "efficiency-sweep": {"shapes": ("octahedron",), "ns": (24, 48), "reps": 2, "rates": (0.2, 0.3, 0.4, 0.5, 1.0)},
        "benchmark-error": {"shapes": ("octahedron",), "ns": (16,), "reps": 5, "rate": 0.3},
        "recovery": {"shapes": ("octahedron",), "ns": (8, 16), "reps": 3, "rate": 0.3},
        "ablation": {"shapes": ("cube", "triangular-prism", "octahedron"), "ns": (16,), "reps": 7, "rate": 0.3},
        "ga": {"population": 200, "generations": 60},
    },
    "paper": {
        "metric-comparison": {"shapes": ("cube", "triangular-prism", "octahedron"), "ns": (24, 36, 48), "reps": 20, "rate": 0.3},
        "efficiency-sweep": {"shapes": ("cube", "triangular-prism", "octahedron"), "ns": (24, 36, 48, 60, 72), "reps": 20,
                             "rates": (0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 1.0)},
        "benchmark-error": {"shapes": ("octahedron",), "ns": (48,), "reps": 80, "rate": 0.3},
        "recovery": {"shapes": ("octahedron",), "ns": (48,), "reps": 1, "rate": 0.3},
        "ablation": {"shapes": ("cube", "triangular-prism", "octahedron"), "ns": (48,), "reps": 1, "rate": 0.3},
        "ga": {"population": 6000, "generations": 100},
    },
}

RECOVERY_OVERRIDES = {
    "map.obstacle_count": 0,
    "start.scatter_m": 0.5,
    "start.x": 10.0,
    "goal.x": 13.0,
    "plan.dt_s": 0.1,
    "plan.waypoints": 40,
}


@dataclass(frozen=True)
class Job:
    config: tuple
    seed: int
    method: str
    metric: str | None = None


def _run_job(job: Job) -> ReportRow:
    scenario = generate_scenario(dict(job.config), job.seed)
    return run_pipeline(scenario, job.method, metric=job.metric)


def run_jobs(jobs: list, threads: int = 1) -> list:
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_run_job, jobs))
    return [_run_job(j) for j in jobs]


def study_jobs(study: str, scale: str = "desk", base_config: dict | None = None, seed: int = 0,
               reps: int | None = None, ns=None, shapes=None, rates=None, methods=None) -> list:
    if study not in STUDIES:
        raise ValueError(f"unknown study {study!r}; choose from {STUDIES}")
    table = SCALES[scale][study]
    cfg = dict(DEFAULTS)
    cfg.update(base_config or {})
    cfg["select.population"] = SCALES[scale]["ga"]["population"]
    cfg["select.generations"] = SCALES[scale]["ga"]["generations"]
    if study == "recovery":
        cfg.update(RECOVERY_OVERRIDES)
    reps = reps or table["reps"]
    ns = ns or table["ns"]
    shapes = shapes or table["shapes"]
    rates = rates or table.get("rates", (table.get("rate", cfg["swarm.connection_rate"]),))
    metrics = [None]
    if study == "metric-comparison":
        methods = methods or ("ours",)
        metrics = ["min-cond", "max-logdet", "max-min-eig", "max-trace"]
    elif study == "efficiency-sweep":
        methods = methods or ("ours",)
    elif study in ("benchmark-error", "recovery"):
        methods = methods or ("random", "nearest", "ours-wo-opt", "ours", "complete")
    else:
        methods = methods or ("ours-coplanar", "ours-repaired")

    jobs = []
    for shape, n, rate, rep, method, metric in itertools.product(shapes, ns, rates, range(reps), methods, metrics):
        c = dict(cfg)
        c.update({"formation.shape": shape, "swarm.n": n, "swarm.connection_rate": rate})
        jobs.append(Job(tuple(sorted(c.items())), seed + rep, method, metric))
    if study == "efficiency-sweep" and 1.0 in rates:
        # rate 1 runs double as the complete-graph reference for R_e
        jobs = [Job(j.config, j.seed, "complete" if dict(j.config)["swarm.connection_rate"] == 1.0 else j.method, j.metric)
                for j in jobs]
    return jobs


def _aggregate(rows: list, keys) -> list:
    groups: dict = {}
    for r in rows:
        groups.setdefault(tuple(getattr(r, k) for k in keys), []).append(r)
    out = []
    for key, rs in groups.items():
        e = np.array([r.e_bar_dist for r in rs], dtype=float)
        t = np.array([r.t_cpu_s for r in rs], dtype=float)
        re = np.array([r.r_e for r in rs], dtype=float)
        rec = dict(zip(keys, key))
        rec.update({
            "runs": len(rs),
            "e_bar_dist_mean": float(np.nanmean(e)) if np.isfinite(e).any() else math.nan,
            "e_bar_dist_std": float(np.nanstd(e)) if np.isfinite(e).any() else math.nan,
            "t_cpu_mean_s": float(np.nanmean(t)) if np.isfinite(t).any() else math.nan,
            "r_e_mean": float(np.nanmean(re)) if np.isfinite(re).any() else math.nan,
            "converged_frac": float(np.mean([r.formation_converged for r in rs])),
            "rigidity_ok_frac": float(np.mean([bool(r.rigidity_ok) for r in rs])),
        })
        if math.isfinite(rec["t_cpu_mean_s"]) and math.isfinite(rec["e_bar_dist_mean"]):
            rec["b_c"] = tradeoff_score(rec["t_cpu_mean_s"], rec["e_bar_dist_mean"])
        out.append(rec)
    return out


def _write_dicts(records: list, path: Path) -> None:
    if not records:
        return
    cols = list(dict.fromkeys(k for r in records for k in r))
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        w.writerows(records)


def estimate_seconds(jobs: list) -> float:
    # rough desk-hardware model: cost grows with N^2 * waypoints
    total = 0.0
    for j in jobs:
        c = dict(j.config)
        total += 2e-3 * c["swarm.n"] ** 2 * c["plan.waypoints"] / 30
        total += 1e-6 * c["select.population"] * c["select.generations"] * 10
    return total


def reproduce(study: str, scale: str = "desk", out_dir=None, threads: int = 1,
              base_config: dict | None = None, seed: int = 0, **kw) -> list:
    """Run a named study and write ``report.csv`` plus plot-data files."""
    jobs = study_jobs(study, scale, base_config, seed, **kw)
    if scale == "paper":
        warnings.warn(f"paper-scale {study}: {len(jobs)} runs, roughly {estimate_seconds(jobs) / 3600:.1f} h on desk hardware")
    rows = fill_relative_errors(run_jobs(jobs, threads))
    if out_dir is not None:
        out = Path(out_dir) / study
        out.mkdir(parents=True, exist_ok=True)
        write_report(rows, out / "report.csv")
        keys = {
            "metric-comparison": ("shape", "n", "metric"),
            "efficiency-sweep": ("shape", "n", "rate"),
        }.get(study, ("shape", "n", "method"))
        _write_dicts(_aggregate(rows, keys), out / "summary.csv")
        if study == "recovery":
            series = [
                {"method": r.method, "seed": r.seed, "time_s": m * dict(jobs[0].config)["plan.dt_s"], "e_dist": v}
                for r in rows for m, v in enumerate(r.e_dist_series)
            ]
            _write_dicts(series, out / "e_dist_series.csv")
    return rows
