"""Command-line entry point: ``sparseform <command> [options]``.

Every command reads the scenario from ``--config`` (YAML, nested or dotted
keys) with ``--set key=value`` overrides on top. Index lists, edge lists and
trajectory files use 1-based drone ids.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from sparseform.errors import SparseFormError
from sparseform.evaluation import average_formation_error
from sparseform.harness import (
    METHODS,
    STUDIES,
    Job,
    build_graph,
    fill_relative_errors,
    planning_problem,
    read_trajectory,
    reproduce,
    run_jobs,
    select_base,
    write_edges,
    write_report,
    write_trajectory,
)
from sparseform.metrics import MetricKind
from sparseform.planner import plan
from sparseform.scenario import generate_scenario, load_config

GLOBAL_DEFAULTS = {"config": None, "seed": None, "out": None, "threads": 1, "scale": "desk", "overrides": [], "verbose": 0}


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    # Shared by the top-level parser and every subparser, so flags may appear
    # before or after the command. Subparsers use SUPPRESS so they never
    # overwrite a value given before the command.
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", type=Path, default=d(None), help="scenario YAML file")
    parser.add_argument("--seed", type=int, default=d(None), help="scenario seed (overrides the config)")
    parser.add_argument("--out", type=Path, default=d(None), help="output directory")
    parser.add_argument("--threads", type=int, default=d(1), help="worker processes for batch runs")
    parser.add_argument("--scale", choices=("desk", "paper"), default=d("desk"))
    parser.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE", default=d([]),
                        help="override one config key, e.g. --set swarm.n=24")
    parser.add_argument("-v", "--verbose", action="count", default=d(0))


def _ga_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("base-set selection")
    g.add_argument("--metric", choices=[m.value for m in MetricKind if m is not MetricKind.P2_SPECTRAL])
    g.add_argument("--population", type=int)
    g.add_argument("--generations", type=int)
    g.add_argument("--crossover-prob", type=float)
    g.add_argument("--mutation-prob", type=float)
    g.add_argument("--ga-seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparseform", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        return p

    p = add("select", "print the chosen base set as a 1-based index list")
    _ga_flags(p)
    p.add_argument("--exhaustive", action="store_true", help="enumerate all subsets instead of running the GA")

    p = add("sparsify", "write the edge list of a formation graph")
    _ga_flags(p)
    p.add_argument("--method", choices=METHODS, default="ours")

    p = add("plan", "plan a trajectory and write it as a TSV file")
    _ga_flags(p)
    p.add_argument("--method", choices=METHODS, default="ours")

    p = add("evaluate", "print the formation-error report of a trajectory")
    p.add_argument("trajectory", type=Path, help="trajectory TSV written by 'plan'")
    p.add_argument("--refine", action="store_true", help="refine each alignment toward the sum-of-distances optimum")

    p = add("reproduce", "run one of the reproduction studies")
    p.add_argument("study", choices=STUDIES)
    p.add_argument("--reps", type=int, help="repetitions per cell (default from the scale table)")

    p = add("bench", "run several methods on seeded scenarios and write report.csv")
    _ga_flags(p)
    p.add_argument("--methods", nargs="+", choices=METHODS, default=["random", "nearest", "ours-wo-opt", "ours", "complete"])
    p.add_argument("--reps", type=int, default=1, help="consecutive seeds starting at --seed")
    return parser


def _parse_overrides(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise SparseFormError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = yaml.safe_load(value)
    return out


def _config(args) -> dict:
    overrides = _parse_overrides(args.overrides)
    ga_keys = {
        "metric": "select.metric",
        "population": "select.population",
        "generations": "select.generations",
        "crossover_prob": "select.crossover_prob",
        "mutation_prob": "select.mutation_prob",
        "ga_seed": "select.seed",
    }
    for attr, key in ga_keys.items():
        v = getattr(args, attr, None)
        if v is not None:
            overrides[key] = v
    if args.seed is not None:
        overrides["seed"] = args.seed
    return load_config(args.config, overrides)


def _emit(text: str, args, name: str) -> None:
    if args.out is None:
        sys.stdout.write(text)
        return
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / name).write_text(text)
    print(args.out / name)


def cmd_select(args) -> int:
    scenario = generate_scenario(_config(args))
    base = select_base(scenario, exhaustive=args.exhaustive)
    _emit(" ".join(map(str, base.one_based())) + "\n", args, "base.txt")
    return 0


def cmd_sparsify(args) -> int:
    scenario = generate_scenario(_config(args))
    graph, _ = build_graph(scenario, args.method)
    if args.out is None:
        for (i, j), w in zip(graph.edges, graph.weights):
            print(f"{i + 1}\t{j + 1}\t{w:.9g}")
    else:
        print(write_edges(graph, args.out / "edges.tsv"))
    return 0


def cmd_plan(args) -> int:
    scenario = generate_scenario(_config(args))
    graph, _ = build_graph(scenario, args.method)
    traj, stats = plan(planning_problem(scenario, graph), scenario.optimizer)
    out = args.out or Path(".")
    path = write_trajectory(traj, out / "trajectory.tsv")
    summary = {
        "trajectory": str(path),
        "method": args.method,
        "iterations": stats.iterations,
        "t_cpu_s": stats.t_cpu,
        "final_cost": stats.final_cost,
        "converged": stats.converged,
    }
    print(json.dumps(summary, indent=2))
    return 0 if stats.converged else 3


def cmd_evaluate(args) -> int:
    scenario = generate_scenario(_config(args))
    traj = read_trajectory(args.trajectory)
    if traj.n != scenario.n:
        raise SparseFormError(f"trajectory has {traj.n} drones but the scenario has {scenario.n}")
    report = average_formation_error(traj, scenario.desired, refine=args.refine)
    _emit(json.dumps(report.as_dict(), indent=2) + "\n", args, "error_report.json")
    return 0


def cmd_reproduce(args) -> int:
    base = dict(_config(args))
    seed = int(base["seed"])
    rows = reproduce(args.study, args.scale, args.out or Path("results"), args.threads, base, seed, reps=args.reps)
    failed = sum(r.status.startswith("failed") for r in rows)
    print(f"{args.study}: {len(rows)} runs, {failed} failed, report in {(args.out or Path('results')) / args.study}")
    return 0


def cmd_bench(args) -> int:
    cfg = _config(args)
    seed = int(cfg["seed"])
    items = tuple(sorted(cfg.items()))
    jobs = [Job(items, seed + r, m) for r in range(args.reps) for m in args.methods]
    rows = fill_relative_errors(run_jobs(jobs, args.threads))
    path = write_report(rows, (args.out or Path(".")) / "report.csv")
    for r in rows:
        print(f"{r.method:14s} seed={r.seed:<4d} t_cpu={r.t_cpu_s:8.3f}s e_bar={r.e_bar_dist:.4f} {r.status}")
    print(path)
    return 0


COMMANDS = {
    "select": cmd_select,
    "sparsify": cmd_sparsify,
    "plan": cmd_plan,
    "evaluate": cmd_evaluate,
    "reproduce": cmd_reproduce,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for k, v in GLOBAL_DEFAULTS.items():
        if not hasattr(args, k):
            setattr(args, k, v)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("sparseform: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except (SparseFormError, OSError) as exc:
        print(f"sparseform: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
