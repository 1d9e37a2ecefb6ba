"""Command line entry point: ``consensus-dynamics <command> ...``.

Exit status is 0 on success, 2 on invalid input, 1 on runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .control import SteeringError, plan_steering
from .deterministic import integrate, write_trajectory_csv, write_variance_csv
from .graph import GraphError, build_laplacian, format_edgelist, read_graph
from .harness import SCENARIOS, ConfigError, ExperimentConfig, analyze, make_scenario, run_experiment
from .spectral import predict_limit, spectrum
from .stochastic import monte_carlo, simulate, write_batch_csv, write_events_csv


class UsageError(ValueError):
    pass


def _parse_s0(spec, n, seed):
    if spec is None:
        raise UsageError("--s0 is required")
    if spec == "random":
        return np.random.default_rng(seed).uniform(-1.0, 1.0, n)
    if spec.startswith("@"):
        try:
            with open(spec[1:]) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read initial state {spec[1:]!r}: {exc}") from None
        values = doc["s0"] if isinstance(doc, dict) else doc
    else:
        try:
            values = [float(x) for x in spec.split(",")]
        except ValueError:
            raise UsageError(f"--s0 must be comma-separated numbers, @file.json or 'random'") from None
    s0 = np.asarray(values, dtype=float)
    if n is not None and s0.shape != (n,):
        raise UsageError(f"--s0 has {s0.size} values but the graph has {n} nodes")
    return s0


def _emit_json(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_analyze(args):
    g = read_graph(args.graph)
    s0 = None if args.s0 is None else _parse_s0(args.s0, g.n_nodes, args.seed)
    _emit_json(analyze(g, s0), args.out)


def cmd_simulate_det(args):
    g = read_graph(args.graph)
    s0 = _parse_s0(args.s0, g.n_nodes, args.seed)
    lap = build_laplacian(g)
    t_end = args.t_end
    if t_end is None:
        lam2 = spectrum(lap).lambda2
        if lam2 is None:
            raise UsageError("graph has no nonzero eigenvalue; pass --t-end")
        t_end = 40.0 / lam2
    traj = integrate(lap, s0, t_end, args.dt)
    traj.meta["graph"] = g.digest()
    os.makedirs(args.out, exist_ok=True)
    if args.format == "json":
        _emit_json({"times": traj.times.tolist(), "states": traj.states.tolist(),
                    "variance": traj.variances.tolist(), "meta": traj.meta},
                   os.path.join(args.out, "trajectory.json"))
    else:
        write_trajectory_csv(os.path.join(args.out, "trajectory.csv"), traj,
                             os.path.join(args.out, "trajectory.meta.json"))
        write_variance_csv(os.path.join(args.out, "variance.csv"), traj.times, traj.variances)


def cmd_simulate_sto(args):
    g = read_graph(args.graph)
    s0 = _parse_s0(args.s0, g.n_nodes, args.seed)
    if args.t_end is None:
        raise UsageError("--t-end is required for stochastic simulation")
    os.makedirs(args.out, exist_ok=True)
    if args.reps == 1:
        traj = simulate(g, s0, args.t_end, args.seed)
        if args.format == "json":
            _emit_json({"events": [[float(t), int(i), int(j)] for t, i, j in
                                   zip(traj.times, traj.i, traj.j)],
                        "initial": traj.initial.tolist(), "final": traj.final.tolist(),
                        "absorbed_at": traj.absorbed_at, "frozen_at": traj.frozen_at},
                       os.path.join(args.out, "events.json"))
        else:
            write_events_csv(os.path.join(args.out, "events.csv"), traj,
                             os.path.join(args.out, "initial.json"))
        return
    grid = np.linspace(0.0, args.t_end, args.grid_points)
    batch = monte_carlo(g, s0, grid, args.reps, args.seed)
    if args.format == "json":
        _emit_json({"grid": grid.tolist(), "mean": batch.mean_estimate.tolist(),
                    "mean_se": batch.mean_se.tolist(),
                    "variance": batch.variance_estimate.tolist(),
                    "se_variance": batch.variance_se.tolist(),
                    "absorbed_fraction": batch.absorbed_fraction.tolist(),
                    "n_reps": batch.n_reps, "seed": batch.seed},
                   os.path.join(args.out, "batch.json"))
    else:
        write_batch_csv(os.path.join(args.out, "batch.csv"), batch)


def cmd_compare(args):
    g = read_graph(args.graph)
    s0 = _parse_s0(args.s0, g.n_nodes, args.seed)
    config = ExperimentConfig(graph=args.graph, s0=s0.tolist(), model="both", t_end=args.t_end,
                              dt=args.dt, reps=args.reps, seed=args.seed,
                              grid_points=args.grid_points)
    run_experiment(config, args.out)


def cmd_steer(args):
    s0 = _parse_s0(args.s0, None, args.seed)
    plan = plan_steering(s0, args.target)
    lap = build_laplacian(plan.graph)
    spec = spectrum(lap)
    report = {
        "target": plan.target,
        "alpha": plan.alpha,
        "beta": plan.beta,
        "i_max": plan.i_max,
        "i_min": plan.i_min,
        "predicted_limit": predict_limit(lap, s0, spec).tolist(),
        "lambda2": spec.lambda2,
    }
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "graph.txt"), "w") as fh:
            fh.write(format_edgelist(plan.graph))
        _emit_json(report, os.path.join(args.out, "report.json"))
    else:
        sys.stdout.write(format_edgelist(plan.graph))
        _emit_json(report, None)


def _coerce(value):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def cmd_scenario(args):
    params = {}
    for item in args.param:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects key=value, got {item!r}")
        params[key.replace("-", "_")] = _coerce(value)
    sc = make_scenario(args.name, **params)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "graph.txt"), "w") as fh:
        fh.write(format_edgelist(sc.graph))
    _emit_json({"name": sc.name, "params": params, "s0": sc.s0.tolist(),
                "expected": sc.expected}, os.path.join(args.out, "scenario.json"))


def cmd_run(args):
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config!r}: {exc}") from None
    run_experiment(ExperimentConfig.from_json(text), args.out)


def build_parser():
    p = argparse.ArgumentParser(prog="consensus-dynamics",
                                description="Consensus dynamics on weighted digraphs.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, graph=True):
        if graph:
            sp.add_argument("graph", help="edge-list or JSON graph file")
        sp.add_argument("--s0", help="initial opinions: 'v0,v1,...', @file.json or 'random'")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--format", choices=("csv", "json"), default="csv")

    sp = sub.add_parser("analyze", help="block decomposition, spectrum and consensus prediction")
    common(sp)
    sp.add_argument("--out", help="write JSON here instead of stdout")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("simulate-det", help="integrate the deterministic model")
    common(sp)
    sp.add_argument("--t-end", type=float)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--out", default="out")
    sp.set_defaults(func=cmd_simulate_det)

    sp = sub.add_parser("simulate-sto", help="simulate the stochastic model")
    common(sp)
    sp.add_argument("--t-end", type=float)
    sp.add_argument("--reps", type=int, default=1)
    sp.add_argument("--grid-points", type=int, default=101)
    sp.add_argument("--out", default="out")
    sp.set_defaults(func=cmd_simulate_sto)

    sp = sub.add_parser("compare", help="deterministic vs Monte-Carlo variance decay")
    common(sp)
    sp.add_argument("--t-end", type=float)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--reps", type=int, default=1000)
    sp.add_argument("--grid-points", type=int, default=101)
    sp.add_argument("--out", default="out")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("steer", help="build a graph steering consensus to a target")
    common(sp, graph=False)
    sp.add_argument("--target", type=float, required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_steer)

    sp = sub.add_parser("scenario", help="generate a named scenario")
    sp.add_argument("name", choices=sorted(SCENARIOS))
    sp.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    sp.add_argument("--out", default="out")
    sp.set_defaults(func=cmd_scenario)

    sp = sub.add_parser("run", help="run an experiment from a JSON config")
    sp.add_argument("config")
    sp.add_argument("--out", default="out")
    sp.set_defaults(func=cmd_run)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (GraphError, ConfigError, SteeringError, UsageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
