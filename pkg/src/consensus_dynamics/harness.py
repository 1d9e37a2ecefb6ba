"""Scenario generators and the experiment runner.

The figure topologies (ring, bridged clusters, battle grid) are
reconstructions: sizes and link placements are parameters, not data.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .deterministic import (
    decay_rate,
    fit_decay_rate,
    integrate,
    integrate_on_grid,
    default_horizon,
    write_trajectory_csv,
    write_variance_csv,
)
from .graph import (
    WeightedDigraph,
    GraphError,
    build_laplacian,
    connectivity_kind,
    decompose,
    format_edgelist,
    is_balanced,
    is_symmetric,
    predicts_unconditional_consensus,
    read_graph,
    undirected_shape_connected,
)
from .spectral import predict_limit, spectrum
from .stochastic import monte_carlo, write_batch_csv

__all__ = [
    "Scenario",
    "ConfigError",
    "ExperimentConfig",
    "make_ring",
    "make_bridged_clusters",
    "make_fan_in",
    "make_battle",
    "make_scenario",
    "SCENARIOS",
    "influence_distance",
    "analyze",
    "run_experiment",
]


class ConfigError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    graph: WeightedDigraph
    s0: np.ndarray
    expected: dict = field(default_factory=dict)

    def __post_init__(self):
        self.s0 = np.asarray(self.s0, dtype=float)
        if self.s0.shape != (self.graph.n_nodes,):
            raise ValueError(f"scenario {self.name!r}: s0 has {self.s0.size} entries, "
                             f"graph has {self.graph.n_nodes} nodes")


def _symmetric_edges(pairs):
    out = []
    for a, b in pairs:
        out.append((a, b, 1.0))
        out.append((b, a, 1.0))
    return out


def make_ring(n, k):
    """Circulant graph: each node linked both ways to its k nearest neighbours per side."""
    if n < 3 or not 1 <= k < n / 2:
        raise ValueError(f"make_ring needs n >= 3 and 1 <= k < n/2 (got n={n}, k={k})")
    pairs = [(i, (i + d) % n) for i in range(n) for d in range(1, k + 1)]
    return WeightedDigraph(n, tuple(_symmetric_edges(pairs)))


def ring_lambda2(n, k):
    """Closed-form second eigenvalue of :func:`make_ring`."""
    return sum(2 - 2 * math.cos(2 * math.pi * d / n) for d in range(1, k + 1))


def make_bridged_clusters(m):
    """Two complete m-cliques (nodes 0..m-1, m..2m-1) joined by the edge m-1 <-> m."""
    if m < 2:
        raise ValueError("make_bridged_clusters needs m >= 2")
    pairs = [(a, b) for a in range(m) for b in range(a + 1, m)]
    pairs += [(m + a, m + b) for a, b in pairs]
    pairs.append((m - 1, m))
    return WeightedDigraph(2 * m, tuple(_symmetric_edges(pairs)))


def make_fan_in():
    """Three agents; agent 2 listens to agents 0 and 1 at equal rates."""
    return WeightedDigraph(3, ((2, 0, 1.0), (2, 1, 1.0)))


def make_battle(core_w=20, core_h=10, block_size=5, links_per_side=3, seed=0):
    """Two leader blocks pulling on a symmetric grid from opposite sides.

    Grid node ``(r, c)`` is ``r * core_w + c``. The left block (opinion -1)
    feeds column 0, the right block (opinion +1) feeds column ``core_w - 1``,
    through ``links_per_side`` one-way unit edges on evenly spaced rows. Grid
    opinions are uniform on [-1, 1].
    """
    if min(core_w, core_h, block_size, links_per_side) < 1:
        raise ValueError("make_battle dimensions must be positive")
    if links_per_side > core_h:
        raise ValueError("links_per_side cannot exceed core_h")
    n_grid = core_w * core_h
    pairs = []
    for r in range(core_h):
        for c in range(core_w):
            v = r * core_w + c
            if c + 1 < core_w:
                pairs.append((v, v + 1))
            if r + 1 < core_h:
                pairs.append((v, v + core_w))
    left = list(range(n_grid, n_grid + block_size))
    right = list(range(n_grid + block_size, n_grid + 2 * block_size))
    for block in (left, right):
        pairs += [(a, b) for x, a in enumerate(block) for b in block[x + 1:]]
    edges = _symmetric_edges(pairs)
    rows = [int((k + 0.5) * core_h / links_per_side) for k in range(links_per_side)]
    for k, r in enumerate(rows):
        edges.append((r * core_w, left[k % block_size], 1.0))
        edges.append((r * core_w + core_w - 1, right[k % block_size], 1.0))
    g = WeightedDigraph(n_grid + 2 * block_size, tuple(edges))

    rng = np.random.default_rng(seed)
    s0 = np.empty(g.n_nodes)
    s0[:n_grid] = rng.uniform(-1.0, 1.0, n_grid)
    s0[left] = -1.0
    s0[right] = 1.0
    expected = {
        "n_isolated": 2,
        "isolated_blocks": [left, right],
        "grid_nodes": list(range(n_grid)),
        "unconditional_consensus": False,
    }
    return Scenario("battle", g, s0, expected)


def _random_s0(n, seed):
    return np.random.default_rng(seed).uniform(-1.0, 1.0, n)


def _ring_scenario(n=20, k=2, seed=0):
    return Scenario("ring", make_ring(n, k), _random_s0(n, seed),
                    {"n_isolated": 1, "unconditional_consensus": True,
                     "lambda2": ring_lambda2(n, k)})


def _bridged_scenario(m=10, seed=0):
    return Scenario("bridged", make_bridged_clusters(m), _random_s0(2 * m, seed),
                    {"n_isolated": 1, "unconditional_consensus": True})


def _fan_in_scenario(a=-1.0, b=1.0, c=0.0):
    return Scenario("fan-in", make_fan_in(), [a, b, c],
                    {"n_isolated": 2, "unconditional_consensus": False})


SCENARIOS = {
    "ring": _ring_scenario,
    "bridged": _bridged_scenario,
    "battle": make_battle,
    "fan-in": _fan_in_scenario,
}


def make_scenario(name, **params):
    try:
        factory = SCENARIOS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
    try:
        return factory(**params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad parameters for scenario {name!r}: {exc}") from None


def influence_distance(g, sources):
    """Number of influence hops from the nearest source to every node (inf if unreachable)."""
    dist = np.full(g.n_nodes, np.inf)
    queue = deque()
    for s in sources:
        dist[s] = 0
        queue.append(s)
    while queue:
        v = queue.popleft()
        for w in g.followers[v]:
            if dist[w] == np.inf:
                dist[w] = dist[v] + 1
                queue.append(w)
    return dist


def analyze(g, s0=None):
    """Structure, spectrum and consensus prediction as a JSON-ready dict."""
    d = decompose(g)
    lap = build_laplacian(g)
    spec = spectrum(lap)
    out = {
        "n_nodes": g.n_nodes,
        "n_edges": g.n_edges,
        "symmetric": is_symmetric(g),
        "balanced": is_balanced(g),
        "connectivity": connectivity_kind(g, d).value,
        "undirected_shape_connected": undirected_shape_connected(g),
        "decomposition": d.to_dict(),
        "n_isolated": d.n_isolated,
        "unconditional_consensus": predicts_unconditional_consensus(d),
        "spectrum": spec.to_dict(),
    }
    if s0 is not None:
        out["predicted_limit"] = predict_limit(lap, s0, spec).tolist()
    return out


# ---------------------------------------------------------------------------
# Experiments

MODELS = ("deterministic", "stochastic", "both")


@dataclass
class ExperimentConfig:
    scenario: str | None = None
    params: dict = field(default_factory=dict)
    graph: str | None = None  # path to a graph file, instead of a scenario
    s0: list | None = None
    model: str = "both"
    t_end: float | None = None
    dt: float | None = None
    reps: int = 1000
    seed: int = 0
    grid_points: int = 101

    def __post_init__(self):
        if (self.scenario is None) == (self.graph is None):
            raise ConfigError("config needs exactly one of 'scenario' or 'graph'")
        if self.graph is not None and self.s0 is None:
            raise ConfigError("'s0' is required with 'graph'")
        if self.model not in MODELS:
            raise ConfigError(f"'model' must be one of {MODELS}, got {self.model!r}")
        if self.t_end is not None and not self.t_end > 0:
            raise ConfigError("'t_end' must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("'dt' must be positive")
        if not isinstance(self.reps, int) or self.reps < 2:
            raise ConfigError("'reps' must be an integer >= 2")
        if not isinstance(self.grid_points, int) or self.grid_points < 2:
            raise ConfigError("'grid_points' must be an integer >= 2")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("'seed' must be a non-negative integer")

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**doc)

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid config JSON at line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(doc)

    def to_dict(self):
        return dataclasses.asdict(self)

    def load_scenario(self):
        if self.scenario is not None:
            sc = make_scenario(self.scenario, **self.params)
            if self.s0 is not None:
                sc = Scenario(sc.name, sc.graph, self.s0, sc.expected)
            return sc
        try:
            g = read_graph(self.graph)
        except OSError as exc:
            raise ConfigError(f"cannot read graph {self.graph!r}: {exc}") from None
        return Scenario(os.path.basename(self.graph), g, self.s0)


def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _versions():
    import numba
    import scipy

    return {"consensus_dynamics": __version__, "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def _safe_rate(fn, *args):
    try:
        fit = fn(*args)
    except ValueError as exc:
        return {"rate": None, "error": str(exc)}
    return {"rate": fit.rate, "floor_detected": fit.floor_detected, "window": list(fit.window)}


def run_experiment(config, out_dir):
    """Run one configured experiment and write its files into ``out_dir``.

    Returns a dict mapping output names to file paths. All outputs are a
    deterministic function of the config.
    """
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    try:
        sc = config.load_scenario()
    except (GraphError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    g, s0 = sc.graph, sc.s0
    lap = build_laplacian(g)
    spec = spectrum(lap)
    if config.t_end is not None:
        t_end = float(config.t_end)
    else:
        try:
            t_end = default_horizon(spec)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    grid = np.linspace(0.0, t_end, config.grid_points)

    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    def out(name):
        paths[name] = os.path.join(out_dir, name)
        return paths[name]

    _dump_json(out("manifest.json"), {
        "config": config.to_dict(),
        "t_end": t_end,
        "master_seed": config.seed,
        "replicate_streams": "Philox(SeedSequence(master_seed, spawn_key=(replicate,)))",
        "versions": _versions(),
    })
    with open(out("graph.txt"), "w") as fh:
        fh.write(format_edgelist(g))
    _dump_json(out("scenario.json"), {"name": sc.name, "s0": s0.tolist(), "expected": sc.expected})
    analysis = analyze(g, s0)
    _dump_json(out("analysis.json"), analysis)

    summary = {"lambda2": spec.lambda2, "t_end": t_end,
               "unconditional_consensus": analysis["unconditional_consensus"],
               "predicted_limit": analysis["predicted_limit"]}
    v0 = float(np.var(s0))

    if config.model in ("deterministic", "both"):
        traj = integrate(lap, s0, t_end, config.dt)
        traj.meta["graph"] = g.digest()
        write_trajectory_csv(out("det_trajectory.csv"), traj, out("det_trajectory.meta.json"))
        write_variance_csv(out("det_variance.csv"), traj.times, traj.variances)
        summary["deterministic_rate"] = _safe_rate(fit_decay_rate, traj)

    if config.model in ("stochastic", "both"):
        batch = monte_carlo(g, s0, grid, config.reps, config.seed)
        write_batch_csv(out("mc_batch.csv"), batch)
        summary["stochastic_rate"] = _safe_rate(decay_rate, grid, batch.variance_estimate)
        summary["final_absorbed_fraction"] = float(batch.absorbed_fraction[-1])

    if config.model == "both":
        det = integrate_on_grid(lap, s0, grid, config.dt)
        det_v = det.variances
        if analysis["symmetric"] and spec.lambda2 is not None:
            bound = np.exp(-spec.lambda2 * grid / g.n_nodes) * v0
        else:
            bound = np.full(grid.size, np.nan)
        with open(out("comparison.csv"), "w") as fh:
            fh.write("t,det_variance,mc_variance,mc_variance_se,bound\n")
            for row in zip(grid, det_v, batch.variance_estimate, batch.variance_se, bound):
                fh.write(",".join(repr(float(x)) for x in row) + "\n")
        r_sto = summary["stochastic_rate"]["rate"]
        r_det = summary["deterministic_rate"]["rate"]
        summary["stochastic_slower_than_deterministic"] = (
            None if r_sto is None or r_det is None else bool(r_sto < r_det))

    _dump_json(out("summary.json"), summary)
    return paths
