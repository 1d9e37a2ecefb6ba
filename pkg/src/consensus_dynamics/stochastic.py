"""Stochastic consensus model: agent i copies agent j at rate a_ij.

Exact event simulation, the embedded jump chain, Monte-Carlo replicate
batches and an exact absorbing-chain solver for small graphs.
"""

from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from . import _kernels
from .deterministic import variance

__all__ = [
    "JumpTrajectory",
    "ReplicateBatch",
    "ExactChainResult",
    "StateSpaceTooLarge",
    "replicate_rng",
    "simulate",
    "simulate_embedded",
    "monte_carlo",
    "exact_chain",
    "write_events_csv",
    "read_events_csv",
    "write_batch_csv",
    "read_batch_csv",
]


class StateSpaceTooLarge(RuntimeError):
    pass


def replicate_rng(master_seed, index):
    """Independent counter-based stream for replicate ``index``.

    Philox keyed by ``SeedSequence(master_seed, spawn_key=(index,))``: the
    stream depends only on the pair, never on how many replicates run or
    in which order.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(seq))


def _edge_arrays(g):
    i, j, w = g.edge_arrays()
    return np.ascontiguousarray(i), np.ascontiguousarray(j), np.ascontiguousarray(w)


def _check_state(g, s0):
    s0 = np.array(s0, dtype=float)
    if s0.shape != (g.n_nodes,):
        raise ValueError(f"initial state has shape {s0.shape}, expected ({g.n_nodes},)")
    if not np.all(np.isfinite(s0)):
        raise ValueError("initial state must be finite")
    return s0


def _is_consensus(s):
    return bool(np.all(s == s[0]))


@dataclass
class JumpTrajectory:
    """Event log ``(times[k], i[k], j[k])``: S_i took the value of S_j."""

    times: np.ndarray
    i: np.ndarray
    j: np.ndarray
    initial: np.ndarray
    final: np.ndarray
    t_end: float
    absorbed_at: float | None  # first time all opinions agree
    frozen_at: float | None  # first time no event can change the state

    @property
    def n_events(self):
        return self.times.size

    def replay(self, upto=None):
        """State after all events with time <= ``upto`` (default: all)."""
        s = self.initial.copy()
        for t, a, b in zip(self.times, self.i, self.j):
            if upto is not None and t > upto:
                break
            s[a] = s[b]
        return s

    def states_at(self, grid):
        """Piecewise-constant readout on an increasing grid."""
        grid = np.asarray(grid, dtype=float)
        out = np.empty((grid.size, self.initial.size))
        s = self.initial.copy()
        e = 0
        for k, g in enumerate(grid):
            while e < self.times.size and self.times[e] <= g:
                s[self.i[e]] = s[self.j[e]]
                e += 1
            out[k] = s
        return out


def _simulate_with(g, s0, t_end, rng):
    dst, src, rate = _edge_arrays(g)
    state = s0.copy()
    no_grid = np.zeros(0)
    no_out = np.zeros((0, s0.size))
    cap = 1024
    chunks = []
    t = 0.0
    while True:
        ev_t = np.empty(cap)
        ev_i = np.empty(cap, np.int64)
        ev_j = np.empty(cap, np.int64)
        t, _, n, status = _kernels.run_jumps(
            dst, src, rate, state, t, t_end, no_grid, no_out, 0, ev_t, ev_i, ev_j, True, rng
        )
        chunks.append((ev_t[:n], ev_i[:n], ev_j[:n]))
        if status != _kernels.BUFFER_FULL:
            break
        cap = min(cap * 2, 1 << 22)
    times = np.concatenate([c[0] for c in chunks])
    ii = np.concatenate([c[1] for c in chunks])
    jj = np.concatenate([c[2] for c in chunks])
    frozen_at = t if status == _kernels.FROZEN else None
    absorbed_at = frozen_at if frozen_at is not None and _is_consensus(state) else None
    return JumpTrajectory(times, ii, jj, s0.copy(), state, float(t_end), absorbed_at, frozen_at)


def simulate(g, s0, t_end, seed):
    """Exact (Gillespie) simulation up to ``t_end``.

    Copy events between equal opinions change nothing and are thinned out,
    so every recorded event changes the state. Once no event can change the
    state the run stops; the state is constant from then on. Uses the same
    stream as replicate 0 of :func:`monte_carlo` with ``master_seed=seed``.
    """
    s0 = _check_state(g, s0)
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    return _simulate_with(g, s0, float(t_end), replicate_rng(seed, 0))


def simulate_embedded(g, s0, max_steps, seed):
    """Embedded jump chain: each step applies edge (i, j) with prob a_ij / sigma.

    ``sigma`` is the total rate over all edges, so steps between equal
    opinions are kept (and change nothing). Returns ``max_steps + 1`` states.
    """
    s0 = _check_state(g, s0)
    if max_steps < 0:
        raise ValueError("max_steps must be non-negative")
    out = np.empty((max_steps + 1, s0.size))
    out[0] = s0
    if g.n_edges == 0:
        out[1:] = s0
        return out
    dst, src, rate = _edge_arrays(g)
    rng = replicate_rng(seed, 0)
    picks = rng.choice(rate.size, size=max_steps, p=rate / rate.sum())
    s = s0.copy()
    for k, e in enumerate(picks, start=1):
        s[dst[e]] = s[src[e]]
        out[k] = s
    return out


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass
class ReplicateBatch:
    n_reps: int
    seed: int
    grid: np.ndarray  # (K,)
    mean_estimate: np.ndarray  # (K, N)  E[S_i(t)]
    mean_se: np.ndarray  # (K, N)
    variance_estimate: np.ndarray  # (K,)  E[V(S(t))]
    variance_se: np.ndarray  # (K,)
    absorbed_fraction: np.ndarray  # (K,)  fraction of replicates at consensus
    frozen_fraction: np.ndarray  # (K,)
    samples: np.ndarray | None = None  # (n_reps, K, N) when kept

    @property
    def standard_errors(self):
        return self.mean_se, self.variance_se


def _frozen_rows(dst, src, states):
    if dst.size == 0:
        return np.ones(states.shape[:-1], bool)
    return np.all(states[..., dst] == states[..., src], axis=-1)


def monte_carlo(g, s0, grid, n_reps, master_seed, keep_samples=False):
    """Run ``n_reps`` independent replicates and aggregate them on ``grid``.

    Replicate r uses ``replicate_rng(master_seed, r)``; each replicate's
    state at a grid time is read off its exact event sequence.
    """
    s0 = _check_state(g, s0)
    if n_reps < 2:
        raise ValueError("n_reps must be at least 2")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be non-negative and strictly increasing")
    dst, src, rate = _edge_arrays(g)
    t_end = float(grid[-1])
    samples = np.empty((n_reps, grid.size, s0.size))
    no_t, no_i, no_j = _kernels.empty_events()
    for r in range(n_reps):
        state = s0.copy()
        _kernels.run_jumps(dst, src, rate, state, 0.0, t_end, grid, samples[r], 0,
                           no_t, no_i, no_j, False, replicate_rng(master_seed, r))

    root_n = math.sqrt(n_reps)
    v = variance(samples)  # (n_reps, K)
    consensus = np.all(samples == samples[..., :1], axis=-1)
    frozen = _frozen_rows(dst, src, samples)
    return ReplicateBatch(
        n_reps=n_reps,
        seed=int(master_seed),
        grid=grid.copy(),
        mean_estimate=samples.mean(axis=0),
        mean_se=samples.std(axis=0, ddof=1) / root_n,
        variance_estimate=v.mean(axis=0),
        variance_se=v.std(axis=0, ddof=1) / root_n,
        absorbed_fraction=consensus.mean(axis=0),
        frozen_fraction=frozen.mean(axis=0),
        samples=samples if keep_samples else None,
    )


# ---------------------------------------------------------------------------
# Exact chain


@dataclass
class ExactChainResult:
    values: np.ndarray  # distinct initial opinions; states index into this
    n_states: int  # reachable states
    absorbing_states: list  # tuples of opinion values with p_SS = 1
    absorption_probabilities: np.ndarray  # aligned with absorbing_states
    is_absorbing_chain: bool  # every reachable state can reach an absorbing state
    expected_final: np.ndarray | None  # E[S*] per node, when absorption is certain

    @property
    def total_absorption(self):
        return float(self.absorption_probabilities.sum())

    @property
    def consensus_probability(self):
        return float(sum(p for s, p in zip(self.absorbing_states, self.absorption_probabilities)
                         if len(set(s)) == 1))


def exact_chain(g, s0, max_states=10**6):
    """Absorption probabilities of the embedded chain, by exact linear solve.

    States are N-tuples over the distinct initial opinions; the reachable
    set is explored breadth-first from ``s0``.
    """
    s0 = _check_state(g, s0)
    n = g.n_nodes
    if n > 8:
        raise StateSpaceTooLarge(f"exact chain limited to N <= 8 (got {n}); use monte_carlo")
    values, start = np.unique(s0, return_inverse=True)
    start = tuple(int(x) for x in start)
    dst, src, rate = _edge_arrays(g)
    sigma = rate.sum()

    index = {start: 0}
    states = [start]
    rows, cols, probs = [], [], []
    absorbing = []
    queue = deque([start])
    while queue:
        s = queue.popleft()
        a = index[s]
        stay = 0.0
        moves = {}
        for d, c, w in zip(dst, src, rate):
            if s[d] == s[c]:
                stay += w
                continue
            t = s[:d] + (s[c],) + s[d + 1:]
            moves[t] = moves.get(t, 0.0) + w
        if not moves:
            absorbing.append(a)
            continue
        for t, w in moves.items():
            b = index.get(t)
            if b is None:
                if len(states) >= max_states:
                    raise StateSpaceTooLarge(
                        f"reachable state space exceeds {max_states}; use monte_carlo")
                b = index[t] = len(states)
                states.append(t)
                queue.append(t)
            rows.append(a)
            cols.append(b)
            probs.append(w / sigma)
        if stay:
            rows.append(a)
            cols.append(a)
            probs.append(stay / sigma)

    m = len(states)
    p = scipy.sparse.csr_matrix((probs, (rows, cols)), shape=(m, m))

    # states from which some absorbing state is reachable
    back = p.T.tocsr()
    can_absorb = np.zeros(m, bool)
    can_absorb[absorbing] = True
    queue = deque(absorbing)
    while queue:
        b = queue.popleft()
        for a in back.indices[back.indptr[b]:back.indptr[b + 1]]:
            if not can_absorb[a]:
                can_absorb[a] = True
                queue.append(a)

    is_abs = np.zeros(m, bool)
    is_abs[absorbing] = True
    transient = np.flatnonzero(can_absorb & ~is_abs)
    probs_abs = np.zeros(len(absorbing))
    if is_abs[0]:
        probs_abs[absorbing.index(0)] = 1.0
    elif can_absorb[0]:
        # expected visits x solves x^T (I - Q) = e_start^T over the transient states
        pos = {s: k for k, s in enumerate(transient)}
        q = p[transient][:, transient]
        lhs = (scipy.sparse.identity(transient.size, format="csr") - q).T.tocsc()
        rhs = np.zeros(transient.size)
        rhs[pos[0]] = 1.0
        visits = scipy.sparse.linalg.spsolve(lhs, rhs)
        visits = np.atleast_1d(visits)
        probs_abs = visits @ p[transient][:, absorbing].toarray()

    abs_states = [tuple(float(values[x]) for x in states[a]) for a in absorbing]
    certain = bool(can_absorb.all())
    expected = None
    if certain and len(absorbing):
        expected = probs_abs @ np.array(abs_states)
    return ExactChainResult(values, m, abs_states, probs_abs, certain, expected)


# ---------------------------------------------------------------------------
# Export


def write_events_csv(path, traj, initial_path=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "i", "j"])
        for t, a, b in zip(traj.times, traj.i, traj.j):
            w.writerow([repr(float(t)), int(a), int(b)])
    if initial_path is not None:
        with open(initial_path, "w") as fh:
            json.dump({"initial": traj.initial.tolist(), "t_end": traj.t_end,
                       "absorbed_at": traj.absorbed_at, "frozen_at": traj.frozen_at},
                      fh, indent=2)
            fh.write("\n")


def read_events_csv(path, initial_path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["t", "i", "j"]:
        raise ValueError(f"{path}: not an event log")
    with open(initial_path) as fh:
        info = json.load(fh)
    body = rows[1:]
    times = np.array([float(r[0]) for r in body])
    ii = np.array([int(r[1]) for r in body], np.int64)
    jj = np.array([int(r[2]) for r in body], np.int64)
    initial = np.array(info["initial"], dtype=float)
    traj = JumpTrajectory(times, ii, jj, initial, initial.copy(), info["t_end"],
                          info["absorbed_at"], info["frozen_at"])
    traj.final = traj.replay()
    return traj


def write_batch_csv(path, batch):
    n = batch.mean_estimate.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"mean_{i}" for i in range(n)]
                   + ["variance", "se_variance", "absorbed_fraction"])
        for k, t in enumerate(batch.grid):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in batch.mean_estimate[k]]
                       + [repr(float(batch.variance_estimate[k])),
                          repr(float(batch.variance_se[k])),
                          repr(float(batch.absorbed_fraction[k]))])


def read_batch_csv(path):
    """Returns ``(grid, means, variance, se_variance, absorbed_fraction)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    if header[0] != "t" or header[-3:] != ["variance", "se_variance", "absorbed_fraction"]:
        raise ValueError(f"{path}: not a replicate batch CSV")
    data = np.array(rows[1:], dtype=float).reshape(-1, len(header))
    return data[:, 0], data[:, 1:-3], data[:, -3], data[:, -2], data[:, -1]
