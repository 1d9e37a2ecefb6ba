"""Integration and analysis of the consensus ODE ds/dt = -L s."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "Trajectory",
    "DecayFit",
    "rk4_step_matrix",
    "default_dt",
    "default_horizon",
    "integrate",
    "integrate_on_grid",
    "exact_symmetric",
    "variance",
    "pairwise_variance",
    "decay_rate",
    "fit_decay_rate",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_variance_csv",
    "read_variance_csv",
]

MAX_SAMPLES = 10_000
VARIANCE_FLOOR = 1e-14
# log-variance change below which the tail counts as a plateau
STATIONARY_LOG_DROP = 1e-6


@dataclass
class Trajectory:
    times: np.ndarray  # (K,)
    states: np.ndarray  # (K, N)
    meta: dict = field(default_factory=dict)

    @property
    def variances(self):
        return variance(self.states)

    @property
    def means(self):
        return self.states.mean(axis=1)


@dataclass(frozen=True)
class DecayFit:
    rate: float
    floor_detected: bool
    n_points: int
    window: tuple


def _as_lap(lap):
    lap = np.asarray(lap, dtype=float)
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
        raise ValueError("Laplacian must be square")
    return lap


def rk4_step_matrix(lap, dt):
    """One classical RK4 step for a linear system, as a matrix.

    For ds/dt = -L s the four stages collapse to the degree-4 Taylor
    polynomial of exp(-dt L).
    """
    h = -dt * _as_lap(lap)
    eye = np.eye(h.shape[0])
    h2 = h @ h
    return eye + h + h2 / 2 + h2 @ h / 6 + h2 @ h2 / 24


def default_dt(lap):
    sigma_max = float(np.max(np.diag(_as_lap(lap)), initial=0.0))
    return 0.1 / max(1.0, sigma_max)


def default_horizon(summary):
    """40 / Re(lambda_2): the slowest mode is down by e^-40."""
    if summary.lambda2 is None:
        raise ValueError("no nonzero eigenvalue; pass t_end explicitly")
    return 40.0 / summary.lambda2


def _stability_warnings(lap, dt):
    sigma_max = float(np.max(np.diag(lap), initial=0.0))
    if sigma_max > 0 and dt > 2.0 / sigma_max:
        return [f"step exceeds stability heuristic: dt={dt:g} > 2/max(sigma)={2.0 / sigma_max:g}"]
    return []


def integrate(lap, s0, t_end, dt=None, max_samples=MAX_SAMPLES):
    """Fixed-step RK4 on a uniform grid, stored with at most ``max_samples`` rows.

    The step is shrunk slightly so that ``t_end`` is hit exactly. Decimated
    samples advance with a power of the step matrix, which is the same
    sequence of RK4 steps.
    """
    lap = _as_lap(lap)
    s0 = np.asarray(s0, dtype=float)
    if s0.shape != (lap.shape[0],):
        raise ValueError(f"s0 has shape {s0.shape}, expected ({lap.shape[0]},)")
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    dt = default_dt(lap) if dt is None else float(dt)
    if not dt > 0:
        raise ValueError("dt must be positive")

    n_steps = max(1, math.ceil(t_end / dt - 1e-12))
    h = t_end / n_steps
    stride = max(1, math.ceil(n_steps / (max_samples - 1)))
    step = rk4_step_matrix(lap, h)
    jump = np.linalg.matrix_power(step, stride)

    ks = list(range(0, n_steps + 1, stride))
    if ks[-1] != n_steps:
        ks.append(n_steps)
    states = np.empty((len(ks), s0.size))
    states[0] = s0
    s = s0
    for r in range(1, len(ks)):
        gap = ks[r] - ks[r - 1]
        s = (jump if gap == stride else np.linalg.matrix_power(step, gap)) @ s
        states[r] = s
    meta = {"method": "rk4", "dt": h, "n_steps": n_steps, "stride": stride,
            "warnings": _stability_warnings(lap, h)}
    return Trajectory(np.array(ks) * h, states, meta)


def integrate_on_grid(lap, s0, grid, dt=None):
    """RK4 solution reported at arbitrary increasing ``grid`` times (grid[0] = 0)."""
    lap = _as_lap(lap)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or grid[0] != 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must start at 0 and be strictly increasing")
    dt = default_dt(lap) if dt is None else float(dt)
    states = np.empty((grid.size, lap.shape[0]))
    states[0] = s = np.asarray(s0, dtype=float)
    warnings = []
    for k in range(1, grid.size):
        span = grid[k] - grid[k - 1]
        n = max(1, math.ceil(span / dt - 1e-12))
        s = np.linalg.matrix_power(rk4_step_matrix(lap, span / n), n) @ s
        states[k] = s
    warnings += _stability_warnings(lap, dt)
    return Trajectory(grid.copy(), states, {"method": "rk4", "dt": dt, "warnings": warnings})


def exact_symmetric(lap, s0, t):
    """exp(-t L) s0 through the orthogonal eigendecomposition of a symmetric L.

    ``t`` may be a scalar (returns an N-vector) or an array (returns K x N).
    """
    lap = _as_lap(lap)
    if not np.array_equal(lap, lap.T):
        raise ValueError("exact_symmetric requires a symmetric Laplacian")
    vals, vecs = scipy.linalg.eigh(lap)
    coeff = vecs.T @ np.asarray(s0, dtype=float)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = (np.exp(-np.outer(t_arr, vals)) * coeff) @ vecs.T
    return out[0] if np.ndim(t) == 0 else out


def variance(s):
    """Empirical variance (1/N) sum (s_i - mean)^2; works row-wise on 2-D input."""
    s = np.asarray(s, dtype=float)
    # shifting first makes the variance of an exact consensus exactly zero
    s = s - s[..., :1]
    return ((s - s.mean(axis=-1, keepdims=True)) ** 2).mean(axis=-1)


def pairwise_variance(s):
    """Same quantity as :func:`variance`, from (1 / 2N^2) sum_ij (s_i - s_j)^2."""
    s = np.asarray(s, dtype=float)
    n = s.shape[-1]
    diff = s[..., :, None] - s[..., None, :]
    return (diff**2).sum(axis=(-2, -1)) / (2 * n * n)


def _slope(t, y):
    t = t - t.mean()
    return float((t * (y - y.mean())).sum() / (t * t).sum())


def decay_rate(times, v, floor=VARIANCE_FLOOR):
    """Exponential decay rate of a variance curve.

    Fits log v by least squares over the last half of the usable horizon
    (points with v > ``floor``). A floor is flagged when the log-slope over
    the final quarter is less than half the slope over the preceding quarter,
    i.e. the curve is flattening instead of decaying exponentially, or when
    the final quarter is stationary.
    """
    times = np.asarray(times, dtype=float)
    v = np.asarray(v, dtype=float)
    usable = np.flatnonzero(v > floor)
    if usable.size == 0 or usable[0] != 0:
        raise ValueError("variance is below the floor from the start")
    # truncate at the first underflow so the fit only sees a contiguous prefix
    gaps = np.flatnonzero(np.diff(usable) != 1)
    end = usable[gaps[0]] + 1 if gaps.size else usable[-1] + 1
    t, lv = times[:end], np.log(v[:end])
    t_mid = t[0] + 0.5 * (t[-1] - t[0])
    sel = t >= t_mid
    if sel.sum() < 4:
        raise ValueError("fewer than 4 usable points for the decay fit")
    rate = -_slope(t[sel], lv[sel])

    floor_detected = False
    tw, lw = t[sel], lv[sel]
    q = tw[0] + 0.5 * (tw[-1] - tw[0])
    early, late = tw < q, tw >= q
    if early.sum() >= 2 and late.sum() >= 2:
        s_early = -_slope(tw[early], lw[early])
        s_late = -_slope(tw[late], lw[late])
        stalled = abs(s_late) * (tw[-1] - q) < STATIONARY_LOG_DROP
        floor_detected = bool(stalled or (s_early > 0 and s_late < 0.5 * s_early))
    return DecayFit(rate, floor_detected, int(sel.sum()), (float(tw[0]), float(tw[-1])))


def fit_decay_rate(traj):
    return decay_rate(traj.times, traj.variances)


# ---------------------------------------------------------------------------
# CSV export


def _fmt(x):
    return repr(float(x))


def write_trajectory_csv(path, traj, meta_path=None):
    n = traj.states.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"s_{i}" for i in range(n)])
        for t, row in zip(traj.times, traj.states):
            w.writerow([_fmt(t)] + [_fmt(x) for x in row])
    if meta_path is not None:
        with open(meta_path, "w") as fh:
            json.dump(traj.meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_trajectory_csv(path, meta_path=None):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[0] != "t":
        raise ValueError(f"{path}: not a trajectory CSV")
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    meta = {}
    if meta_path is not None:
        with open(meta_path) as fh:
            meta = json.load(fh)
    return Trajectory(data[:, 0], data[:, 1:], meta)


def write_variance_csv(path, times, v):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "v"])
        for t, x in zip(times, v):
            w.writerow([_fmt(t), _fmt(x)])


def read_variance_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["t", "v"]:
        raise ValueError(f"{path}: not a variance CSV")
    data = np.array(rows[1:], dtype=float).reshape(-1, 2)
    return data[:, 0], data[:, 1]
