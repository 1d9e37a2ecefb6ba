"""Compiled inner loop of the jump process."""

import numba
import numpy as np

DONE = 0
FROZEN = 1
BUFFER_FULL = 2


@numba.njit(cache=True)
def run_jumps(dst, src, rate, state, t, t_end, grid, out, k, ev_t, ev_i, ev_j, record, rng):
    """Advance the jump process in place.

    Only edges joining different opinions are active; waiting times are
    Exp(active rate) and the jumping edge is picked proportionally to its
    rate. ``out[k:]`` receives the state at each ``grid`` time reached.
    Returns ``(t, k, n_events, status)``; ``t`` is the time of the last
    event (or ``t_end`` when the horizon is reached).
    """
    n_edges = rate.shape[0]
    n_grid = grid.shape[0]
    cap = ev_t.shape[0]
    n = 0
    while True:
        total = 0.0
        for e in range(n_edges):
            if state[dst[e]] != state[src[e]]:
                total += rate[e]
        if total == 0.0:
            while k < n_grid:
                out[k, :] = state
                k += 1
            return t, k, n, FROZEN
        if record and n == cap:
            return t, k, n, BUFFER_FULL
        t_next = t + rng.exponential(1.0) / total
        while k < n_grid and grid[k] < t_next:
            out[k, :] = state
            k += 1
        if t_next > t_end:
            return t_end, k, n, DONE
        u = rng.random() * total
        chosen = -1
        acc = 0.0
        for e in range(n_edges):
            if state[dst[e]] != state[src[e]]:
                chosen = e
                acc += rate[e]
                if u < acc:
                    break
        state[dst[chosen]] = state[src[chosen]]
        t = t_next
        if record:
            ev_t[n] = t
            ev_i[n] = dst[chosen]
            ev_j[n] = src[chosen]
            n += 1


def empty_events():
    return np.zeros(0), np.zeros(0, np.int64), np.zeros(0, np.int64)
