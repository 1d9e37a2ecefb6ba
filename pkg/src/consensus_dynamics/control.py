"""Build a graph whose consensus dynamics converge to a chosen opinion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import WeightedDigraph

__all__ = ["SteeringError", "SteeringPlan", "plan_steering", "steer"]


class SteeringError(ValueError):
    pass


@dataclass(frozen=True)
class SteeringPlan:
    graph: WeightedDigraph
    target: float
    alpha: float  # rate at which the max-opinion agent listens to the min-opinion agent
    beta: float  # rate at which the min-opinion agent listens to the max-opinion agent
    i_max: int
    i_min: int
    chain: tuple  # remaining agents, in feed order


def plan_steering(s0, s_star):
    """Construct the steering graph and report its weights.

    The agents holding the extreme opinions form the only isolated block:
    the min agent follows the max agent at rate beta, the max agent follows
    the min agent at rate alpha, with alpha + beta = 1 and
    s* = beta * s_max + alpha * s_min. Every other agent follows the
    previous one in index order, the first of them following the min agent.
    """
    s0 = np.asarray(s0, dtype=float)
    if s0.ndim != 1 or s0.size < 2:
        raise SteeringError("need at least two agents")
    if not np.all(np.isfinite(s0)) or not np.isfinite(s_star):
        raise SteeringError("opinions and target must be finite")
    s_star = float(s_star)
    lo, hi = float(s0.min()), float(s0.max())
    n = s0.size

    if lo == hi:
        if s_star != lo:
            raise SteeringError(
                f"target {s_star} differs from the common initial opinion {lo}; "
                "the convex hull of the initial opinions is a single point")
        edges = tuple((k, k - 1, 1.0) for k in range(1, n))
        return SteeringPlan(WeightedDigraph(n, edges), s_star, float("nan"), float("nan"),
                            0, 0, tuple(range(1, n)))

    if not lo <= s_star <= hi:
        raise SteeringError(
            f"target {s_star} lies outside the convex hull [{lo}, {hi}] of the initial "
            "opinions; consensus dynamics can only shrink that hull")

    i_max = int(np.argmax(s0))
    i_min = int(np.argmin(s0))
    beta = (s_star - lo) / (hi - lo)
    alpha = 1.0 - beta
    edges = [(i_min, i_max, beta), (i_max, i_min, alpha)]
    chain = tuple(k for k in range(n) if k not in (i_max, i_min))
    prev = i_min
    for k in chain:
        edges.append((k, prev, 1.0))
        prev = k
    return SteeringPlan(WeightedDigraph(n, tuple(edges)), s_star, alpha, beta, i_max, i_min, chain)


def steer(s0, s_star):
    return plan_steering(s0, s_star).graph
