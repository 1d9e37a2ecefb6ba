"""
Steering a group to a chosen opinion
====================================

Any target between the lowest and highest initial opinion can be reached
by wiring the two extreme agents to each other with the right weights and
letting everyone else follow a chain.
"""

import numpy as np

from consensus_dynamics import build_laplacian, exact_chain, integrate, plan_steering, spectrum

s0 = np.array([0.0, 0.3, 0.7, 1.0])
plan = plan_steering(s0, 0.5)
print(f"alpha={plan.alpha} beta={plan.beta} extremes=({plan.i_min}, {plan.i_max})")
for edge in plan.graph.edges:
    print("  edge", edge)

lap = build_laplacian(plan.graph)
traj = integrate(lap, s0, 40 / spectrum(lap).lambda2)
print("deterministic limit:", np.round(traj.states[-1], 8))

# in the copy model the target is reached on average
s0 = np.array([0.0, 2.0, 5.0, 9.0])
res = exact_chain(plan_steering(s0, 3.0).graph, s0)
print("expected absorbed opinions:", res.expected_final)

try:
    plan_steering(s0, 12.0)
except ValueError as exc:
    print("out of reach:", exc)
