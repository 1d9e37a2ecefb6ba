"""
Who listens to whom: blocks, kernels and limits
===============================================

A graph with two leader pairs that ignore everyone else, and one pair
that listens to both. The leaders never agree, so the followers settle
somewhere in between.
"""

import numpy as np

from consensus_dynamics import (
    build_laplacian,
    decompose,
    integrate,
    parse_graph,
    predict_limit,
    spectrum,
)

# edge "i j w": agent i moves toward agent j at rate w
g = parse_graph("""
5
0 1 1.0
1 0 1.0
3 4 1.0
4 3 1.0
3 1 0.5
4 2 2.0
""")

d = decompose(g)
for block, kind in zip(d.blocks, d.labels):
    print(f"block {block}: {kind.value}")

# one zero eigenvalue per isolated block
lap = build_laplacian(g)
summary = spectrum(lap)
print("eigenvalues:", np.round(summary.eigenvalues.real, 4))
print("zero multiplicity:", summary.zero_multiplicity)

s0 = np.array([-1.0, -1.0, 2.0, 0.0, 0.5])
limit = predict_limit(lap, s0, summary)
print("predicted limit:", np.round(limit, 6))

# integrate long enough for the slowest mode to die out
traj = integrate(lap, s0, 40 / summary.lambda2)
print("integrated     :", np.round(traj.states[-1], 6))
