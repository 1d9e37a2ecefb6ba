"""Deterministic and stochastic consensus dynamics on weighted digraphs."""

__version__ = "0.1.0"

from .graph import (  # noqa: E402
    BlockDecomposition,
    BlockKind,
    Connectivity,
    GraphError,
    WeightedDigraph,
    build_laplacian,
    classify_blocks,
    connectivity_kind,
    decompose,
    format_edgelist,
    format_json,
    frobenius_form,
    is_balanced,
    is_symmetric,
    parse_graph,
    predicts_unconditional_consensus,
    read_graph,
    strongly_connected_components,
    undirected_shape_connected,
)
from .spectral import (  # noqa: E402
    SpectralError,
    SpectralSummary,
    algebraic_connectivity,
    predict_limit,
    spectrum,
    zero_multiplicity,
)
from .deterministic import (  # noqa: E402
    DecayFit,
    Trajectory,
    exact_symmetric,
    fit_decay_rate,
    integrate,
    variance,
)
from .stochastic import (  # noqa: E402
    JumpTrajectory,
    ReplicateBatch,
    exact_chain,
    monte_carlo,
    simulate,
    simulate_embedded,
)
from .control import SteeringError, plan_steering, steer  # noqa: E402
from .harness import (  # noqa: E402
    ExperimentConfig,
    Scenario,
    make_battle,
    make_bridged_clusters,
    make_ring,
    make_scenario,
    run_experiment,
)
