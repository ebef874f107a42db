"""Adaptive reconstruction of bandlimited graph signals.

Online LMS and RLS estimators that track a bandlimited signal on a graph
from randomly sampled noisy vertex observations, closed-form steady-state
and convergence theory for both, solvers that design the per-vertex
sampling probabilities against rate and accuracy targets, and a simulated
fully distributed RLS based on consensus ADMM.
"""

from .graphs import (
    Bandlimit,
    Graph,
    GraphFormatError,
    SpectralBasis,
    analyze,
    bandlimit_projector,
    build_laplacian,
    connected_components,
    eigendecompose,
    load_edge_list,
    random_geometric_graph,
    save_edge_list,
    synthesize,
    vertex_limiter,
)
from .sampling import (
    NoiseModel,
    ReconstructabilityError,
    SamplingDraw,
    SamplingProbabilities,
    draw_sampling_set,
    leverage_score_probabilities,
    leverage_scores,
    localization_norm,
    max_det_greedy,
    observe,
    reconstructability_lambda,
    uniform_random_set,
    weighted_gram,
)
from .filters import (
    LmsState,
    RlsState,
    TheoryReport,
    lms_init,
    lms_msd_theory,
    lms_msd_upper_bound,
    lms_rate_theory,
    lms_step,
    lms_step_bound,
    lms_theory_report,
    rls_estimate,
    rls_init,
    rls_msd_theory,
    rls_step,
    rls_theory_report,
)
from .design import (
    DesignSpec,
    InfeasibleDesignError,
    SolverTrace,
    dinkelbach_min_msd,
    lambda_min_subgradient,
    msd_gradient,
    sca_min_msd,
    sca_min_rate,
    sca_msd_surrogate,
    solve_min_rate_convex,
    solve_rls_design,
)
from .distributed import (
    CommGraph,
    DrlsConfig,
    DrlsNetwork,
    NodeState,
    drls_local_update,
    drls_multiplier_update,
    drls_network_init,
    drls_round,
    drls_run,
    drls_sense,
    drls_simulate,
)
from .harness import (
    ConfigError,
    LearningCurve,
    build_setup,
    compare_sampling,
    fit_rate,
    load_config,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "Bandlimit",
    "CommGraph",
    "ConfigError",
    "DesignSpec",
    "DrlsConfig",
    "DrlsNetwork",
    "Graph",
    "GraphFormatError",
    "InfeasibleDesignError",
    "LearningCurve",
    "LmsState",
    "NodeState",
    "NoiseModel",
    "ReconstructabilityError",
    "RlsState",
    "SamplingDraw",
    "SamplingProbabilities",
    "SolverTrace",
    "SpectralBasis",
    "TheoryReport",
    "analyze",
    "bandlimit_projector",
    "build_laplacian",
    "build_setup",
    "compare_sampling",
    "connected_components",
    "dinkelbach_min_msd",
    "draw_sampling_set",
    "drls_local_update",
    "drls_multiplier_update",
    "drls_network_init",
    "drls_round",
    "drls_run",
    "drls_sense",
    "drls_simulate",
    "eigendecompose",
    "fit_rate",
    "lambda_min_subgradient",
    "leverage_score_probabilities",
    "leverage_scores",
    "lms_init",
    "lms_msd_theory",
    "lms_msd_upper_bound",
    "lms_rate_theory",
    "lms_step",
    "lms_step_bound",
    "lms_theory_report",
    "load_config",
    "load_edge_list",
    "localization_norm",
    "max_det_greedy",
    "msd_gradient",
    "observe",
    "random_geometric_graph",
    "reconstructability_lambda",
    "rls_estimate",
    "rls_init",
    "rls_msd_theory",
    "rls_step",
    "rls_theory_report",
    "run_experiment",
    "save_edge_list",
    "sca_min_msd",
    "sca_min_rate",
    "sca_msd_surrogate",
    "solve_min_rate_convex",
    "solve_rls_design",
    "synthesize",
    "uniform_random_set",
    "vertex_limiter",
    "weighted_gram",
]
