"""Optimal incentivized actions for steering activity in Hawkes-process social networks."""

from .cheshire import (
    Calibration,
    CheshireSampler,
    calibrate_budget,
    cheshire_next,
    estimate_budget,
    objective_estimate,
    run_cost,
    simulate_controlled,
)
from .errors import (
    CalibrationError,
    ConfigError,
    InfeasibleModelError,
    InvalidBoundError,
    MalformedLogError,
    SolverDivergenceError,
    TimeReversalError,
)
from .estimation import FitConfig, FitResult, fit_mle, log_likelihood
from .harness import (
    NETWORK_PRESETS,
    ExperimentConfig,
    MetricsTable,
    export_report,
    load_config,
    milestone_time,
    run_experiment,
)
from .hawkes import (
    Event,
    EventLog,
    IntensityVector,
    Kind,
    NetworkModel,
    apply_jump,
    branching_check,
    decay_intensity,
    intensity_from_history,
    load_log,
    load_model,
    save_log,
    save_model,
)
from .networks import (
    KRONECKER_PRESETS,
    Graph,
    KroneckerSeed,
    baseline_policy,
    degree_scores,
    kronecker_graph,
    load_graph,
    pagerank,
    sample_parameters,
    save_graph,
)
from .policy import (
    ControlConfig,
    FeedbackPolicy,
    build_policy,
    load_policy,
    optimal_intensity,
    save_policy,
    solve_g,
    solve_riccati,
    zero_policy,
)
from .simulation import (
    SimulationResult,
    counting_path,
    sample_first_arrival,
    sample_inhomog_poisson,
    simulate_open_loop,
    simulate_uncontrolled,
)

__all__ = [
    "Calibration",
    "CalibrationError",
    "CheshireSampler",
    "ConfigError",
    "ControlConfig",
    "Event",
    "EventLog",
    "ExperimentConfig",
    "FeedbackPolicy",
    "FitConfig",
    "FitResult",
    "Graph",
    "InfeasibleModelError",
    "IntensityVector",
    "InvalidBoundError",
    "KRONECKER_PRESETS",
    "Kind",
    "KroneckerSeed",
    "MalformedLogError",
    "MetricsTable",
    "NETWORK_PRESETS",
    "NetworkModel",
    "SimulationResult",
    "SolverDivergenceError",
    "TimeReversalError",
    "apply_jump",
    "baseline_policy",
    "branching_check",
    "build_policy",
    "calibrate_budget",
    "cheshire_next",
    "counting_path",
    "decay_intensity",
    "degree_scores",
    "estimate_budget",
    "export_report",
    "fit_mle",
    "intensity_from_history",
    "kronecker_graph",
    "load_config",
    "load_graph",
    "load_log",
    "load_model",
    "load_policy",
    "log_likelihood",
    "milestone_time",
    "objective_estimate",
    "optimal_intensity",
    "pagerank",
    "run_cost",
    "run_experiment",
    "sample_first_arrival",
    "sample_inhomog_poisson",
    "sample_parameters",
    "save_graph",
    "save_log",
    "save_model",
    "save_policy",
    "simulate_controlled",
    "simulate_open_loop",
    "simulate_uncontrolled",
    "solve_g",
    "solve_riccati",
    "zero_policy",
]

__version__ = "0.1.0"
