"""Simulation-based Bayesian inference for healthcare-associated infections.

Stochastic discrete-time SI simulators with spatially heterogeneous
transmission, their exact likelihoods, and three posterior estimators
(rejection sampling, ABC, neural posterior estimation), plus posterior
predictive checks and counterfactual intervention analysis.
"""

__version__ = "0.1.0"

from .facility import FacilityTraces, Layout, contact_matrices, static_layout, synth_traces, validate
from .simulator import (
    EpidemicMatrix,
    InterventionSpec,
    RateVector,
    SimParams,
    apply_intervention,
    force_of_infection,
    simulate_full,
    simulate_partial,
    simulate_trace,
)
from .likelihood import (
    log_likelihood_full,
    log_likelihood_homogeneous,
    marginal_log_lik_partial_enum,
    obs_log_prob_given_x,
    r0,
    transition_log_prob,
)
from .summaries import SummaryMatrix, infected_series, floor_series, multi_room_series, scalar_summary, summary_matrix
from .inference import (
    DensityEstimator,
    ModelSpec,
    PosteriorResult,
    Prior,
    SimulationBatch,
    TrainConfig,
    abc,
    abc_scalar,
    find_log_m,
    npe_posterior,
    rejection_sample,
    sample_prior,
    simulate_batch,
    train_npe,
)
from .analysis import (
    PosteriorSummary,
    PredictiveBand,
    correlation_matrix,
    intervention_compare,
    posterior_predictive,
    summarize,
)

__all__ = [name for name in dir() if not name.startswith("_")]
