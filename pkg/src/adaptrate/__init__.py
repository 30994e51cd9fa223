"""Adaptive Bayesian inference of Markov chain transition rates.

Sampling times are chosen online to minimize the expected posterior
variance (one rate) or the determinant of the expected posterior covariance
(several rates), so each observation buys the largest possible drop in
estimate uncertainty.
"""

from .bayes import (
    BernoulliStructurePrior,
    BivariateGammaPrior,
    GammaPrior,
    Posterior,
    RateGrid,
    TruncatedBivariateGammaPrior,
    bayes_update,
    build_prior,
    mae,
    map_estimate,
    mse,
    posterior_covariance,
    posterior_from_csv,
    posterior_marginal,
    posterior_mean,
    posterior_to_csv,
    posterior_variance,
    prior_density,
    sample_prior,
    uniform_grid,
    whittaker_w,
)
from .chains import (
    ChainModel,
    Observation,
    RateVector,
    binary_digraph,
    build_generator,
    mm1_queue,
    mm1_transition_prob,
    model_from_config,
    rate_vector,
    ring,
    sample_transition,
    transition_matrix,
    two_state_bidirectional,
    two_state_unidirectional,
)
from .design import (
    DesignConfig,
    InferenceEngine,
    SimulatedObserver,
    Trace,
    choose_next_time,
    expected_covariance,
    expected_variance,
    objective,
    run_adaptive,
    run_periodic,
    trace_to_csv,
)

__version__ = "0.1.0"
