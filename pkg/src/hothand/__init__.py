"""Continuous-time state-space models for irregularly timed binary outcomes.

A latent Ornstein-Uhlenbeck "form" process shifts the logit of Bernoulli
success probabilities. The likelihood is evaluated by discretizing the
state space and running HMM machinery over gap-dependent transition
matrices.
"""

from hothand.data_io import Dataset, SyntheticSpec, generate_synthetic, parse_csv
from hothand.discretization import StateGrid, build_grid, discretize_gaussian, transition_matrix
from hothand.estimation import (
    FitResult,
    OptimizerConfig,
    compare,
    confidence_intervals,
    fit_benchmark,
    fit_ssm,
)
from hothand.inference import (
    DecodedSequence,
    ThrowSequence,
    benchmark_loglik,
    sequence_loglik,
    total_loglik,
    viterbi_decode,
)
from hothand.observation import Covariates, RegressionParams, emission_probability, success_probability
from hothand.ou import GaussianLaw, OUParams, conditional_law, simulate_trajectory, stationary_law

__version__ = "0.1.0"

__all__ = [
    "Covariates",
    "Dataset",
    "DecodedSequence",
    "FitResult",
    "GaussianLaw",
    "OUParams",
    "OptimizerConfig",
    "RegressionParams",
    "StateGrid",
    "SyntheticSpec",
    "ThrowSequence",
    "benchmark_loglik",
    "build_grid",
    "compare",
    "conditional_law",
    "confidence_intervals",
    "discretize_gaussian",
    "emission_probability",
    "fit_benchmark",
    "fit_ssm",
    "generate_synthetic",
    "parse_csv",
    "sequence_loglik",
    "simulate_trajectory",
    "stationary_law",
    "success_probability",
    "total_loglik",
    "transition_matrix",
    "viterbi_decode",
]
