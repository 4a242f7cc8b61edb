"""Probabilistic PCA: closed-form maximum likelihood, quotient-space distances
modulo rotations, and Monte Carlo consistency experiments."""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    DegenerateDataError,
    DomainError,
    InvalidInputError,
    NumericalError,
    OracleConvergenceError,
    PpcaError,
)
from .mle import FitResult, mle_fit, numerical_mle_oracle, sample_covariance
from .model import (
    Dataset,
    GeneratorSpec,
    LogLikSummary,
    PpcaParams,
    assemble_covariance,
    log_density,
    log_likelihood,
    log_likelihood_ratio,
    random_params,
    sample_dependent,
    sample_iid,
)
from .numerics import Spectrum, SymMatrix, lowrank_logdet, lowrank_quadform, svd_singular_values, sym_eig
from .quotient import (
    IdentifiedSet,
    QuotientPoint,
    distance_to_C,
    lift_discontinuity_sequence,
    param_distance,
    procrustes_distance,
    quotient_distance,
    ray_chain_bound,
)
