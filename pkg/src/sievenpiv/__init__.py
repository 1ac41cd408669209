"""Sieve nonparametric instrumental-variables estimation on [0, 1]^d."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigurationError,
    ContractViolation,
    DomainError,
    IllPosednessError,
    NumericFailure,
    RankDeficiencyError,
    ResolutionError,
    SchemaError,
    SieveError,
)
from .sieve import SieveSpec, BasisHandle, orthonormalize, gram_matrix  # noqa: E402
from .estimators import (  # noqa: E402
    NpivFit,
    Sample,
    fit_sieve_ls,
    fit_sieve_npiv,
    empirical_projection,
    predict,
)
from .illposedness import IllPosednessProfile  # noqa: E402
from .dgp import NoiseSpec, NpivDgp  # noqa: E402

__all__ = [
    "BasisHandle",
    "ConfigurationError",
    "ContractViolation",
    "DomainError",
    "IllPosednessError",
    "IllPosednessProfile",
    "NoiseSpec",
    "NpivDgp",
    "NpivFit",
    "NumericFailure",
    "RankDeficiencyError",
    "ResolutionError",
    "Sample",
    "SchemaError",
    "SieveError",
    "SieveSpec",
    "empirical_projection",
    "fit_sieve_ls",
    "fit_sieve_npiv",
    "gram_matrix",
    "orthonormalize",
    "predict",
]
