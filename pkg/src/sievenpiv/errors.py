"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code taxonomy, so every failure a caller can
provoke should surface as one of them rather than a bare ``ValueError``.
"""

from __future__ import annotations


class SieveError(Exception):
    """Base class for all package errors."""


class DomainError(SieveError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(SieveError, ValueError):
    """A configuration is internally inconsistent or unsupported."""


class ContractViolation(SieveError, ValueError):
    """A documented precondition between arguments was violated (e.g. J > K)."""


class NumericFailure(SieveError, ArithmeticError):
    """An iterative kernel failed to converge or produced non-finite output."""


class RankDeficiencyError(SieveError, ArithmeticError):
    """An empirical Gram matrix is numerically singular."""

    def __init__(self, message: str, min_eig: float):
        super().__init__(f"{message} (min eigenvalue {min_eig:.3e})")
        self.min_eig = min_eig


class IllPosednessError(SieveError, ArithmeticError):
    """The NPIV denominator matrix is numerically singular."""

    def __init__(self, message: str, sigma_hat_jk: float):
        super().__init__(f"{message} (sigma_hat_jk {sigma_hat_jk:.3e})")
        self.sigma_hat_jk = sigma_hat_jk


class ResolutionError(SieveError, ArithmeticError):
    """A quadrature grid is too coarse to reproduce a known Gram matrix."""


class SchemaError(ConfigurationError):
    """Tabular input does not match the expected column layout."""
