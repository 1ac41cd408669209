"""Dense linear algebra and quadrature kernels.

Matrices are plain ``numpy.ndarray`` objects. Every routine here is a thin,
deterministic wrapper over LAPACK (through :mod:`numpy.linalg`) that adds the
input validation and failure modes the estimators rely on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import DomainError, NumericFailure

DEFAULT_PINV_RTOL = 1e-12
SYMMETRY_TOL = 1e-10


class SvdResult(NamedTuple):
    u: np.ndarray
    singular_values: np.ndarray
    vt: np.ndarray


def _as_finite_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise DomainError(f"expected a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError("matrix has non-finite entries")
    return a


def _check_symmetric(a: np.ndarray) -> None:
    if a.shape[0] != a.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > SYMMETRY_TOL * scale:
        raise DomainError(f"matrix is not symmetric (max asymmetry {asym:.3e})")


def svd(a) -> SvdResult:
    """Thin singular value decomposition with singular values in descending order."""
    a = _as_finite_matrix(a)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"SVD did not converge: {exc}") from exc
    return SvdResult(u, s, vt)


def pinv(a, rel_tol: float = DEFAULT_PINV_RTOL, *, return_truncated: bool = False):
    """Moore-Penrose inverse with relative singular-value truncation.

    Singular values below ``rel_tol * s_max`` are treated as zero. With
    ``return_truncated=True`` a second value reports whether any nonzero
    singular value was discarded, which callers use to flag fits whose
    effective regularization changed silently.
    """
    if not 0.0 <= rel_tol < 1.0:
        raise DomainError(f"rel_tol must lie in [0, 1), got {rel_tol}")
    u, s, vt = svd(a)
    cutoff = rel_tol * (s[0] if s.size else 0.0)
    keep = s > cutoff
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    out = (vt.T * inv_s) @ u.T
    if return_truncated:
        truncated = bool(np.any(~keep & (s > 0.0)))
        return out, truncated
    return out


def inv_sqrt_psd(a) -> np.ndarray:
    """Inverse of the positive-definite symmetric square root of ``a``."""
    a = _as_finite_matrix(a)
    _check_symmetric(a)
    a = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(a)
    tol = 1e-12 * max(float(w[-1]), 0.0) if w.size else 0.0
    if w.size and w[0] <= tol:
        raise DomainError(
            f"matrix is not positive definite: eigenvalue {w[0]:.3e} <= {tol:.3e}"
        )
    r = (v / np.sqrt(w)) @ v.T
    return 0.5 * (r + r.T)


def spectral_norm(a) -> float:
    """Largest singular value."""
    s = svd(a).singular_values
    return float(s[0]) if s.size else 0.0


def min_eig_sym(a) -> float:
    a = _as_finite_matrix(a)
    _check_symmetric(a)
    return float(np.linalg.eigvalsh(0.5 * (a + a.T))[0])


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights of a rule on [0, 1] (weights sum to one)."""

    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Integrate ``f`` (vectorized over nodes along axis 0)."""
        values = np.asarray(f(self.nodes), dtype=float)
        return np.tensordot(self.weights, values, axes=(0, 0))

    def __len__(self) -> int:
        return self.nodes.size


def composite_gauss_legendre(breakpoints, n_nodes: int = 10) -> QuadratureRule:
    """Composite Gauss-Legendre rule over the intervals between ``breakpoints``.

    Exact for piecewise polynomials of degree ``2 * n_nodes - 1`` whose pieces
    are aligned with the breakpoints. Zero-length intervals are skipped.
    """
    if n_nodes < 1:
        raise DomainError(f"n_nodes must be >= 1, got {n_nodes}")
    edges = np.unique(np.asarray(breakpoints, dtype=float))
    if edges.size < 2:
        raise DomainError("need at least two distinct breakpoints")
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    left, right = edges[:-1], edges[1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    total = edges[-1] - edges[0]
    return QuadratureRule(nodes, weights / total)


def gauss_legendre(n_nodes: int, subintervals: int = 1) -> QuadratureRule:
    """Composite Gauss-Legendre rule on [0, 1] with equal subintervals."""
    if subintervals < 1:
        raise DomainError(f"subintervals must be >= 1, got {subintervals}")
    return composite_gauss_legendre(np.linspace(0.0, 1.0, subintervals + 1), n_nodes)


def tensor_rule(*rules: QuadratureRule) -> tuple[np.ndarray, np.ndarray]:
    """Nodes (m x d) and weights of the product of univariate rules.

    Ordering matches :func:`numpy.kron`: the first rule varies slowest.
    """
    grids = np.meshgrid(*[r.nodes for r in rules], indexing="ij")
    nodes = np.column_stack([g.ravel() for g in grids])
    weights = rules[0].weights
    for r in rules[1:]:
        weights = np.kron(weights, r.weights)
    return nodes, weights
