"""Sieve measures of ill-posedness and the population cross-moment matrix.

The conditional expectation operator of the synthetic models has the
singular system ``(1; 1, 1)`` plus ``(mu_k; phi_k, phi_k)`` with
``phi_k(t) = sqrt(2) cos(k pi t)``. Operator singular values are therefore
indexed with the constant first: the J-th one is ``mu_{J-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import (
    ConfigurationError,
    ContractViolation,
    DomainError,
    IllPosednessError,
    ResolutionError,
)

DENSITY_FLOOR = 0.1
QUADRATURE_CELLS = 2**10
GRAM_CHECK_TOL = 1e-6


@dataclass(frozen=True)
class IllPosednessProfile:
    """Decay of the non-trivial singular values ``mu_1, mu_2, ...``.

    ``kind`` is ``"mild"`` (``c k^(-s/d)``), ``"severe"`` (``c exp(-k^(s/d) / 2)``),
    or ``"custom"`` (explicit ``values``). When ``c`` is None it is set so that
    ``2 * sum(mu) = 1 - DENSITY_FLOOR``, which keeps the joint density of the
    synthetic models at or above the floor.
    """

    kind: str
    varsigma: float = 1.0
    d: int = 1
    n_terms: int = 200
    c: float | None = None
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("mild", "severe", "custom"):
            raise ConfigurationError(f"unknown ill-posedness kind {self.kind!r}")
        if self.kind != "custom" and self.varsigma <= 0:
            raise ConfigurationError(f"varsigma must be positive, got {self.varsigma}")
        if self.n_terms < 1:
            raise ConfigurationError("n_terms must be >= 1")
        mu = self.mu
        if np.any(mu < 0) or np.any(np.diff(mu) > 0) or (mu.size and mu[0] > 1):
            raise ConfigurationError("singular values must be non-increasing and lie in [0, 1]")

    @classmethod
    def custom(cls, values, d: int = 1) -> "IllPosednessProfile":
        values = tuple(float(v) for v in values)
        return cls("custom", d=d, n_terms=max(1, len(values)), values=values)

    def shape(self, k) -> np.ndarray:
        """Unscaled decay ``k -> mu_k / c`` for any (possibly beyond-truncation) k."""
        k = np.asarray(k, dtype=float)
        r = self.varsigma / self.d
        if self.kind == "mild":
            return k ** (-r)
        if self.kind == "severe":
            return np.exp(-0.5 * k**r)
        raise DomainError("custom profiles have no closed-form decay")

    @property
    def scale(self) -> float:
        if self.kind == "custom":
            return 1.0
        if self.c is not None:
            return float(self.c)
        total = float(np.sum(self.shape(np.arange(1, self.n_terms + 1))))
        return 0.5 * (1.0 - DENSITY_FLOOR) / total

    @property
    def mu(self) -> np.ndarray:
        """mu_1, ..., mu_{n_terms}."""
        if self.kind == "custom":
            out = np.zeros(self.n_terms)
            out[: len(self.values)] = self.values
            return out
        return self.scale * self.shape(np.arange(1, self.n_terms + 1))

    def operator_singular_values(self, j: int) -> np.ndarray:
        """The first ``j`` singular values of the operator, constant direction first."""
        full = np.concatenate([[1.0], self.mu])
        if j > full.size:
            full = np.concatenate([full, np.zeros(j - full.size)])
        return full[:j]

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "varsigma": self.varsigma, "n_terms": self.n_terms}
        if self.c is not None:
            out["c"] = self.c
        if self.kind == "custom":
            out["values"] = list(self.values)
        return out


def sigma_jk_from_S(s_matrix) -> float:
    """Smallest singular value of a J x K matrix with J <= K."""
    s = np.asarray(s_matrix, dtype=float)
    if s.ndim != 2:
        raise DomainError("expected a 2-d matrix")
    j, k = s.shape
    if j > k:
        raise ContractViolation(f"need J <= K, got J={j}, K={k}")
    return float(numerics.svd(s).singular_values[j - 1])


def default_rule(*specs) -> numerics.QuadratureRule:
    """Composite Gauss-Legendre rule with 2^10 cells refined at every basis breakpoint."""
    edges = np.linspace(0.0, 1.0, QUADRATURE_CELLS + 1)
    for spec in specs:
        for ax in spec.axes:
            edges = np.union1d(edges, ax.breakpoints())
    return numerics.composite_gauss_legendre(edges, 10)


def _cos_moments(profile: IllPosednessProfile, values: np.ndarray, rule) -> np.ndarray:
    """Columns: integrals of ``values`` against 1, phi_1, ..., phi_n under ``rule``."""
    k = np.arange(profile.n_terms + 1)
    phi = np.sqrt(2.0) * np.cos(np.pi * rule.nodes[:, None] * k[None, :])
    phi[:, 0] = 1.0
    return (values * rule.weights[:, None]).T @ phi


def _axis_blocks(dgp, psi_spec, b_spec, rule):
    """Per-axis raw matrices: Gram of psi, Gram of b, E[psi b'], E[(T psi)(T psi)']."""
    weights = np.concatenate([[1.0], dgp.profile.mu])
    out = []
    for ax_psi, ax_b in zip(psi_spec.axes, b_spec.axes):
        p = ax_psi(rule.nodes)
        q = ax_b(rule.nodes)
        a_psi = _cos_moments(dgp.profile, p, rule)
        a_b = _cos_moments(dgp.profile, q, rule)
        gram_psi = (p * rule.weights[:, None]).T @ p
        gram_b = (q * rule.weights[:, None]).T @ q
        if dgp.mode == "ls":
            # Y2 = X, so T is the identity
            cross = (p * rule.weights[:, None]).T @ q
            tpsi = gram_psi
        else:
            # joint density 1 + sum mu_k phi_k(y) phi_k(x) in the cosine moments
            cross = (a_psi * weights) @ a_b.T
            # T psi(x) = sum_k mu_k <psi, phi_k> phi_k(x)
            tpsi = (a_psi * weights**2) @ a_psi.T
        out.append((gram_psi, gram_b, cross, tpsi))
    return out


def _kron_all(mats):
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def _check_gram(name, gram, transform):
    g = transform.T @ gram @ transform
    err = float(np.max(np.abs(g - np.eye(g.shape[0]))))
    if err > GRAM_CHECK_TOL:
        raise ResolutionError(
            f"quadrature does not reproduce the orthonormality of {name} "
            f"(max deviation {err:.2e} > {GRAM_CHECK_TOL:g})"
        )


def population_S(dgp, psi_handle, b_handle, rule: numerics.QuadratureRule | None = None) -> np.ndarray:
    """S = E[psi~(Y2) b~(X)'] by tensor quadrature against the model's joint density.

    Handles must be orthonormal under the model's (uniform) marginals; the
    quadrature is rejected if it cannot reproduce that orthonormality.
    """
    if psi_handle.d != dgp.d or b_handle.d != dgp.d:
        raise DomainError("basis and model dimensions differ")
    rule = rule or default_rule(psi_handle.spec, b_handle.spec)
    blocks = _axis_blocks(dgp, psi_handle.spec, b_handle.spec, rule)
    t_psi, t_b = psi_handle.total_transform, b_handle.total_transform
    _check_gram("psi", _kron_all([blk[0] for blk in blocks]), t_psi)
    _check_gram("b", _kron_all([blk[1] for blk in blocks]), t_b)
    return t_psi.T @ _kron_all([blk[2] for blk in blocks]) @ t_b


def tau_22(dgp, psi_handle, rule: numerics.QuadratureRule | None = None) -> float:
    """sup over the sieve of ||h|| / ||T h||, both norms in L2 of the uniform marginals."""
    if psi_handle.d != dgp.d:
        raise DomainError("basis and model dimensions differ")
    rule = rule or default_rule(psi_handle.spec)
    blocks = _axis_blocks(dgp, psi_handle.spec, psi_handle.spec, rule)
    t = psi_handle.total_transform
    _check_gram("psi", _kron_all([blk[0] for blk in blocks]), t)
    m = t.T @ _kron_all([blk[3] for blk in blocks]) @ t
    lam = numerics.min_eig_sym(0.5 * (m + m.T))
    if lam <= 1e-14:
        raise IllPosednessError("T is not injective on the sieve space: infinite ill-posedness", 0.0)
    return float(1.0 / np.sqrt(lam))
