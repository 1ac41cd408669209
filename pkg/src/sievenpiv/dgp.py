"""Synthetic NPIV and regression models with known truth.

For d = 1 the instrument X and the endogenous regressor Y2 have joint density

    f(x, y) = 1 + sum_k mu_k phi_k(y) phi_k(x),   phi_k(t) = sqrt(2) cos(k pi t),

so both marginals are uniform and ``T phi_k = mu_k phi_k``. The structural
function is ``h0 = sum_k a_k phi_k`` with ``a_k = c_a k^-(p/d + 1/2)``. Models
with d = 2 are products of two independent copies of the d = 1 model.

Random streams: every sampler builds ``numpy.random.default_rng(seed)`` and
draws the regressors first and the noise second. Replication ``r`` of an
experiment uses ``seed = base_seed + r``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import chebyshev
from scipy import signal, special

from .errors import ConfigurationError, DomainError
from .estimators import Sample
from .illposedness import IllPosednessProfile

TAIL_TOL = 1e-8


@dataclass(frozen=True)
class NoiseSpec:
    """Symmetric mean-zero noise: ``gaussian`` (``sd``) or ``student_t`` (``dof``, ``scale``).

    Student-t draws are standardized to unit variance before scaling. The
    declared ``delta_moment`` is the delta in E|e|^(2+delta) < inf.
    """

    family: str = "gaussian"
    sd: float = 1.0
    dof: float = 5.0
    scale: float = 1.0
    delta_moment: float = 0.5

    def __post_init__(self):
        if self.family == "gaussian":
            if self.sd < 0:
                raise ConfigurationError(f"noise sd must be >= 0, got {self.sd}")
        elif self.family == "student_t":
            if self.dof <= 2:
                raise ConfigurationError(
                    f"Student-t noise needs dof > 2 for finite variance, got {self.dof}"
                )
            if self.dof <= 2 + self.delta_moment:
                raise ConfigurationError(
                    f"Student-t with dof={self.dof} has no moment of order "
                    f"2 + delta = {2 + self.delta_moment}"
                )
            if self.scale < 0:
                raise ConfigurationError(f"noise scale must be >= 0, got {self.scale}")
        else:
            raise ConfigurationError(f"unknown noise family {self.family!r}")
        if self.delta_moment <= 0:
            raise ConfigurationError("delta_moment must be positive")

    @property
    def std(self) -> float:
        return self.sd if self.family == "gaussian" else self.scale

    def to_dict(self) -> dict:
        if self.family == "gaussian":
            return {"family": "gaussian", "sd": self.sd, "delta_moment": self.delta_moment}
        return {
            "family": "student_t",
            "dof": self.dof,
            "scale": self.scale,
            "delta_moment": self.delta_moment,
        }


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def draw_noise(spec: NoiseSpec, n: int, seed) -> np.ndarray:
    """``n`` i.i.d. draws from ``spec``; ``seed`` may be an int or a Generator."""
    rng = _rng(seed)
    if spec.family == "gaussian":
        return spec.sd * rng.standard_normal(n)
    t = rng.standard_t(spec.dof, n)
    return spec.scale * t / np.sqrt(spec.dof / (spec.dof - 2.0))


def _cos_series(coef: np.ndarray, t: np.ndarray) -> np.ndarray:
    """sum_k coef[k] cos(k pi t), evaluated by Clenshaw recursion in cos(pi t)."""
    return chebyshev.chebval(np.cos(np.pi * t), coef)


@dataclass(frozen=True)
class NpivDgp:
    """Synthetic model. ``mode`` is ``"npiv"`` (endogenous) or ``"ls"`` (Y2 = X).

    ``rho`` > 0 makes the regressors a Gaussian-copula AR(1) (LS mode only).
    A non-empty ``truth`` replaces the power-law coefficients ``a_1, a_2, ...``.
    """

    profile: IllPosednessProfile = field(
        default_factory=lambda: IllPosednessProfile("mild", 1.0)
    )
    p: float = 2.0
    c_a: float = 1.0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    d: int = 1
    mode: str = "npiv"
    rho: float = 0.0
    check_tail: bool = True
    truth: tuple = ()

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ConfigurationError(f"models are provided for d = 1, 2; got {self.d}")
        if self.mode not in ("npiv", "ls"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if not 0.0 <= self.rho < 1.0:
            raise DomainError(f"rho must lie in [0, 1), got {self.rho}")
        if self.rho > 0 and self.mode != "ls":
            raise ConfigurationError("dependent regressors are only provided in LS mode")
        if self.profile.d != 1:
            raise ConfigurationError("the profile describes one axis; use d on the model")
        if len(self.truth) > self.K_trunc:
            raise ConfigurationError("more truth coefficients than truncation terms")
        if self.check_tail and self.mode == "npiv" and self.profile.kind != "custom" and not self.truth:
            tail = self.truncation_tail()
            if tail >= TAIL_TOL:
                raise ConfigurationError(
                    f"series tail sum_(k > {self.K_trunc}) mu_k a_k = {tail:.2e} "
                    f"exceeds {TAIL_TOL:g}; increase the truncation length"
                )

    @property
    def K_trunc(self) -> int:
        return self.profile.n_terms

    @property
    def truth_coef(self) -> np.ndarray:
        """a_1, ..., a_{K_trunc} for one axis."""
        if self.truth:
            out = np.zeros(self.K_trunc)
            out[: len(self.truth)] = self.truth
            return out
        k = np.arange(1, self.K_trunc + 1, dtype=float)
        return self.c_a * k ** (-(self.p + 0.5))

    def truncation_tail(self) -> float:
        """Upper bound on sum_{k > K_trunc} mu_k a_k for the untruncated series."""
        prof = self.profile
        k0 = self.K_trunc
        ks = np.arange(k0 + 1, k0 + 200001, dtype=float)
        terms = prof.scale * prof.shape(ks) * self.c_a * ks ** (-(self.p + 0.5))
        # integral bound for the remainder beyond the explicit block
        s = prof.varsigma / prof.d + self.p + 0.5 if prof.kind == "mild" else None
        kend = ks[-1]
        rest = 0.0
        if s is not None and s > 1:
            rest = prof.scale * self.c_a * kend ** (1 - s) / (s - 1)
        return float(terms.sum() + rest)

    # -- oracles -----------------------------------------------------------

    def _axis_h(self, t: np.ndarray, coef: np.ndarray) -> np.ndarray:
        return np.sqrt(2.0) * _cos_series(np.concatenate([[0.0], coef]), t)

    def _points(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim <= 1 and self.d == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[1] != self.d:
            raise DomainError(f"expected points of dimension {self.d}")
        if np.any(pts < 0) or np.any(pts > 1):
            raise DomainError("points must lie in [0, 1]^d")
        return pts

    def oracle_h(self, points) -> np.ndarray:
        pts = self._points(points)
        out = np.ones(pts.shape[0])
        for i in range(self.d):
            out *= self._axis_h(pts[:, i], self.truth_coef)
        return out

    def oracle_Th(self, points) -> np.ndarray:
        pts = self._points(points)
        coef = self.truth_coef if self.mode == "ls" else self.profile.mu * self.truth_coef
        out = np.ones(pts.shape[0])
        for i in range(self.d):
            out *= self._axis_h(pts[:, i], coef)
        return out

    def density(self, x, y) -> np.ndarray:
        """Joint density of (X, Y2) for one axis of an NPIV model."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        g = np.concatenate([[0.0], self.profile.mu])
        # 2 cos(a) cos(b) = cos(a - b) + cos(a + b)
        return 1.0 + _cos_series(g, x - y) + _cos_series(g, x + y)

    @property
    def envelope(self) -> float:
        return 1.0 + 2.0 * float(np.sum(self.profile.mu))

    # -- samplers ----------------------------------------------------------

    def check_floor(self) -> None:
        """Sampling precondition: the joint density stays at or above 0.1."""
        if 2.0 * float(np.sum(self.profile.mu)) > 1.0 - 0.1 + 1e-12:
            raise ConfigurationError(
                "joint density may fall below 0.1: need 2 * sum(mu) <= 0.9"
            )

    def _draw_pair(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        self.check_floor()
        xs, ys = [], []
        got = 0
        m = self.envelope
        while got < n:
            batch = max(64, int(1.25 * m * (n - got)) + 16)
            u = rng.random((batch, 3))
            f = self.density(u[:, 0], u[:, 1])
            if np.any(f < 0):
                raise ConfigurationError("joint density is negative somewhere")
            keep = u[:, 2] * m <= f
            xs.append(u[keep, 0])
            ys.append(u[keep, 1])
            got += int(keep.sum())
        return np.concatenate(xs)[:n], np.concatenate(ys)[:n]

    def _latent_uniform(self, n: int, rho: float, rng: np.random.Generator) -> np.ndarray:
        e = rng.standard_normal((n, self.d))
        if rho == 0.0:
            z = e
        else:
            z = np.column_stack([self._ar1(e[:, i], rho) for i in range(self.d)])
        return special.ndtr(z)

    @staticmethod
    def _ar1(e: np.ndarray, rho: float) -> np.ndarray:
        """Stationary AR(1) with unit variance driven by standard normal ``e``."""
        innov = np.sqrt(1.0 - rho * rho)
        # z_0 = e_0, z_t = rho z_{t-1} + innov e_t
        z, _ = signal.lfilter([innov], [1.0, -rho], e[1:], zi=[rho * e[0]])
        return np.concatenate([[e[0]], z])

    def sample_iid(self, n: int, seed) -> Sample:
        if n < 1:
            raise DomainError("n must be positive")
        rng = _rng(seed)
        if self.mode == "ls":
            x = self._latent_uniform(n, 0.0, rng)
            y2 = x
        else:
            cols = [self._draw_pair(n, rng) for _ in range(self.d)]
            x = np.column_stack([c[0] for c in cols])
            y2 = np.column_stack([c[1] for c in cols])
        eps = draw_noise(self.noise, n, rng)
        return Sample(self.oracle_h(y2) + eps, y2, x)

    def sample_mixing(self, n: int, rho: float | None, seed) -> Sample:
        rho = self.rho if rho is None else rho
        if not 0.0 <= rho < 1.0:
            raise DomainError(f"rho must lie in [0, 1), got {rho}")
        if self.mode != "ls":
            raise ConfigurationError("dependent regressors are only provided in LS mode")
        rng = _rng(seed)
        x = self._latent_uniform(n, rho, rng)
        eps = draw_noise(self.noise, n, rng)
        return Sample(self.oracle_h(x) + eps, x, x)

    def sample(self, n: int, seed) -> Sample:
        """i.i.d. or mixing sampler according to ``rho``."""
        if self.rho > 0:
            return self.sample_mixing(n, self.rho, seed)
        return self.sample_iid(n, seed)

    def with_noise(self, noise: NoiseSpec) -> "NpivDgp":
        return replace(self, noise=noise)

    def to_dict(self) -> dict:
        return {
            "profile": self.profile.to_dict(),
            "p": self.p,
            "c_a": self.c_a,
            "noise": self.noise.to_dict(),
            "d": self.d,
            "mode": self.mode,
            "rho": self.rho,
            **({"truth": list(self.truth)} if self.truth else {}),
        }


def mixing_condition(d: int, p: float, gamma: float) -> bool:
    """Whether (2 + gamma) d < 2 gamma p (algebraic beta-mixing at rate gamma)."""
    return (2.0 + gamma) * d < 2.0 * gamma * p


def gaussian_ar1_beta(q: int, rho: float, n_nodes: int = 4001) -> float:
    """beta-mixing coefficient beta(q) of a stationary Gaussian AR(1) (any monotone transform).

    For a stationary Markov chain beta(q) = E || P^q(X_0, .) - pi ||_TV; here
    P^q(x, .) = N(rho^q x, 1 - rho^(2q)) and pi = N(0, 1). The total variation
    distance between the two normals is computed in closed form from their
    crossing points and the outer expectation by Gauss-Hermite quadrature.
    """
    if q < 1:
        raise DomainError("q must be >= 1")
    if rho == 0.0:
        return 0.0
    r = rho**q
    s2 = 1.0 - r * r
    s = np.sqrt(s2)
    nodes, weights = np.polynomial.hermite_e.hermegauss(min(n_nodes, 200))
    weights = weights / weights.sum()
    tv = np.array([_tv_normals(r * x, s) for x in nodes])
    return float(np.dot(weights, tv))


def _tv_normals(m: float, s: float) -> float:
    """TV distance between N(m, s^2) and N(0, 1) with s < 1."""
    # log-density difference is quadratic in z; solve for its roots
    a = 0.5 * (1.0 - 1.0 / (s * s))
    b = m / (s * s)
    c = -0.5 * m * m / (s * s) - np.log(s)
    disc = b * b - 4.0 * a * c
    if disc <= 0:
        return 0.0
    root = np.sqrt(disc)
    z1, z2 = sorted(((-b - root) / (2 * a), (-b + root) / (2 * a)))
    # N(m, s^2) exceeds N(0, 1) between the roots
    p_in = special.ndtr((z2 - m) / s) - special.ndtr((z1 - m) / s)
    q_in = special.ndtr(z2) - special.ndtr(z1)
    return float(p_in - q_in)
