"""Matrix Bernstein tail bounds and Monte Carlo checks on Gram-deviation ensembles.

The Gram ensemble is ``Xi_i = (b~(X_i) b~(X_i)' - I_K) / n`` with ``b~``
orthonormal under the uniform law of X, so ``sum_i Xi_i = B~'B~/n - I_K``.
Its parameters are

    R_n      = max(zeta0^2 - 1, 1) / n
    sigma2_n = || E[ ||b~||^2 b~ b~'] - I || / n
    s2_n     = || E[(b~ b~' - I)^2] || / n^2

(the cross terms of ``s2_n`` vanish for independent draws and are bounded by
the diagonal ones in general). Replication ``r`` draws from
``default_rng(seed + r)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import signal, special, stats

from . import numerics
from .dgp import gaussian_ar1_beta
from .errors import ConfigurationError, DomainError
from .sieve import BasisHandle, SieveSpec, Uniform, orthonormalize, sieve_for_dim

WILSON_LEVEL = 0.99
VIOLATION_SE = 3.0


@dataclass(frozen=True)
class BoundParams:
    R_n: float
    sigma2_n: float
    s2_n: float = 0.0
    q: int = 1
    beta_q: float = 0.0
    source: str = "quadrature"

    def __post_init__(self):
        for name in ("R_n", "sigma2_n", "s2_n", "beta_q"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")
        if self.q < 1:
            raise DomainError("q must be >= 1")

    def to_dict(self) -> dict:
        return {
            "r_n": self.R_n,
            "sigma2_n": self.sigma2_n,
            "s2_n": self.s2_n,
            "q": self.q,
            "beta_q": self.beta_q,
            "source": self.source,
        }


def tropp_tail(t, params: BoundParams, dims: tuple[int, int]):
    """(d1 + d2) exp(-t^2/2 / (sigma2 + R t / 3)) for independent mean-zero summands."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("t must be non-negative")
    d1, d2 = dims
    den = params.sigma2_n + params.R_n * t_arr / 3.0
    with np.errstate(divide="ignore", invalid="ignore"):
        expo = np.where(t_arr > 0, -0.5 * t_arr**2 / np.where(den > 0, den, 1.0), 0.0)
    expo = np.where((den <= 0) & (t_arr > 0), -np.inf, expo)
    out = (d1 + d2) * np.exp(expo)
    return float(out) if out.ndim == 0 else out


def beta_tropp_tail(t, params: BoundParams, dims: tuple[int, int], n: int):
    """Bound on P(||sum Xi_i|| >= 6t) for a stationary beta-mixing sequence.

    Three terms: the coupling cost (n/q) beta(q), the remainder block, and the
    blocked Bernstein term 2(d1 + d2) exp(-t^2/2 / (n q s2 + q R t / 3)). The
    remainder sum has ``r = n - q [n/q] < q`` summands each bounded by ``R_n``
    in norm, so it is bounded by ``min(1, r R_n / t)`` (zero when r = 0).
    """
    q = params.q
    if not 1 <= q <= n / 2:
        raise DomainError(f"block length q must lie in [1, n/2], got q={q}, n={n}")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("t must be non-negative")
    d1, d2 = dims
    r = n - q * (n // q)
    coupling = n / q * params.beta_q
    with np.errstate(divide="ignore", invalid="ignore"):
        rem = np.where(t_arr > 0, np.minimum(1.0, r * params.R_n / np.where(t_arr > 0, t_arr, 1.0)), 1.0)
    rem = np.where(r == 0, 0.0, rem)
    den = n * q * params.s2_n + q * params.R_n * t_arr / 3.0
    with np.errstate(divide="ignore", invalid="ignore"):
        expo = np.where(t_arr > 0, -0.5 * t_arr**2 / np.where(den > 0, den, 1.0), 0.0)
    expo = np.where((den <= 0) & (t_arr > 0), -np.inf, expo)
    out = coupling + rem + 2.0 * (d1 + d2) * np.exp(expo)
    return float(out) if out.ndim == 0 else out


def default_block_length(n: int) -> int:
    return max(1, min(n // 2, math.ceil(n ** (1.0 / 3.0))))


# ---------------------------------------------------------------------------
# identifiability statistic
# ---------------------------------------------------------------------------


def ident_stat(sample_x, handle: BasisHandle) -> float:
    """||B~'B~/n - I_K||: worst-case gap between empirical and population L2 norms on the sieve."""
    bt = handle(sample_x)
    g = bt.T @ bt / bt.shape[0]
    return numerics.spectral_norm(g - np.eye(g.shape[0]))


def _batched_stat(bt: np.ndarray) -> np.ndarray:
    """ident_stat for a stack (reps, n, K) of evaluated bases."""
    n, k = bt.shape[1], bt.shape[2]
    g = np.einsum("rni,rnj->rij", bt, bt) / n - np.eye(k)
    eig = np.linalg.eigvalsh(g)
    return np.max(np.abs(eig), axis=1)


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


def _latent_paths(n: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    e = rng.standard_normal(n)
    if rho == 0.0:
        return e
    innov = math.sqrt(1.0 - rho * rho)
    z, _ = signal.lfilter([innov], [1.0, -rho], e[1:], zi=[rho * e[0]])
    return np.concatenate([[e[0]], z])


def draw_regressors(n: int, d: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform-marginal regressors; a Gaussian-copula AR(1) per axis when rho > 0."""
    z = np.column_stack([_latent_paths(n, rho, rng) for _ in range(d)])
    return special.ndtr(z)


@dataclass(frozen=True)
class EnsembleSpec:
    """Gram-deviation ensemble (``kind="gram"``) or a user-supplied one (``"custom"``).

    For ``"gram"`` the basis family is ``family`` with ``order`` (splines),
    ``n_vanishing`` (wavelets) and dimension ``K``; ``draw`` is ignored. For
    ``"custom"``, ``draw(rng, n)`` returns an (n, d1, d2) stack of summands
    and ``params`` must be supplied.
    """

    kind: str = "gram"
    n: int = 500
    K: int = 16
    d: int = 1
    family: str = "bspline"
    order: int = 4
    n_vanishing: int = 2
    rho: float = 0.0
    dims: tuple | None = None
    draw: Callable | None = field(default=None, repr=False)
    params: BoundParams | None = None

    def __post_init__(self):
        if self.kind not in ("gram", "custom"):
            raise ConfigurationError(f"unknown ensemble kind {self.kind!r}")
        if self.kind == "custom" and (self.draw is None or self.dims is None or self.params is None):
            raise ConfigurationError("custom ensembles need draw, dims and params")
        if not 0.0 <= self.rho < 1.0:
            raise DomainError(f"rho must lie in [0, 1), got {self.rho}")
        if self.n < 2:
            raise DomainError("n must be >= 2")

    @property
    def shape(self) -> tuple[int, int]:
        if self.kind == "custom":
            return tuple(self.dims)
        return (self.K, self.K)

    def with_size(self, n: int | None = None, K: int | None = None) -> "EnsembleSpec":
        return replace(self, n=self.n if n is None else n, K=self.K if K is None else K)

    def sieve(self) -> SieveSpec:
        return sieve_for_dim(self.family, self.K, self.d, self.order, self.n_vanishing)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "n": self.n, "rho": self.rho}
        if self.kind == "gram":
            out.update({"k": self.K, "d": self.d, "family": self.family})
            if self.family == "bspline":
                out["order"] = self.order
            elif self.family == "wavelet":
                out["n_vanishing"] = self.n_vanishing
        else:
            out["dims"] = list(self.dims)
        return out


def _ensemble_handle(spec: EnsembleSpec) -> BasisHandle:
    return orthonormalize(spec.sieve(), Uniform())


def _uniform_nodes(handle: BasisHandle) -> tuple[np.ndarray, np.ndarray]:
    rules = []
    for ax in handle.spec.axes:
        edges = np.union1d(ax.breakpoints(), np.linspace(0.0, 1.0, 257))
        rules.append(numerics.composite_gauss_legendre(edges, 10))
    return numerics.tensor_rule(*rules)


def gram_bound_params(spec: EnsembleSpec, q: int = 1) -> BoundParams:
    """R_n, sigma2_n, s2_n (and beta(q) if mixing) for a Gram ensemble by quadrature."""
    if spec.kind == "custom":
        return spec.params
    handle = _ensemble_handle(spec)
    nodes, weights = _uniform_nodes(handle)
    bt = handle(nodes)
    sq = np.sum(bt * bt, axis=1)
    k = handle.dim
    m4 = (bt * (weights * sq)[:, None]).T @ bt
    eye = np.eye(k)
    # (b b' - I)^2 = ||b||^2 b b' - 2 b b' + I and E[b b'] = I
    e_sq = m4 - eye
    zeta_sq = max(float(sq.max()), _grid_zeta_sq(handle))
    n = spec.n
    beta = gaussian_ar1_beta(q, spec.rho) if spec.rho > 0 else 0.0
    return BoundParams(
        R_n=max(zeta_sq - 1.0, 1.0) / n,
        sigma2_n=numerics.spectral_norm(e_sq) / n,
        s2_n=numerics.spectral_norm(e_sq) / n**2,
        q=q,
        beta_q=beta,
    )


def _grid_zeta_sq(handle: BasisHandle) -> float:
    axis = np.union1d(np.linspace(0.0, 1.0, 2001), handle.spec.axes[0].breakpoints())
    mesh = np.meshgrid(*([axis] * handle.d), indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    best = 0.0
    for chunk in np.array_split(pts, max(1, pts.shape[0] // 50000)):
        best = max(best, float(np.max(np.sum(handle(chunk) ** 2, axis=1))))
    return best


def simulate_norms(spec: EnsembleSpec, reps: int, seed: int, chunk: int = 200) -> np.ndarray:
    """||sum_i Xi_i|| for ``reps`` independent replications."""
    if reps < 1:
        raise DomainError("reps must be >= 1")
    out = np.empty(reps)
    if spec.kind == "custom":
        for r in range(reps):
            xi = np.asarray(spec.draw(np.random.default_rng(seed + r), spec.n))
            out[r] = numerics.spectral_norm(xi.sum(axis=0))
        return out
    handle = _ensemble_handle(spec)
    for start in range(0, reps, chunk):
        stop = min(reps, start + chunk)
        xs = [draw_regressors(spec.n, spec.d, spec.rho, np.random.default_rng(seed + r))
              for r in range(start, stop)]
        bt = handle(np.concatenate(xs)).reshape(stop - start, spec.n, handle.dim)
        out[start:stop] = _batched_stat(bt)
    return out


def wilson_interval(successes: np.ndarray, trials: int, z: float) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(successes, dtype=float) / trials
    den = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / den
    half = z * np.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / den
    return center - half, center + half


@dataclass(frozen=True)
class TailCheck:
    """Empirical tail frequencies against an analytic bound on a threshold grid."""

    thresholds: np.ndarray
    empirical: np.ndarray
    wilson_lo: np.ndarray
    wilson_hi: np.ndarray
    bound: np.ndarray
    violations: np.ndarray
    reps: int
    params: BoundParams

    @property
    def n_violations(self) -> int:
        return int(np.sum(self.violations))

    def rows(self) -> list[dict]:
        return [
            {
                "threshold": float(t),
                "empirical": float(e),
                "wilson_lo": float(lo),
                "wilson_hi": float(hi),
                "bound": float(b),
                "violation": bool(v),
            }
            for t, e, lo, hi, b, v in zip(
                self.thresholds, self.empirical, self.wilson_lo, self.wilson_hi, self.bound, self.violations
            )
        ]


def empirical_tail(spec: EnsembleSpec, reps: int = 10_000, seed: int = 0, n_grid: int = 50,
                   q: int | None = None, norms: np.ndarray | None = None) -> TailCheck:
    """Compare P(||sum Xi|| >= threshold) with the independent or the mixing bound.

    With ``rho = 0`` the comparison is against :func:`tropp_tail`; otherwise
    thresholds are ``6t`` and the bound is :func:`beta_tropp_tail` at ``t``.
    A violation is an empirical frequency whose Wilson lower limit with
    ``z = 3`` lies above the bound.
    """
    mixing = spec.rho > 0
    if mixing and q is None:
        q = default_block_length(spec.n)
    params = gram_bound_params(spec, q or 1)
    if norms is None:
        norms = simulate_norms(spec, reps, seed)
    reps = norms.size
    top = float(np.max(norms)) * 1.05 or 1.0
    thresholds = np.linspace(top / n_grid, top, n_grid)
    counts = np.array([np.sum(norms >= t) for t in thresholds])
    if mixing:
        bound = beta_tropp_tail(thresholds / 6.0, params, spec.shape, spec.n)
    else:
        bound = tropp_tail(thresholds, params, spec.shape)
    z99 = float(stats.norm.ppf(0.5 + WILSON_LEVEL / 2))
    lo, hi = wilson_interval(counts, reps, z99)
    lo3, _ = wilson_interval(counts, reps, VIOLATION_SE)
    return TailCheck(thresholds, counts / reps, lo, hi, np.asarray(bound), lo3 > bound, reps, params)


# ---------------------------------------------------------------------------
# scaling studies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConcentrationReport:
    """Per-(n, K) medians of the identifiability statistic plus fitted exponents."""

    spec: EnsembleSpec
    cells: list
    exponent_n: float
    exponent_n_se: float
    exponent_k: float
    exponent_k_se: float
    envelope_ratio_spread: float
    tail_checks: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {
            "ensemble": self.spec.to_dict(),
            "exponent_n": self.exponent_n,
            "exponent_n_se": self.exponent_n_se,
            "exponent_k": self.exponent_k,
            "exponent_k_se": self.exponent_k_se,
            "envelope_ratio_spread": self.envelope_ratio_spread,
        }
        for name, check in self.tail_checks.items():
            out[f"{name}_violations"] = check.n_violations
            out[f"{name}_params"] = check.params.to_dict()
        return out

    def to_csv(self, path) -> None:
        cols = ["n", "k", "median", "q25", "q75", "envelope_ratio"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for c in self.cells:
                w.writerow([c["n"], c["k"]] + [repr(float(c[k])) for k in cols[2:]])

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _ols(design: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    dof = design.shape[0] - design.shape[1]
    if dof <= 0:
        return coef, np.full(coef.shape, np.nan)
    resid = y - design @ coef
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.pinv(design.T @ design)
    return coef, np.sqrt(np.maximum(np.diag(cov), 0.0))


def scaling_study(spec: EnsembleSpec, n_grid, k_grid, reps: int = 200, seed: int = 0) -> ConcentrationReport:
    """Median identifiability statistic over an (n, K) grid.

    The fitted model is ``log median = a + b log n + c log K``; with a single
    K (or n) the corresponding exponent is reported as NaN. The envelope
    ``sqrt(K log K / n)`` ratio spread is max/min of median/envelope.
    """
    n_grid = [int(v) for v in n_grid]
    k_grid = [int(v) for v in k_grid]
    if not n_grid or not k_grid:
        raise DomainError("grids must be non-empty")
    cells = []
    for n in n_grid:
        for k in k_grid:
            sub = spec.with_size(n=n, K=k)
            stat = simulate_norms(sub, reps, seed)
            q25, med, q75 = np.quantile(stat, [0.25, 0.5, 0.75])
            env = math.sqrt(k * max(math.log(k), 1.0) / n)
            cells.append({"n": n, "k": k, "median": med, "q25": q25, "q75": q75, "envelope_ratio": med / env})
    logm = np.log([c["median"] for c in cells])
    cols = [np.ones(len(cells))]
    use_n, use_k = len(set(n_grid)) > 1, len(set(k_grid)) > 1
    if use_n:
        cols.append(np.log([c["n"] for c in cells]))
    if use_k:
        cols.append(np.log([c["k"] for c in cells]))
    coef, se = _ols(np.column_stack(cols), logm)
    i = 1
    en = en_se = ek = ek_se = float("nan")
    if use_n:
        en, en_se = float(coef[i]), float(se[i])
        i += 1
    if use_k:
        ek, ek_se = float(coef[i]), float(se[i])
    ratios = [c["envelope_ratio"] for c in cells]
    return ConcentrationReport(spec, cells, en, en_se, ek, ek_se, float(max(ratios) / min(ratios)))
