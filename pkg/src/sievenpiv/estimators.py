"""Sieve NPIV and sieve least-squares estimators.

Everything is computed in orthonormalized coordinates. With
``B~ = B T_b`` and ``Psi~ = Psi T_psi`` (``T`` the inverse square root of a
Gram matrix), ``S^ = Psi~' B~ / n`` and

    coef = [S^ G^- S^']^- S^ G^- B~' Y / n,    G = B~' B~ / n,

so that ``h^(y2) = psi~(y2)' coef``. The estimator is invariant to the
choice of orthonormalizing measure; the measure only affects conditioning.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import numerics
from .errors import (
    ContractViolation,
    DomainError,
    IllPosednessError,
    RankDeficiencyError,
    SchemaError,
)
from .sieve import (
    BasisHandle,
    EmpiricalSample,
    RankDeficiencyWarning,
    SieveSpec,
    Uniform,
    orthonormalize,
    uniform_grid,
)

PINV_RTOL = 1e-10
RANK_RTOL = 1e-10
DENOM_TOL = 1e-10
MEASURES = ("empirical", "uniform")


def _as_2d(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise DomainError(f"{name} must be a vector or a matrix")
    return a


@dataclass(frozen=True, eq=False)
class Sample:
    """Observations (Y1, Y2, X); ``y2`` is n x d and ``x`` is n x d_x."""

    y1: np.ndarray
    y2: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y1 = np.asarray(self.y1, dtype=float).ravel()
        y2 = _as_2d(self.y2, "y2")
        x = _as_2d(self.x, "x")
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y2", y2)
        object.__setattr__(self, "x", x)
        if not (y1.size == y2.shape[0] == x.shape[0]):
            raise DomainError("y1, y2 and x must have the same number of rows")
        if y1.size == 0:
            raise DomainError("sample is empty")
        if not np.all(np.isfinite(y1)):
            raise DomainError("y1 has non-finite entries")
        for name, a in (("y2", y2), ("x", x)):
            if not np.all(np.isfinite(a)) or np.any(a < 0.0) or np.any(a > 1.0):
                raise DomainError(f"{name} must lie in the unit cube")

    @property
    def n(self) -> int:
        return self.y1.size

    def with_y1(self, y1) -> "Sample":
        return Sample(y1, self.y2, self.x)

    def columns(self) -> list[str]:
        return (
            ["y1"]
            + [f"y2_{i + 1}" for i in range(self.y2.shape[1])]
            + [f"x_{i + 1}" for i in range(self.x.shape[1])]
        )

    def to_csv(self, path) -> None:
        data = np.column_stack([self.y1, self.y2, self.x])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns())
            for row in data:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "Sample":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise SchemaError(f"{path}: file is empty") from None
            rows = [r for r in reader if r]
        return cls.from_columns(header, rows, source=str(path))

    @classmethod
    def from_columns(cls, header: list[str], rows, source: str = "input") -> "Sample":
        missing = []
        if "y1" not in header:
            missing.append("y1")
        y2_cols = sorted((h for h in header if h.startswith("y2_")), key=_col_index)
        x_cols = sorted((h for h in header if h.startswith("x_")), key=_col_index)
        if not y2_cols:
            missing.append("y2_1")
        if not x_cols:
            missing.append("x_1")
        if missing:
            raise SchemaError(f"{source}: missing column(s) {', '.join(missing)}")
        for prefix, cols in (("y2_", y2_cols), ("x_", x_cols)):
            expected = [f"{prefix}{i + 1}" for i in range(len(cols))]
            if cols != expected:
                raise SchemaError(f"{source}: columns {cols} are not numbered {expected}")
        try:
            data = np.array([[float(v) for v in r] for r in rows], dtype=float)
        except ValueError as exc:
            raise SchemaError(f"{source}: non-numeric entry ({exc})") from None
        if data.ndim != 2 or data.shape[0] == 0 or data.shape[1] != len(header):
            raise SchemaError(f"{source}: rows do not match the {len(header)}-column header")
        idx = {h: i for i, h in enumerate(header)}
        return cls(
            data[:, idx["y1"]],
            data[:, [idx[c] for c in y2_cols]],
            data[:, [idx[c] for c in x_cols]],
        )


def _col_index(name: str) -> int:
    try:
        return int(name.rsplit("_", 1)[1])
    except ValueError:
        raise SchemaError(f"column {name!r} has no numeric suffix") from None


@dataclass(frozen=True)
class Diagnostics:
    """Per-fit numerical diagnostics.

    ``ident_stat_b`` and ``ident_stat_psi`` are the spectral norms of
    ``B~'B~/n - I`` and ``Psi~'Psi~/n - I`` for the handles' measure (they
    vanish up to rounding under the empirical measure).
    """

    sigma_hat_jk: float
    ident_stat_b: float
    ident_stat_psi: float
    denom_min_eig: float
    cond_b: float
    truncated: bool
    measure: str
    n: int
    J: int
    K: int

    def to_dict(self) -> dict:
        return {
            "sigma_hat_jk": self.sigma_hat_jk,
            "ident_stat_b": self.ident_stat_b,
            "ident_stat_psi": self.ident_stat_psi,
            "denom_min_eig": self.denom_min_eig,
            "cond_b": self.cond_b,
            "truncated": self.truncated,
            "measure": self.measure,
            "n": self.n,
            "j": self.J,
            "k": self.K,
        }


@dataclass(frozen=True, eq=False)
class NpivFit:
    coef: np.ndarray
    psi_handle: BasisHandle
    b_handle: BasisHandle
    diag: Diagnostics
    mode: str = "npiv"

    def __call__(self, points) -> np.ndarray:
        return predict(self, points)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "psi_spec": self.psi_handle.spec.to_dict(),
            "b_spec": self.b_handle.spec.to_dict(),
            "coef": [float(c) for c in self.coef],
            "diagnostics": self.diag.to_dict(),
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _handle(spec: SieveSpec, points: np.ndarray, measure: str) -> BasisHandle:
    if measure not in MEASURES:
        raise DomainError(f"measure must be one of {MEASURES}, got {measure!r}")
    if spec.d != points.shape[1]:
        raise DomainError(f"basis has dimension {spec.d} but data have {points.shape[1]} columns")
    if spec.dim > points.shape[0]:
        raise ContractViolation(f"need K <= n, got K={spec.dim}, n={points.shape[0]}")
    if measure == "uniform":
        return orthonormalize(spec, Uniform())
    raw = spec(points)
    g = raw.T @ raw / raw.shape[0]
    eig = np.linalg.eigvalsh(0.5 * (g + g.T))
    if eig[0] <= RANK_RTOL * max(eig[-1], 1e-300):
        raise RankDeficiencyError("empirical Gram matrix is numerically singular", float(eig[0]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficiencyWarning)
        return orthonormalize(spec, EmpiricalSample(points))


class NpivDesign:
    """The Y-independent part of a sieve NPIV fit, reusable across outcome vectors.

    The estimator is linear in Y, so ``solve(y)`` for several outcomes (data,
    oracle values, residuals) shares one factorization.
    """

    def __init__(self, y2, x, psi_spec: SieveSpec, b_spec: SieveSpec,
                 measure: str = "empirical", mode: str = "npiv"):
        y2 = _as_2d(y2, "y2")
        x = _as_2d(x, "x")
        if psi_spec.dim > b_spec.dim:
            raise ContractViolation(f"need J <= K, got J={psi_spec.dim}, K={b_spec.dim}")
        n = x.shape[0]
        self.mode = mode
        self.b_handle = _handle(b_spec, x, measure)
        bt = self.b_handle(x)
        if mode == "ls":
            self.psi_handle = self.b_handle
            pt = bt
        else:
            self.psi_handle = _handle(psi_spec, y2, measure)
            pt = self.psi_handle(y2)
        self.n = n
        self.bt = bt
        gb = bt.T @ bt / n
        gpsi = pt.T @ pt / n
        s_hat = pt.T @ bt / n
        self.s_hat = s_hat
        gb_pinv, truncated = numerics.pinv(gb, PINV_RTOL, return_truncated=True)
        eig_b = np.linalg.eigvalsh(0.5 * (gb + gb.T))
        if eig_b[0] <= RANK_RTOL * max(eig_b[-1], 1e-300):
            raise RankDeficiencyError("orthonormalized Gram of b is numerically singular",
                                      float(eig_b[0]))
        sigma = float(numerics.svd(s_hat).singular_values[-1])
        denom = s_hat @ gb_pinv @ s_hat.T
        denom = 0.5 * (denom + denom.T)
        denom_eig = np.linalg.eigvalsh(denom)
        if denom_eig[0] <= DENOM_TOL * max(denom_eig[-1], 1.0):
            raise IllPosednessError("denominator matrix is numerically singular", sigma)
        denom_pinv = numerics.pinv(denom, PINV_RTOL)
        # coef = M @ (B~' Y / n)
        self.solver = denom_pinv @ s_hat @ gb_pinv
        eye_k = np.eye(gb.shape[0])
        eye_j = np.eye(gpsi.shape[0])
        self.diag = Diagnostics(
            sigma_hat_jk=sigma,
            ident_stat_b=numerics.spectral_norm(gb - eye_k),
            ident_stat_psi=numerics.spectral_norm(gpsi - eye_j),
            denom_min_eig=float(denom_eig[0]),
            cond_b=float(eig_b[-1] / eig_b[0]),
            truncated=bool(truncated),
            measure=measure,
            n=n,
            J=psi_spec.dim,
            K=b_spec.dim,
        )

    def solve(self, y) -> NpivFit:
        y = np.asarray(y, dtype=float).ravel()
        if y.size != self.n:
            raise DomainError(f"outcome has {y.size} entries, expected {self.n}")
        coef = self.solver @ (self.bt.T @ y / self.n)
        return NpivFit(coef, self.psi_handle, self.b_handle, self.diag, self.mode)


def fit_sieve_npiv(sample: Sample, psi_spec: SieveSpec, b_spec: SieveSpec,
                   measure: str = "empirical") -> NpivFit:
    """Sieve NPIV estimate of h0 with ``psi_spec`` on Y2 and ``b_spec`` on X."""
    return NpivDesign(sample.y2, sample.x, psi_spec, b_spec, measure).solve(sample.y1)


def fit_sieve_ls(sample: Sample, b_spec: SieveSpec, measure: str = "empirical") -> NpivFit:
    """Sieve least-squares regression of Y1 on X (the NPIV estimator with Y2 = X, psi = b)."""
    return NpivDesign(sample.x, sample.x, b_spec, b_spec, measure, mode="ls").solve(sample.y1)


def empirical_projection(sample: Sample, psi_spec: SieveSpec, b_spec: SieveSpec,
                         h_values, measure: str = "empirical") -> NpivFit:
    """P_n h0: the NPIV formula applied to ``h_values = h0(Y2_i)`` instead of Y1."""
    return NpivDesign(sample.y2, sample.x, psi_spec, b_spec, measure).solve(h_values)


def predict(fit: NpivFit, points) -> np.ndarray:
    return fit.psi_handle(points) @ fit.coef


# ---------------------------------------------------------------------------
# error metrics
# ---------------------------------------------------------------------------


def default_grid_size(d: int) -> int:
    return 1001 if d == 1 else 101


def _evaluate(fn, pts: np.ndarray) -> np.ndarray:
    return np.asarray(fn(pts), dtype=float).ravel()


def sup_norm_distance(fit: Callable, oracle_fn: Callable, grid_per_dim: int | None = None,
                      d: int | None = None) -> float:
    """max |fit - oracle| over a uniform tensor grid on [0, 1]^d."""
    if d is None:
        d = fit.psi_handle.d if isinstance(fit, NpivFit) else 1
    grid_per_dim = grid_per_dim or default_grid_size(d)
    if grid_per_dim < 2:
        raise DomainError("grid_per_dim must be >= 2")
    pts = uniform_grid(grid_per_dim, d)
    return float(np.max(np.abs(_evaluate(fit, pts) - _evaluate(oracle_fn, pts))))


def default_l2_rule(d: int) -> numerics.QuadratureRule:
    return numerics.gauss_legendre(10, 256 if d == 1 else 32)


def l2_distance(fit: Callable, oracle_fn: Callable, rule: numerics.QuadratureRule | None = None,
                d: int | None = None) -> float:
    """L2([0, 1]^d) distance by tensorized quadrature."""
    if d is None:
        d = fit.psi_handle.d if isinstance(fit, NpivFit) else 1
    rule = rule or default_l2_rule(d)
    nodes, weights = numerics.tensor_rule(*([rule] * d))
    diff = _evaluate(fit, nodes) - _evaluate(oracle_fn, nodes)
    return float(np.sqrt(np.dot(weights, diff * diff)))
