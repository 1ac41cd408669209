"""Monte Carlo rate studies for the sieve LS and NPIV estimators.

Replication ``r`` at every sample size uses ``seed = base_seed + r``. Errors
are collected per (n, replication) and reduced afterwards, so results do not
depend on the order in which replications finish.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dgp import NoiseSpec, NpivDgp, mixing_condition
from .errors import ConfigurationError, SieveError
from .estimators import NpivDesign, default_grid_size, default_l2_rule
from .numerics import tensor_rule
from .sieve import SieveSpec, sieve_for_dim, uniform_grid

MAX_FAILURE_RATE = 0.10
SLOPE_AXES = ("n_over_log_n", "log_n", "log_log_n")


@dataclass(frozen=True)
class TuningRule:
    """Sieve dimensions as a function of n.

    ``kind="ls"``:     K = ceil(c (n / log n)^(1 / (2p + d))) per axis, J = K.
    ``kind="mild"``:   K = ceil(c (n / log n)^(1 / (2(p + s) + d))) per axis, J = ceil(K / c0).
    ``kind="severe"``: J = ceil(c (log n)^(1 / s)) per axis, K = ceil(c0 J).

    ``exponent`` overrides the per-axis exponent of the ls/mild rules.
    Per-axis dimensions are raised to ``min_dim`` (the spline order) and, for
    wavelets, rounded up to a power of two.
    """

    kind: str = "mild"
    c: float = 1.0
    c0: float = 1.0
    exponent: float | None = None

    def __post_init__(self):
        if self.kind not in ("ls", "mild", "severe"):
            raise ConfigurationError(f"unknown tuning rule {self.kind!r}")
        if self.c <= 0 or self.c0 < 1:
            raise ConfigurationError("tuning needs c > 0 and c0 >= 1")

    def axis_dims(self, n: int, p: float, varsigma: float, d: int) -> tuple[int, int]:
        if self.kind == "severe":
            j = math.ceil(self.c * math.log(n) ** (1.0 / varsigma))
            return j, math.ceil(self.c0 * j)
        if self.exponent is not None:
            e = self.exponent
        elif self.kind == "ls":
            e = 1.0 / (2.0 * p + d)
        else:
            e = 1.0 / (2.0 * (p + varsigma) + d)
        k = math.ceil(self.c * (n / math.log(n)) ** e)
        if self.kind == "ls":
            return k, k
        return math.ceil(k / self.c0), k

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "c": self.c, "c0": self.c0}
        if self.exponent is not None:
            out["exponent"] = self.exponent
        return out


def _fit_axis_dim(k: int, family: str, min_dim: int) -> int:
    k = max(k, min_dim)
    if family == "wavelet":
        k = 1 << (k - 1).bit_length()
    return k


@dataclass(frozen=True)
class RateStudyConfig:
    dgp: NpivDgp
    mode: str = "npiv"
    tuning: TuningRule = field(default_factory=TuningRule)
    family: str = "cosine"
    order: int = 4
    n_vanishing: int = 2
    n_grid: tuple = (1000, 2000, 4000, 8000, 16000)
    reps: int = 200
    metrics: tuple = ("sup", "l2")
    base_seed: int = 0
    measure: str = "empirical"
    slope_axes: dict = field(default_factory=lambda: {"sup": "n_over_log_n", "l2": "n_over_log_n"})
    targets: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    min_n_grid: int = 4
    min_reps: int = 50

    def __post_init__(self):
        if self.mode not in ("ls", "npiv"):
            raise ConfigurationError(f"unknown estimator mode {self.mode!r}")
        if self.mode != self.dgp.mode:
            raise ConfigurationError(f"estimator mode {self.mode!r} does not match the model mode {self.dgp.mode!r}")
        if (self.mode == "ls") != (self.tuning.kind == "ls"):
            raise ConfigurationError("LS studies need the ls tuning rule and NPIV studies a mild/severe one")
        kind = self.dgp.profile.kind
        if self.mode == "npiv" and kind != "custom" and self.tuning.kind != kind:
            raise ConfigurationError(
                f"tuning rule {self.tuning.kind!r} does not match the {self.dgp.profile.kind!r} profile"
            )
        n_grid = tuple(int(v) for v in self.n_grid)
        if len(n_grid) < self.min_n_grid or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
            raise ConfigurationError(f"n_grid must be increasing with at least {self.min_n_grid} entries")
        object.__setattr__(self, "n_grid", n_grid)
        if self.reps < self.min_reps:
            raise ConfigurationError(f"reps must be >= {self.min_reps}")
        for m in self.metrics:
            if m not in ("sup", "l2"):
                raise ConfigurationError(f"unknown error metric {m!r}")
            if self.slope_axes.get(m, "n_over_log_n") not in SLOPE_AXES:
                raise ConfigurationError(f"unknown slope axis for {m!r}")

    def dims(self, n: int) -> tuple[int, int]:
        """Total (J, K) at sample size n."""
        prof = self.dgp.profile
        j, k = self.tuning.axis_dims(n, self.dgp.p, prof.varsigma, self.dgp.d)
        min_dim = self.order if self.family == "bspline" else 1
        j = _fit_axis_dim(j, self.family, min_dim)
        k = _fit_axis_dim(max(k, j), self.family, min_dim)
        return j**self.dgp.d, k**self.dgp.d

    def specs(self, n: int) -> tuple[SieveSpec, SieveSpec]:
        j, k = self.dims(n)
        d = self.dgp.d
        return (
            sieve_for_dim(self.family, j, d, self.order, self.n_vanishing),
            sieve_for_dim(self.family, k, d, self.order, self.n_vanishing),
        )

    def target(self, metric: str) -> float | None:
        return self.targets.get(metric)

    def to_dict(self) -> dict:
        return {
            "dgp": self.dgp.to_dict(),
            "mode": self.mode,
            "tuning": self.tuning.to_dict(),
            "family": self.family,
            "order": self.order,
            "n_vanishing": self.n_vanishing,
            "n_grid": list(self.n_grid),
            "reps": self.reps,
            "metrics": list(self.metrics),
            "base_seed": self.base_seed,
            "measure": self.measure,
            "slope_axes": dict(self.slope_axes),
            "targets": dict(self.targets),
            "tolerances": dict(self.tolerances),
        }


def theoretical_slope(mode: str, p: float, d: int, varsigma: float = 0.0, kind: str = "mild") -> float:
    """Exponent of the sup-norm rate: -p/(2p+d) (LS), -p/(2(p+s)+d) (mild), -p/s (severe)."""
    if mode == "ls":
        return -p / (2.0 * p + d)
    if kind == "severe":
        return -p / varsigma
    return -p / (2.0 * (p + varsigma) + d)


def slope_regressor(n, axis: str) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    if axis == "n_over_log_n":
        return np.log(n / np.log(n))
    if axis == "log_n":
        return np.log(n)
    if axis == "log_log_n":
        return np.log(np.log(n))
    raise ConfigurationError(f"unknown slope axis {axis!r}")


def fit_slope(n, medians, iqr=None, axis: str = "n_over_log_n") -> tuple[float, float]:
    """Weighted least-squares slope of log median on the chosen transform of n.

    Weights are ``(median / IQR)^2``, the inverse squared relative spread, so
    that noisier cells count less on the log scale. Returns (slope, se).
    """
    x = slope_regressor(n, axis)
    y = np.log(np.asarray(medians, dtype=float))
    if iqr is None:
        w = np.ones_like(y)
    else:
        rel = np.asarray(iqr, dtype=float) / np.exp(y)
        w = np.where(rel > 0, 1.0 / np.maximum(rel, 1e-300) ** 2, 1.0)
    sw = np.sqrt(w / w.sum())
    design = np.column_stack([np.ones_like(x), x]) * sw[:, None]
    coef, *_ = np.linalg.lstsq(design, y * sw, rcond=None)
    dof = x.size - 2
    if dof <= 0:
        return float(coef[1]), float("nan")
    resid = y * sw - design @ coef
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(design.T @ design)
    return float(coef[1]), float(math.sqrt(max(cov[1, 1], 0.0)))


@dataclass
class RateTable:
    """Long-format error quantiles and fitted slopes."""

    rows: list
    slopes: dict
    config: dict
    dropped: list = field(default_factory=list)

    def medians(self, metric: str) -> tuple[np.ndarray, np.ndarray]:
        sel = [r for r in self.rows if r["metric"] == metric]
        return np.array([r["n"] for r in sel]), np.array([r["median"] for r in sel])

    def summary(self) -> dict:
        return {"config": self.config, "slopes": self.slopes, "dropped_cells": self.dropped}

    def to_csv(self, path) -> None:
        cols = ["n", "metric", "median", "q25", "q75", "j", "k", "failures"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.rows:
                w.writerow([r["n"], r["metric"], repr(float(r["median"])), repr(float(r["q25"])),
                            repr(float(r["q75"])), r["j"], r["k"], r["failures"]])

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


class _Evaluator:
    """Grids shared by every replication at a given dimension."""

    def __init__(self, dgp: NpivDgp):
        d = dgp.d
        self.sup_pts = uniform_grid(default_grid_size(d), d)
        self.l2_pts, self.l2_w = tensor_rule(*([default_l2_rule(d)] * d))
        self.h_sup = dgp.oracle_h(self.sup_pts)
        self.h_l2 = dgp.oracle_h(self.l2_pts)

    def errors(self, fit, metrics) -> dict:
        out = {}
        if "sup" in metrics:
            out["sup"] = float(np.max(np.abs(fit(self.sup_pts) - self.h_sup)))
        if "l2" in metrics:
            diff = fit(self.l2_pts) - self.h_l2
            out["l2"] = float(np.sqrt(np.dot(self.l2_w, diff * diff)))
        return out


def _one_rep(config: RateStudyConfig, n: int, r: int, specs, ev: _Evaluator, split: bool):
    sample = config.dgp.sample(n, config.base_seed + r)
    psi_spec, b_spec = specs
    try:
        design = NpivDesign(sample.y2, sample.x, psi_spec, b_spec, config.measure, mode=config.mode)
        fit = design.solve(sample.y1)
        out = ev.errors(fit, config.metrics)
        if split:
            proj = design.solve(config.dgp.oracle_h(sample.y2))
            out["variance"] = float(np.max(np.abs(fit(ev.sup_pts) - proj(ev.sup_pts))))
            out["bias"] = float(np.max(np.abs(proj(ev.sup_pts) - ev.h_sup)))
        return out
    except SieveError:
        return None


def _collect(config: RateStudyConfig, split: bool = False, threads: int = 1) -> tuple[dict, dict]:
    ev = _Evaluator(config.dgp)
    results = {}
    for n in config.n_grid:
        specs = config.specs(n)
        reps = range(config.reps)
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                res = list(pool.map(lambda r: _one_rep(config, n, r, specs, ev, split), reps))
        else:
            res = [_one_rep(config, n, r, specs, ev, split) for r in reps]
        results[n] = res
    return results, ev


def _aggregate(config: RateStudyConfig, results: dict, metrics) -> RateTable:
    rows, dropped = [], []
    for n in config.n_grid:
        res = results[n]
        failures = sum(1 for v in res if v is None)
        j, k = config.dims(n)
        if failures > MAX_FAILURE_RATE * len(res):
            dropped.append({"n": n, "failures": failures})
            continue
        for m in metrics:
            vals = np.array([v[m] for v in res if v is not None])
            q25, med, q75 = np.quantile(vals, [0.25, 0.5, 0.75])
            rows.append({"n": n, "metric": m, "median": float(med), "q25": float(q25),
                         "q75": float(q75), "j": j, "k": k, "failures": failures})
    slopes = {}
    for m in metrics:
        sel = [r for r in rows if r["metric"] == m]
        if len(sel) < 2 or min(r["median"] for r in sel) <= 0:
            # a log-log slope needs two cells with positive medians
            slopes[m] = {"slope": None, "se": None, "target": config.target(m), "pass": False}
            continue
        axis = config.slope_axes.get(m, "n_over_log_n")
        slope, se = fit_slope([r["n"] for r in sel], [r["median"] for r in sel],
                              [r["q75"] - r["q25"] for r in sel], axis)
        target = config.target(m)
        tol = config.tolerances.get(m)
        entry = {"slope": slope, "se": se, "axis": axis, "target": target, "tolerance": tol}
        entry["pass"] = None if target is None or tol is None else bool(abs(slope - target) <= tol)
        slopes[m] = entry
    return RateTable(rows, slopes, config.to_dict(), dropped)


def run_rate_study(config: RateStudyConfig, threads: int = 1) -> RateTable:
    """Median errors per n and their fitted log-log slopes."""
    results, _ = _collect(config, threads=threads)
    return _aggregate(config, results, config.metrics)


def variance_bias_split(config: RateStudyConfig, threads: int = 1) -> RateTable:
    """Medians of ||h^ - P_n h0||_inf (variance) and ||P_n h0 - h0||_inf (bias) per n.

    The variance slope is fitted on log n.
    """
    cfg = replace(config, slope_axes={**config.slope_axes, "variance": "log_n", "bias": "log_n"})
    results, _ = _collect(cfg, split=True, threads=threads)
    return _aggregate(cfg, results, tuple(config.metrics) + ("variance", "bias"))


def student_t_dof_for_delta(delta: float, margin: float = 0.1) -> float:
    """Degrees of freedom whose t law has a finite moment of order 2 + delta (just barely)."""
    return 2.0 + delta + margin


def heavy_tail_sweep(config: RateStudyConfig, delta_grid, threads: int = 1) -> list[dict]:
    """LS rate slopes under Student-t noise with finite (2 + delta)-th moments.

    Noise keeps the baseline's standard deviation. Each row reports whether
    delta meets the moment threshold ``d / p``; rows below it carry no target.
    """
    if config.mode != "ls":
        raise ConfigurationError("the heavy-tail sweep is defined for LS studies")
    dgp = config.dgp
    threshold = dgp.d / dgp.p
    target = config.target("sup")
    tol = config.tolerances.get("sup")
    out = []
    base = run_rate_study(config, threads)
    out.append(_sweep_row("gaussian", None, None, True, base, target, tol))
    for delta in delta_grid:
        dof = student_t_dof_for_delta(delta)
        noise = NoiseSpec("student_t", dof=dof, scale=dgp.noise.std, delta_moment=delta)
        table = run_rate_study(replace(config, dgp=replace(dgp, noise=noise)), threads)
        ok = delta >= threshold - 1e-12
        out.append(_sweep_row("student_t", dof, delta, ok, table, target if ok else None, tol))
    return out


def _sweep_row(family, dof, delta, admissible, table: RateTable, target, tol) -> dict:
    s = table.slopes.get("sup", {})
    slope = s.get("slope")
    passed = None
    if target is not None and tol is not None and slope is not None:
        passed = bool(abs(slope - target) <= tol)
    return {"family": family, "dof": dof, "delta": delta, "admissible": admissible,
            "slope": slope, "se": s.get("se"), "target": target, "pass": passed}


def mixing_condition_check(d: int, p: float, gamma: float) -> dict:
    """Report the algebraic-mixing parameter condition (2 + gamma) d < 2 gamma p."""
    lhs, rhs = (2.0 + gamma) * d, 2.0 * gamma * p
    return {"lhs": lhs, "rhs": rhs, "holds": mixing_condition(d, p, gamma)}
