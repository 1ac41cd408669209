"""B-spline bases on [0, 1] with uniform knots."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class KnotVector:
    """Extended knot sequence with boundary knots repeated ``order`` times."""

    order: int
    n_interior: int
    knots: np.ndarray

    @property
    def dim(self) -> int:
        return self.n_interior + self.order

    @property
    def breakpoints(self) -> np.ndarray:
        """Distinct knots 0 = t_0 < t_1 < ... < t_{N+1} = 1."""
        return self.knots[self.order - 1 : self.order + self.n_interior + 1]

    @property
    def mesh_ratio(self) -> float:
        gaps = np.diff(self.breakpoints)
        return float(gaps.max() / gaps.min())


def make_knots(order: int, n_interior: int, placement: str = "uniform") -> KnotVector:
    if order < 1:
        raise DomainError(f"spline order must be >= 1, got {order}")
    if n_interior < 0:
        raise DomainError(f"number of interior knots must be >= 0, got {n_interior}")
    if placement != "uniform":
        raise DomainError(f"unsupported knot placement {placement!r}")
    inner = np.arange(1, n_interior + 1) / (n_interior + 1)
    knots = np.concatenate([np.zeros(order), inner, np.ones(order)])
    # the boundary knots 0 and 1 each appear `order` times
    return KnotVector(order, n_interior, knots)


def _check_unit(x: np.ndarray) -> None:
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise DomainError("evaluation points must lie in [0, 1]")


def bspline_eval(kv: KnotVector, x) -> np.ndarray:
    """Evaluate all ``K = N + m`` B-splines at ``x`` via the De Boor recursion.

    Returns an array of shape ``x.shape + (K,)``. Intervals are half-open on
    the right except for the last, so the right endpoint x = 1 is assigned to
    the final knot interval and the partition of unity holds on all of [0, 1].
    """
    x = np.asarray(x, dtype=float)
    _check_unit(x)
    flat = x.ravel()
    m, t = kv.order, kv.knots
    n_int = kv.n_interior
    # index of the knot interval [t_mu, t_mu+1) containing x, in extended indexing
    cell = np.minimum(np.floor(flat * (n_int + 1)).astype(int), n_int)
    mu = cell + m - 1

    # Cox-de Boor triangle: after level k, vals[:, r] = B_{mu-k+r, k+1}(x)
    vals = np.ones((flat.size, 1))
    for k in range(1, m):
        new = np.zeros((flat.size, k + 1))
        for r in range(k + 1):
            i = mu - k + r
            if r > 0:
                left_t = t[i]
                den = t[i + k] - left_t
                with np.errstate(invalid="ignore", divide="ignore"):
                    w = np.where(den > 0, (flat - left_t) / np.where(den > 0, den, 1.0), 0.0)
                new[:, r] += w * vals[:, r - 1]
            if r < k:
                right_t = t[i + k + 1]
                den = right_t - t[i + 1]
                with np.errstate(invalid="ignore", divide="ignore"):
                    w = np.where(den > 0, (right_t - flat) / np.where(den > 0, den, 1.0), 0.0)
                new[:, r] += w * vals[:, r]
        vals = new

    out = np.zeros((flat.size, kv.dim))
    rows = np.arange(flat.size)[:, None]
    cols = (mu - (m - 1))[:, None] + np.arange(m)[None, :]
    out[rows, cols] = vals
    return out.reshape(x.shape + (kv.dim,))
