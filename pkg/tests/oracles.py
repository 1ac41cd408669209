"""Independent reference implementations used only by the tests."""

from __future__ import annotations

from fractions import Fraction
from math import factorial

import numpy as np


def _trunc_power_derivative(t: Fraction, x: Fraction, m: int, j: int) -> Fraction:
    """d^j/dt^j of (t - x)_+^(m-1), right-continuous in x."""
    k = m - 1 - j
    if k < 0:
        return Fraction(0)
    if t <= x:
        return Fraction(0)
    return Fraction(factorial(m - 1), factorial(k)) * (t - x) ** k


def _divided_difference(ts: list[Fraction], x: Fraction, m: int) -> Fraction:
    """[ts_0, ..., ts_r] f for f(t) = (t - x)_+^(m-1), with confluent knots."""
    r = len(ts) - 1
    if ts[0] == ts[-1]:
        return _trunc_power_derivative(ts[0], x, m, r) / factorial(r)
    left = _divided_difference(ts[:-1], x, m)
    right = _divided_difference(ts[1:], x, m)
    return (right - left) / (ts[-1] - ts[0])


def bspline_divided_difference(order: int, n_interior: int, x: float) -> np.ndarray:
    """All K = N + m B-splines at x in [0, 1) from B_i = (t_{i+m} - t_i)[t_i..t_{i+m}](. - x)_+^(m-1).

    Exact rational arithmetic, so the result carries no cancellation error.
    """
    m = order
    inner = [Fraction(j, n_interior + 1) for j in range(1, n_interior + 1)]
    knots = [Fraction(0)] * m + inner + [Fraction(1)] * m
    xf = Fraction(x)
    out = np.zeros(n_interior + m)
    for i in range(n_interior + m):
        seg = knots[i : i + m + 1]
        if not (seg[0] <= xf < seg[-1]):
            continue
        out[i] = float((seg[-1] - seg[0]) * _divided_difference(seg, xf, m))
    return out


def npiv_raw(psi: np.ndarray, b: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Coefficients on the raw psi basis: [Psi'B (B'B)^- B'Psi]^- Psi'B (B'B)^- B'Y."""
    bb = np.linalg.pinv(b.T @ b)
    pb = psi.T @ b
    return np.linalg.pinv(pb @ bb @ pb.T) @ pb @ bb @ b.T @ y


def rayleigh_sup(bt: np.ndarray, n_vectors: int, rng: np.random.Generator) -> float:
    """max over random unit c of |(1/n) sum (c' b~(X_i))^2 - 1|."""
    c = rng.standard_normal((bt.shape[1], n_vectors))
    c /= np.linalg.norm(c, axis=0)
    vals = np.mean((bt @ c) ** 2, axis=0)
    return float(np.max(np.abs(vals - 1.0)))


def pinv_rank_factor(b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Moore-Penrose inverse of A = B C with B of full column rank and C of full row rank.

    A+ = C'(CC')^-1 (B'B)^-1 B', which needs only two small linear solves.
    """
    left = np.linalg.solve(b.T @ b, b.T)
    right = np.linalg.solve(c @ c.T, np.eye(c.shape[0]))
    return c.T @ right @ left
