"""Periodized Daubechies wavelet bases on [0, 1].

The scaling function is tabulated on the dyadic grid ``2**-resolution`` by
solving the refinement equation exactly at the integers and then refining
level by level; the mother wavelet follows from the two-scale relation.
Off-grid points are linearly interpolated (piecewise constant for Haar).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, DomainError

CASCADE_RESOLUTION = 16

_S3 = np.sqrt(3.0)
_S10 = np.sqrt(10.0)
_R = np.sqrt(5.0 + 2.0 * _S10)

# Low-pass filters normalized to sum sqrt(2), keyed by vanishing moments.
FILTERS = {
    1: np.array([1.0, 1.0]) / np.sqrt(2.0),
    2: np.array([1.0 + _S3, 3.0 + _S3, 3.0 - _S3, 1.0 - _S3]) / (4.0 * np.sqrt(2.0)),
    3: np.array(
        [
            1.0 + _S10 + _R,
            5.0 + _S10 + 3.0 * _R,
            10.0 - 2.0 * _S10 + 2.0 * _R,
            10.0 - 2.0 * _S10 - 2.0 * _R,
            5.0 + _S10 - 3.0 * _R,
            1.0 + _S10 - _R,
        ]
    )
    / (16.0 * np.sqrt(2.0)),
}


def lowpass(n_vanishing: int) -> np.ndarray:
    try:
        return FILTERS[n_vanishing]
    except KeyError:
        raise ConfigurationError(
            f"unsupported wavelet with {n_vanishing} vanishing moments; "
            f"choose one of {sorted(FILTERS)}"
        ) from None


def highpass(n_vanishing: int) -> np.ndarray:
    h = lowpass(n_vanishing)
    k = np.arange(h.size)
    return (-1.0) ** k * h[::-1]


def _integer_values(h: np.ndarray) -> np.ndarray:
    """phi(0), ..., phi(L-1) for a filter of length L, with sum(phi(n)) = 1."""
    L = h.size
    if L == 2:
        # Haar: right-continuous indicator of [0, 1)
        return np.array([1.0, 0.0])
    m = np.zeros((L, L))
    for n in range(L):
        for j in range(L):
            k = 2 * n - j
            if 0 <= k < L:
                m[n, j] = np.sqrt(2.0) * h[k]
    w, v = np.linalg.eig(m)
    idx = int(np.argmin(np.abs(w - 1.0)))
    vec = np.real(v[:, idx])
    return vec / vec.sum()


@dataclass(frozen=True)
class WaveletTable:
    """Scaling function and mother wavelet sampled on ``k / 2**resolution``."""

    n_vanishing: int
    resolution: int
    phi: np.ndarray
    psi: np.ndarray

    @property
    def support(self) -> int:
        return 2 * self.n_vanishing - 1

    def _lookup(self, table: np.ndarray, t: np.ndarray) -> np.ndarray:
        scale = float(2**self.resolution)
        out = np.zeros_like(t)
        inside = (t >= 0.0) & (t <= self.support)
        u = t[inside] * scale
        i0 = np.floor(u).astype(int)
        if self.n_vanishing == 1:
            out[inside] = table[np.minimum(i0, table.size - 1)]
            return out
        i0 = np.minimum(i0, table.size - 2)
        frac = u - i0
        out[inside] = (1.0 - frac) * table[i0] + frac * table[i0 + 1]
        return out

    def scaling(self, t) -> np.ndarray:
        """phi(t) on the real line (zero outside its support)."""
        return self._lookup(self.phi, np.asarray(t, dtype=float))

    def wavelet(self, t) -> np.ndarray:
        """psi(t) on the real line (zero outside its support)."""
        return self._lookup(self.psi, np.asarray(t, dtype=float))


@lru_cache(maxsize=None)
def wavelet_table(n_vanishing: int, resolution: int = CASCADE_RESOLUTION) -> WaveletTable:
    h = lowpass(n_vanishing)
    g = highpass(n_vanishing)
    support = h.size - 1
    phi = _integer_values(h)
    # phi(i / 2^r) = sqrt(2) sum_k h_k phi((i - k 2^(r-1)) / 2^(r-1)): every fine
    # point maps onto an integer index of the coarse table
    for r in range(1, resolution + 1):
        half = 2 ** (r - 1)
        new = np.zeros(support * 2**r + 1)
        for k, hk in enumerate(h):
            lo = k * half
            new[lo : lo + phi.size] += hk * phi
        phi = np.sqrt(2.0) * new
    # psi(i / 2^R) = sqrt(2) sum_k g_k phi((2i - k 2^R) / 2^R)
    scale = 2**resolution
    idx = 2 * np.arange(phi.size)
    psi = np.zeros_like(phi)
    for k, gk in enumerate(g):
        j = idx - k * scale
        ok = (j >= 0) & (j < phi.size)
        psi[ok] += gk * phi[j[ok]]
    psi *= np.sqrt(2.0)
    return WaveletTable(n_vanishing, resolution, phi, psi)
