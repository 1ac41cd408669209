"""Sieve spaces on [0, 1]^d: specification, evaluation, Gram matrices, orthonormalization.

A :class:`SieveSpec` is a tuple of univariate axis bases; the multivariate
basis is their tensor product in Kronecker order (first axis slowest). A
:class:`BasisHandle` couples a spec with a measure and the inverse square
root of the corresponding Gram matrix, so that ``handle(points)`` evaluates
the orthonormalized basis.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Union

import numpy as np

from . import numerics
from .errors import ConfigurationError, DomainError
from .splines import KnotVector, bspline_eval, make_knots
from .wavelets import CASCADE_RESOLUTION, lowpass, wavelet_table

RANK_TOL = 1e-12


class RankDeficiencyWarning(UserWarning):
    pass


class SmoothnessWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# univariate axis bases
# ---------------------------------------------------------------------------


def _unit_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise DomainError("evaluation points must lie in [0, 1]")
    return x


@dataclass(frozen=True)
class BSplineAxis:
    order: int
    n_interior: int
    family: str = field(default="bspline", init=False)

    def __post_init__(self):
        if self.order < 1 or self.n_interior < 0:
            raise ConfigurationError(
                f"invalid B-spline axis (order={self.order}, n_interior={self.n_interior})"
            )

    @property
    def dim(self) -> int:
        return self.n_interior + self.order

    @property
    def smoothness(self) -> float:
        return float(self.order - 2)

    @property
    def knots(self) -> KnotVector:
        return make_knots(self.order, self.n_interior)

    def __call__(self, x) -> np.ndarray:
        return bspline_eval(self.knots, x)

    def uniform_rule(self) -> numerics.QuadratureRule:
        # splines are polynomial between knots, so a knot-aligned rule is exact
        return numerics.composite_gauss_legendre(self.knots.breakpoints, 10)

    def breakpoints(self) -> np.ndarray:
        return self.knots.breakpoints

    def to_dict(self) -> dict:
        return {"family": "bspline", "order": self.order, "n_interior": self.n_interior}


@dataclass(frozen=True)
class WaveletAxis:
    n_vanishing: int
    coarse_level: int
    fine_level: int
    family: str = field(default="wavelet", init=False)

    def __post_init__(self):
        lowpass(self.n_vanishing)
        if not 0 <= self.coarse_level <= self.fine_level:
            raise ConfigurationError(
                f"need 0 <= coarse_level <= fine_level, got "
                f"{self.coarse_level}, {self.fine_level}"
            )

    @property
    def dim(self) -> int:
        return 2**self.fine_level

    @property
    def smoothness(self) -> float:
        # Hoelder regularity of the Daubechies scaling functions (rounded down)
        return {1: 0.0, 2: 0.55, 3: 1.08}[self.n_vanishing]

    def _blocks(self):
        """(level, generator) per block, in basis order."""
        table = wavelet_table(self.n_vanishing)
        blocks = [(self.coarse_level, table.scaling)]
        blocks += [(j, table.wavelet) for j in range(self.coarse_level, self.fine_level)]
        return table, blocks

    @staticmethod
    def _periodized(fn, support: int, j: int, k: int, flat: np.ndarray) -> np.ndarray:
        scale = 2**j
        base = np.mod(scale * flat - k, scale)
        val = np.zeros_like(flat)
        for w in range(int(np.ceil(support / scale)) + 1):
            val += fn(base + w * scale)
        return np.sqrt(scale) * val

    def __call__(self, x) -> np.ndarray:
        x = _unit_points(x)
        flat = x.ravel()
        table, blocks = self._blocks()
        cols = [
            self._periodized(fn, table.support, j, k, flat)
            for j, fn in blocks
            for k in range(2**j)
        ]
        return np.stack(cols, axis=-1).reshape(x.shape + (self.dim,))

    def uniform_gram(self) -> np.ndarray:
        return _wavelet_uniform_gram(self).copy()

    def _uniform_gram(self) -> np.ndarray:
        """Gram matrix under Lebesgue measure, block by block over levels.

        For a pair of levels ``ja <= jb`` both generators are sampled on the
        periodic grid of spacing ``2**-(R + jb)``, which hits the finer level
        exactly on its cascade table; translates are handled by cyclic shifts.
        """
        table, blocks = self._blocks()
        res = table.resolution
        offsets = np.cumsum([0] + [2**j for j, _ in blocks])
        g = np.zeros((self.dim, self.dim))
        for a, (ja, fa) in enumerate(blocks):
            for b, (jb, fb) in enumerate(blocks):
                if b < a:
                    continue
                lo, hi = (a, b) if ja <= jb else (b, a)
                j_lo, f_lo = blocks[lo]
                j_hi, f_hi = blocks[hi]
                m = 2 ** (res + j_hi)
                grid = np.arange(m) / m
                u = self._periodized(f_lo, table.support, j_lo, 0, grid).reshape(2**j_hi, -1)
                v = self._periodized(f_hi, table.support, j_hi, 0, grid).reshape(2**j_hi, -1)
                cross = u @ v.T
                n_hi = 2**j_hi
                rows = np.arange(n_hi)
                # corr[r] = sum_i u[i] v[i - r * 2^R]
                corr = np.array([cross[rows, (rows - r) % n_hi].sum() for r in range(n_hi)]) / m
                k_lo = np.arange(2**j_lo)[:, None]
                k_hi = np.arange(n_hi)[None, :]
                block = corr[(k_hi - k_lo * 2 ** (j_hi - j_lo)) % n_hi]
                if lo != a:
                    block = block.T
                g[offsets[a] : offsets[a + 1], offsets[b] : offsets[b + 1]] = block
                g[offsets[b] : offsets[b + 1], offsets[a] : offsets[a + 1]] = block.T
        return g

    def uniform_rule(self, resolution: int = CASCADE_RESOLUTION) -> numerics.QuadratureRule:
        # periodic functions: the equispaced rectangle rule is the trapezoid rule
        m = 2**resolution
        return numerics.QuadratureRule(np.arange(m) / m, np.full(m, 1.0 / m))

    def breakpoints(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, 2**self.fine_level + 1)

    def to_dict(self) -> dict:
        return {
            "family": "wavelet",
            "n_vanishing": self.n_vanishing,
            "coarse_level": self.coarse_level,
            "fine_level": self.fine_level,
        }


@lru_cache(maxsize=64)
def _wavelet_uniform_gram(axis: WaveletAxis) -> np.ndarray:
    return axis._uniform_gram()


@dataclass(frozen=True)
class CosineAxis:
    """The orthonormal cosine system 1, sqrt(2) cos(k pi x), k = 1..n_terms-1."""

    n_terms: int
    family: str = field(default="cosine", init=False)

    def __post_init__(self):
        if self.n_terms < 1:
            raise ConfigurationError(f"cosine axis needs n_terms >= 1, got {self.n_terms}")

    @property
    def dim(self) -> int:
        return self.n_terms

    @property
    def smoothness(self) -> float:
        return np.inf

    def __call__(self, x) -> np.ndarray:
        x = _unit_points(x)
        k = np.arange(self.n_terms)
        out = np.sqrt(2.0) * np.cos(np.pi * x[..., None] * k)
        out[..., 0] = 1.0
        return out

    def uniform_rule(self) -> numerics.QuadratureRule:
        return numerics.gauss_legendre(10, max(8, self.n_terms))

    def breakpoints(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, max(8, self.n_terms) + 1)

    def to_dict(self) -> dict:
        return {"family": "cosine", "n_terms": self.n_terms}


Axis = Union[BSplineAxis, WaveletAxis, CosineAxis]


def axis_from_dict(block: dict) -> Axis:
    family = block.get("family")
    try:
        if family == "bspline":
            return BSplineAxis(int(block["order"]), int(block["n_interior"]))
        if family == "wavelet":
            return WaveletAxis(
                int(block["n_vanishing"]), int(block["coarse_level"]), int(block["fine_level"])
            )
        if family == "cosine":
            return CosineAxis(int(block["n_terms"]))
    except KeyError as exc:
        raise ConfigurationError(f"{family} axis is missing field {exc.args[0]!r}") from None
    raise ConfigurationError(f"unknown sieve family {family!r}")


# ---------------------------------------------------------------------------
# tensor-product spec
# ---------------------------------------------------------------------------


def _kron_rows(blocks: list[np.ndarray]) -> np.ndarray:
    out = blocks[0]
    for b in blocks[1:]:
        out = (out[:, :, None] * b[:, None, :]).reshape(out.shape[0], -1)
    return out


def _as_points(points, d: int) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    if p.ndim <= 1 and d == 1:
        p = p.reshape(-1, 1)
    if p.ndim == 1 and p.size == d:
        p = p.reshape(1, d)
    if p.ndim != 2 or p.shape[1] != d:
        raise DomainError(f"expected points of dimension {d}, got shape {np.shape(points)}")
    return p


@dataclass(frozen=True)
class SieveSpec:
    axes: tuple

    def __post_init__(self):
        if len(self.axes) < 1:
            raise ConfigurationError("a sieve needs at least one axis")

    @classmethod
    def bspline(cls, order: int, n_interior: int, d: int = 1) -> "SieveSpec":
        return cls(tuple(BSplineAxis(order, n_interior) for _ in range(d)))

    @classmethod
    def wavelet(cls, n_vanishing: int, coarse_level: int, fine_level: int, d: int = 1) -> "SieveSpec":
        return cls(tuple(WaveletAxis(n_vanishing, coarse_level, fine_level) for _ in range(d)))

    @classmethod
    def cosine(cls, n_terms: int, d: int = 1) -> "SieveSpec":
        return cls(tuple(CosineAxis(n_terms) for _ in range(d)))

    @classmethod
    def from_dict(cls, block: dict) -> "SieveSpec":
        if "axes" in block:
            return cls(tuple(axis_from_dict(a) for a in block["axes"]))
        d = int(block.get("d", 1))
        return cls(tuple(axis_from_dict(block) for _ in range(d)))

    def to_dict(self) -> dict:
        return {"axes": [a.to_dict() for a in self.axes]}

    @property
    def d(self) -> int:
        return len(self.axes)

    @property
    def dim(self) -> int:
        return int(np.prod([a.dim for a in self.axes]))

    @property
    def smoothness(self) -> float:
        return min(a.smoothness for a in self.axes)

    def __call__(self, points) -> np.ndarray:
        """Raw basis values, shape (n_points, dim)."""
        p = _as_points(points, self.d)
        return _kron_rows([ax(p[:, i]) for i, ax in enumerate(self.axes)])

    evaluate = __call__

    def uniform_gram(self) -> np.ndarray:
        grams = []
        for ax in self.axes:
            if hasattr(ax, "uniform_gram"):
                grams.append(ax.uniform_gram())
                continue
            rule = ax.uniform_rule()
            v = ax(rule.nodes)
            grams.append((v * rule.weights[:, None]).T @ v)
        g = grams[0]
        for other in grams[1:]:
            g = np.kron(g, other)
        return 0.5 * (g + g.T)


def sieve_for_dim(family: str, K: int, d: int = 1, order: int = 4, n_vanishing: int = 2) -> SieveSpec:
    """Sieve whose per-axis dimension is ``K ** (1/d)``."""
    k_axis = round(K ** (1.0 / d))
    if k_axis**d != K:
        raise ConfigurationError(f"K={K} is not a perfect {d}-th power")
    if family == "bspline":
        if k_axis < order:
            raise ConfigurationError(f"spline order {order} needs K >= {order} per axis")
        return SieveSpec.bspline(order, k_axis - order, d)
    if family == "wavelet":
        level = int(round(math.log2(k_axis)))
        if 2**level != k_axis:
            raise ConfigurationError(f"wavelet dimension must be a power of 2, got {k_axis}")
        return SieveSpec.wavelet(n_vanishing, 0, level, d)
    if family == "cosine":
        return SieveSpec.cosine(k_axis, d)
    raise ConfigurationError(f"unknown basis family {family!r}")


def tensor_eval(spec: SieveSpec, point) -> np.ndarray:
    """Basis vector at a single point of [0, 1]^d."""
    p = np.atleast_1d(np.asarray(point, dtype=float))
    if p.shape != (spec.d,):
        raise DomainError(f"point must have dimension {spec.d}, got shape {p.shape}")
    return spec(p.reshape(1, -1))[0]


def check_smoothness(spec: SieveSpec, p: float) -> bool:
    """Warn (and return False) if the sieve smoothness does not exceed ``p``."""
    gamma = spec.smoothness
    if not gamma > p:
        warnings.warn(
            f"sieve smoothness {gamma} does not exceed target smoothness p={p}",
            SmoothnessWarning,
            stacklevel=2,
        )
        return False
    return True


# ---------------------------------------------------------------------------
# measures and Gram matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    name: str = field(default="uniform", init=False)


@dataclass(frozen=True)
class EmpiricalSample:
    points: np.ndarray = field(repr=False)
    name: str = field(default="empirical", init=False)


@dataclass(frozen=True)
class DensityGrid:
    """A density on [0, 1]^d integrated by composite Gauss-Legendre quadrature.

    ``density`` maps an (m, d) array of points to m non-negative values.
    Each axis is split at the basis breakpoints and at ``cells`` equal cells.
    """

    density: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    cells: int = 410
    name: str = field(default="density", init=False)


Measure = Union[Uniform, EmpiricalSample, DensityGrid]


def _basis_spec(basis) -> SieveSpec:
    return basis.spec if isinstance(basis, BasisHandle) else basis


def gram_matrix(basis, measure: Measure = Uniform()) -> np.ndarray:
    """E[b(X) b(X)'] under ``measure`` for a spec or a basis handle."""
    spec = _basis_spec(basis)
    if isinstance(measure, EmpiricalSample):
        v = basis(measure.points)
        g = v.T @ v / v.shape[0]
    elif isinstance(measure, Uniform):
        if isinstance(basis, SieveSpec):
            g = basis.uniform_gram()
        else:
            t = basis.transform
            g = t.T @ spec.uniform_gram() @ t
    elif isinstance(measure, DensityGrid):
        rules = []
        for ax in spec.axes:
            cells = measure.cells if spec.d == 1 else max(8, measure.cells // 8)
            edges = np.union1d(ax.breakpoints(), np.linspace(0.0, 1.0, cells + 1))
            rules.append(numerics.composite_gauss_legendre(edges, 10))
        nodes, weights = numerics.tensor_rule(*rules)
        w = weights * np.asarray(measure.density(nodes), dtype=float)
        v = basis(nodes)
        g = (v * w[:, None]).T @ v
    else:
        raise DomainError(f"unsupported measure {measure!r}")
    g = 0.5 * (g + g.T)
    lam = float(np.linalg.eigvalsh(g)[0])
    if lam < RANK_TOL:
        warnings.warn(
            f"Gram matrix is numerically rank deficient (min eigenvalue {lam:.3e})",
            RankDeficiencyWarning,
            stacklevel=2,
        )
    return g


# ---------------------------------------------------------------------------
# orthonormalized handles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BasisHandle:
    """Orthonormalized basis: ``handle(x) = transform' b(x)`` (row form ``b(x) @ transform``)."""

    spec: SieveSpec
    gram: np.ndarray
    transform: np.ndarray
    measure: Measure
    min_eig: float
    parent: "BasisHandle | None" = None

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def dim(self) -> int:
        return self.spec.dim

    def raw(self, points) -> np.ndarray:
        if self.parent is not None:
            return self.parent(points)
        return self.spec(points)

    def __call__(self, points) -> np.ndarray:
        return self.raw(points) @ self.transform

    evaluate = __call__

    @property
    def total_transform(self) -> np.ndarray:
        """Map from the spec's raw basis to this handle's functions."""
        if self.parent is None:
            return self.transform
        return self.parent.total_transform @ self.transform


def orthonormalize(basis, measure: Measure = Uniform()) -> BasisHandle:
    """Orthonormalize a spec (or re-orthonormalize a handle) under ``measure``."""
    g = gram_matrix(basis, measure)
    lam = float(np.linalg.eigvalsh(g)[0])
    t = numerics.inv_sqrt_psd(g)
    if isinstance(basis, BasisHandle):
        return BasisHandle(basis.spec, g, t, measure, lam, parent=basis)
    return BasisHandle(basis, g, t, measure, lam)


def uniform_grid(grid_per_dim: int, d: int) -> np.ndarray:
    axis = np.linspace(0.0, 1.0, grid_per_dim)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def zeta0(handle: BasisHandle, grid_size: int = 1001) -> float:
    """max over a uniform grid of the Euclidean norm of the orthonormalized basis."""
    pts = uniform_grid(grid_size, handle.d)
    best = 0.0
    for chunk in np.array_split(pts, max(1, pts.shape[0] // 20000)):
        best = max(best, float(np.sqrt(np.max(np.sum(handle(chunk) ** 2, axis=1)))))
    return best
