"""Coordinates, index sets and hyperspherical harmonics on S^{d-1} in R^d.

Polar convention: ``theta1`` in [0, 2pi) is the periodic axis, ``theta2 ..
theta_{d-1}`` lie in [0, pi]. The Cartesian map is::

    x1 = cos(theta1) * prod_{j>=2} sin(theta_j)
    x2 = sin(theta1) * prod_{j>=2} sin(theta_j)
    x_m = cos(theta_{m-1}) * prod_{j>m-1} sin(theta_j),   m = 3..d

so a shift of ``theta1`` is a rotation in the (x1, x2) plane.

The harmonic basis is the product basis::

    Y_{l1, l2, ..., l_{d-1}} = s(l1) exp(i l1 theta1) g_{l}(theta2, ...)

with ``s(l1) = (-1)**l1`` for negative ``l1`` (``s = 1`` on the circle, where
the basis is plain ``exp(i j theta)/sqrt(2pi)``) and ``g`` a real product of
normalized Gegenbauer factors ``sin(theta_j)**l_{j-1} C^{(l_{j-1}+(j-1)/2)}_
{l_j-l_{j-1}}(cos theta_j)`` (``l_1`` read as ``|l1|``). The factor
normalizations are pinned numerically with Gauss-Jacobi quadrature, which
is exact for these polynomial integrands.
"""

from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass, field
import numpy as np
from scipy.special import gammaln, lpmv, roots_jacobi

from .exceptions import DomainError

__all__ = [
    "SpherePoint",
    "HarmonicIndex",
    "AlphaOrdering",
    "QuadratureRule",
    "dim_harmonic_space",
    "surface_area",
    "legendre_poly",
    "legendre_table",
    "polar_to_cartesian",
    "cartesian_to_polar",
    "as_polar",
    "enumerate_lambda",
    "degree_indices",
    "basis_indices",
    "harmonics",
    "real_factor",
    "sph_harm",
    "sph_harm_2sphere",
    "two_sphere_phase",
    "build_quadrature",
    "random_points",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _check_dim(d):
    if int(d) != d or d < 2:
        raise DomainError(f"ambient dimension must be an integer >= 2, got {d!r}")
    return int(d)


def dim_harmonic_space(j, d):
    """Number of linearly independent harmonics of degree ``j`` on S^{d-1}.

    Exact integer arithmetic: ``(2j+d-2) (j+d-3)! / (j! (d-2)!)``, computed
    as ``C(j+d-1, d-1) - C(j+d-3, d-1)``.
    """
    d = _check_dim(d)
    if int(j) != j or j < 0:
        raise DomainError(f"degree must be a non-negative integer, got {j!r}")
    j = int(j)
    if j == 0:
        return 1
    return math.comb(j + d - 1, d - 1) - math.comb(j + d - 3, d - 1)


def surface_area(d):
    """Surface area of the unit sphere S^{d-1} in R^d."""
    d = _check_dim(d)
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def legendre_table(jmax, d, t):
    """Values of ``P_j^d(t)`` for ``j = 0..jmax``, shape ``(jmax+1,) + t.shape``.

    ``P_j^d`` is the Gegenbauer polynomial of index ``(d-2)/2`` scaled so
    that ``P_j^d(1) = 1``. The recurrence

        (n + 2 lam) P_{n+1} = 2 (n + lam) t P_n - n P_{n-1}

    covers d = 2 (Chebyshev) as well.
    """
    d = _check_dim(d)
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1.0 + 1e-12):
        raise DomainError("legendre argument outside [-1, 1]")
    t = np.clip(t, -1.0, 1.0)
    lam = (d - 2) / 2.0
    out = np.empty((jmax + 1,) + t.shape)
    out[0] = 1.0
    if jmax >= 1:
        out[1] = t
    for n in range(1, jmax):
        out[n + 1] = (2.0 * (n + lam) * t * out[n] - n * out[n - 1]) / (n + 2.0 * lam)
    return out


def legendre_poly(j, d, t):
    """d-dimensional Legendre polynomial of degree ``j`` evaluated at ``t``."""
    if int(j) != j or j < 0:
        raise DomainError(f"degree must be a non-negative integer, got {j!r}")
    vals = legendre_table(int(j), d, t)[int(j)]
    return float(vals) if np.ndim(vals) == 0 else vals


# ---------------------------------------------------------------------------
# Coordinates


def polar_to_cartesian(polar):
    """Map polar angles of shape ``(..., d-1)`` to unit vectors ``(..., d)``."""
    polar = np.asarray(polar, dtype=float)
    if polar.shape[-1] < 1:
        raise DomainError("need at least one angle")
    m = polar.shape[-1]
    d = m + 1
    s = np.sin(polar)
    c = np.cos(polar)
    out = np.empty(polar.shape[:-1] + (d,))
    # tail_prod[k] = prod_{j>k} sin(theta_j), 1-based angle index k
    tail = np.ones(polar.shape[:-1])
    for k in range(d - 1, 1, -1):
        out[..., k] = c[..., k - 1] * tail
        tail = tail * s[..., k - 1]
    out[..., 0] = c[..., 0] * tail
    out[..., 1] = s[..., 0] * tail
    return out


def cartesian_to_polar(x):
    """Inverse of :func:`polar_to_cartesian`; input need not be normalized.

    At coordinate singularities the undetermined lower angles are set to 0.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    if d < 2:
        raise DomainError("need at least two Cartesian components")
    polar = np.zeros(x.shape[:-1] + (d - 1,))
    sq = np.cumsum(x**2, axis=-1)
    undetermined = np.zeros(x.shape[:-1], dtype=bool)
    for k in range(d - 1, 1, -1):
        r = np.sqrt(sq[..., k - 1])
        polar[..., k - 1] = np.where(undetermined, 0.0, np.arctan2(r, x[..., k]))
        undetermined |= r == 0.0
    th1 = np.mod(np.arctan2(x[..., 1], x[..., 0]), 2.0 * np.pi)
    th1 = np.where(th1 >= 2.0 * np.pi, 0.0, th1)
    polar[..., 0] = np.where(undetermined | (sq[..., 1] == 0.0), 0.0, th1)
    return polar


@dataclass(frozen=True)
class SpherePoint:
    """A point on S^{d-1} carried in both polar and Cartesian form."""

    ambient_dim: int
    polar: tuple
    cartesian: tuple

    @classmethod
    def from_polar(cls, angles):
        angles = np.asarray(angles, dtype=float).ravel()
        d = _check_dim(angles.size + 1)
        if np.any(angles[1:] < -1e-12) or np.any(angles[1:] > math.pi + 1e-12):
            raise DomainError("theta2..theta_{d-1} must lie in [0, pi]")
        angles = angles.copy()
        angles[0] = math.fmod(angles[0], 2.0 * math.pi)
        if angles[0] < 0:
            angles[0] += 2.0 * math.pi
        angles[1:] = np.clip(angles[1:], 0.0, math.pi)
        return cls(d, tuple(angles.tolist()), tuple(polar_to_cartesian(angles).tolist()))

    @classmethod
    def from_cartesian(cls, x):
        x = np.asarray(x, dtype=float).ravel()
        d = _check_dim(x.size)
        norm = float(np.linalg.norm(x))
        if norm == 0.0:
            raise DomainError("zero vector is not on the sphere")
        x = x / norm
        return cls(d, tuple(cartesian_to_polar(x).tolist()), tuple(x.tolist()))

    def antipode(self):
        return SpherePoint.from_cartesian(-np.asarray(self.cartesian))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.polar, dtype=dtype)


def as_polar(points, d=None):
    """Coerce SpherePoints or a polar-angle array to a float array ``(n, d-1)``."""
    if isinstance(points, SpherePoint):
        points = [points]
    if isinstance(points, (list, tuple)) and points and isinstance(points[0], SpherePoint):
        dims = {p.ambient_dim for p in points}
        if len(dims) != 1:
            raise DomainError("points of mixed ambient dimension")
        arr = np.array([p.polar for p in points], dtype=float)
    else:
        arr = np.asarray(points, dtype=float)
        if arr.ndim == 1:
            arr = arr[None, :] if d is None or arr.size == d - 1 else arr[:, None]
    if d is not None and arr.shape[-1] != d - 1:
        raise DomainError(
            f"points have {arr.shape[-1] + 1} ambient dimensions, expected {d}"
        )
    return arr


def random_points(d, n, rng):
    """``n`` uniform points on S^{d-1} (normalized Gaussians), as polar angles."""
    x = rng.standard_normal((n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return cartesian_to_polar(x)


# ---------------------------------------------------------------------------
# Index sets


@dataclass(frozen=True, order=True)
class HarmonicIndex:
    """Multi-index ``(l1, (l2, ..., l_{d-1}))`` of one basis harmonic."""

    l1: int
    tail: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "l1", int(self.l1))
        object.__setattr__(self, "tail", tuple(int(v) for v in self.tail))

    @property
    def degree(self):
        return self.tail[-1] if self.tail else abs(self.l1)

    @property
    def ambient_dim(self):
        return len(self.tail) + 2

    def validate(self, d):
        if len(self.tail) != d - 2:
            raise DomainError(
                f"index {self} has {len(self.tail)} tail entries, need {d - 2} for d={d}"
            )
        prev = abs(self.l1)
        for v in self.tail:
            if v < prev:
                raise DomainError(f"index {self} violates |l1| <= l2 <= ... <= l_(d-1)")
            prev = v
        return self

    def conjugate(self):
        """Index of ``conj(Y)``: ``conj(Y_{l1,l}) = conj_sign(d) * Y_{-l1,l}``."""
        return HarmonicIndex(-self.l1, self.tail)

    def conj_sign(self, d):
        """``(-1)**l1`` for ``d >= 3``; ``1`` on the circle."""
        return 1 if d == 2 else (-1) ** (self.l1 % 2)

    def __str__(self):
        return "(" + ",".join(str(v) for v in (self.l1,) + self.tail) + ")"


def _tails_with_degree(d, m, j):
    """Tails (l2..l_{d-1}) with ``l_{d-1} == j`` and ``l2 >= m``, lexicographic."""
    if d == 2:
        return [()] if m == j else []
    if j < m:
        return []
    return [
        combo + (j,)
        for combo in itertools.combinations_with_replacement(range(m, j + 1), d - 3)
    ]


def enumerate_lambda(d, l1, L):
    """Truncated admissible tails for longitude mode ``l1``, in alpha order.

    Nondecreasing in the final degree; ties broken lexicographically on
    ``(l2, ..., l_{d-2})``. For d = 2 the single empty tail exists only when
    ``|l1| <= L``.
    """
    d = _check_dim(d)
    m = abs(int(l1))
    if d == 2:
        return [()] if m <= L else []
    out = []
    for j in range(m, L + 1):
        out.extend(_tails_with_degree(d, m, j))
    return out


@dataclass(frozen=True)
class AlphaOrdering:
    """Linear order of the truncated index set of one longitude mode."""

    d: int
    l1: int
    degree_cap: int
    table: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "table", tuple(enumerate_lambda(self.d, self.l1, self.degree_cap)))

    def __len__(self):
        return len(self.table)

    def final_degree(self, alpha):
        tail = self.table[alpha]
        return tail[-1] if tail else abs(self.l1)

    def position(self, tail):
        return self.table.index(tuple(tail))

    def indices(self):
        return [HarmonicIndex(self.l1, t) for t in self.table]


def _l1_order(j):
    yield 0
    for m in range(1, j + 1):
        yield m
        yield -m


def degree_indices(d, j):
    """Basis indices of degree ``j``; position ``k-1`` is the basis label ``k``.

    Order: ``l1 = 0, 1, -1, 2, -2, ...``; within one ``l1`` the tails are
    lexicographic.
    """
    d = _check_dim(d)
    out = []
    for l1 in _l1_order(j):
        out.extend(HarmonicIndex(l1, t) for t in _tails_with_degree(d, abs(l1), j))
    return out


def basis_indices(d, L):
    """All basis indices of degree ``<= L`` in global order (degree-major)."""
    out = []
    for j in range(L + 1):
        out.extend(degree_indices(d, j))
    return out


# ---------------------------------------------------------------------------
# Harmonic evaluation

_norm_lock = threading.Lock()
_norm_cache: dict = {}


def _factor_norms(level, m, nmax):
    """Normalization constants for the factor at ``level`` with inner degree ``m``.

    Entry ``n`` scales ``sin^m * P_n`` (``P_n(1) = 1``) to unit norm under
    ``sin(theta)**(level-1) dtheta``. Entries are computed in fixed doubling
    blocks so each value is independent of the cache history.
    """
    key = (level, m)
    cached = _norm_cache.get(key)
    if cached is not None and cached.size > nmax:
        return cached
    with _norm_lock:
        cached = _norm_cache.get(key)
        if cached is not None and cached.size > nmax:
            return cached
        lam = m + (level - 1) / 2.0
        parts = [] if cached is None else [cached]
        lo = 0 if cached is None else cached.size
        while lo <= nmax:
            hi = max(2 * lo, _NORM_BLOCK)
            parts.append(_norm_block(lam, lo, hi))
            lo = hi
        norms = np.concatenate(parts)
        _norm_cache[key] = norms
        return norms


_NORM_BLOCK = 16


def _norm_block(lam, lo, hi):
    # Gauss-Jacobi with hi + 1 nodes integrates P_n^2 exactly for n < hi
    a = lam - 0.5
    t, w = roots_jacobi(hi + 1, a, a)
    p = _gegenbauer_unit(hi - 1, lam, t)[lo:hi]
    return 1.0 / np.sqrt(p**2 @ w)


def _gegenbauer_unit(nmax, lam, t):
    """Gegenbauer polynomials of index ``lam > 0`` scaled to 1 at t = 1."""
    t = np.asarray(t, dtype=float)
    out = np.empty((nmax + 1,) + t.shape)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = t
    for n in range(1, nmax):
        out[n + 1] = (2.0 * (n + lam) * t * out[n] - n * out[n - 1]) / (n + 2.0 * lam)
    return out


class _FactorTables:
    """Lazily built per-(level, m) tables of normalized factor values."""

    def __init__(self, polar, needs):
        self.polar = polar
        self.tables = {}
        for (level, m), nmax in needs.items():
            theta = polar[:, level - 1]
            lam = m + (level - 1) / 2.0
            p = _gegenbauer_unit(nmax, lam, np.cos(theta))
            norms = _factor_norms(level, m, nmax)[: nmax + 1]
            self.tables[(level, m)] = (np.sin(theta) ** m) * p * norms[:, None]

    def get(self, level, m, lj):
        return self.tables[(level, m)][lj - m]


def _needs(indices):
    needs = {}
    for idx in indices:
        prev = abs(idx.l1)
        for pos, lj in enumerate(idx.tail):
            key = (pos + 2, prev)
            needs[key] = max(needs.get(key, 0), lj - prev)
            prev = lj
    return needs


def _real_factors(d, indices, polar):
    tables = _FactorTables(polar, _needs(indices))
    out = np.empty((polar.shape[0], len(indices)))
    for col, idx in enumerate(indices):
        val = np.full(polar.shape[0], 1.0 / _SQRT_2PI)
        prev = abs(idx.l1)
        for pos, lj in enumerate(idx.tail):
            val = val * tables.get(pos + 2, prev, lj)
            prev = lj
        out[:, col] = val
    return out


def harmonics(d, indices, points):
    """Matrix ``Y[i, c] = Y_{indices[c]}(points[i])``, complex ``(n, len(indices))``."""
    d = _check_dim(d)
    polar = as_polar(points, d)
    indices = [i if isinstance(i, HarmonicIndex) else HarmonicIndex(i[0], i[1:]) for i in indices]
    for idx in indices:
        idx.validate(d)
    if not indices:
        return np.zeros((polar.shape[0], 0), dtype=complex)
    g = _real_factors(d, indices, polar)
    l1 = np.array([i.l1 for i in indices])
    sign = np.where((l1 < 0) & (l1 % 2 == 1) & (d > 2), -1.0, 1.0)
    phase = np.exp(1j * np.outer(polar[:, 0], l1))
    return phase * (g * sign)


def real_factor(d, idx, points):
    """The real latitude part ``g_l(theta')`` of ``Y_{l1,l}`` (includes 1/sqrt(2pi))."""
    d = _check_dim(d)
    polar = as_polar(points, d)
    idx = idx.validate(d)
    return _real_factors(d, [idx], polar)[:, 0]


def sph_harm(idx, p):
    """Evaluate one basis harmonic at one point (or an array of points)."""
    if isinstance(p, SpherePoint):
        return complex(harmonics(p.ambient_dim, [idx], [p])[0, 0])
    polar = np.asarray(p, dtype=float)
    d = polar.shape[-1] + 1
    vals = harmonics(d, [idx], polar.reshape(-1, d - 1))[:, 0]
    return complex(vals[0]) if polar.ndim == 1 else vals


def sph_harm_2sphere(j, k, theta, phi):
    """Classical 2-sphere harmonic from associated Legendre functions.

    ``theta`` is the colatitude, ``phi`` the longitude. Equals
    ``two_sphere_phase(j, k) * sph_harm(HarmonicIndex(k, (j,)), (phi, theta))``.
    """
    if int(j) != j or j < 0:
        raise DomainError("j must be a non-negative integer")
    if abs(k) > j:
        raise DomainError(f"|k| = {abs(k)} exceeds j = {j}")
    j, k = int(j), int(k)
    logc = 0.5 * (gammaln(j - k + 1) - gammaln(j + k + 1))
    const = math.sqrt((2 * j + 1) / 2.0) * math.exp(logc) / _SQRT_2PI
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    val = const * lpmv(k, j, np.cos(theta)) * np.exp(1j * k * phi)
    return complex(val) if np.ndim(val) == 0 else val


def two_sphere_phase(j, k):
    """Unimodular constant relating :func:`sph_harm_2sphere` to the product basis."""
    return -1.0 if k % 2 else 1.0


# ---------------------------------------------------------------------------
# Quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Product rule on S^{d-1}: trapezoid in theta1, Gauss-Jacobi in cos(theta_j)."""

    d: int
    exactness: int
    polar: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def size(self):
        return self.weights.size

    @property
    def nodes(self):
        return [SpherePoint.from_polar(p) for p in self.polar]

    @property
    def cartesian(self):
        return polar_to_cartesian(self.polar)

    def integrate(self, values):
        """Weighted sum over nodes along the first axis of ``values``."""
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))


def build_quadrature(d, exactness_degree):
    """Rule integrating products of two harmonics of total degree <= ``exactness_degree``."""
    d = _check_dim(d)
    if int(exactness_degree) != exactness_degree or exactness_degree < 0:
        raise DomainError("exactness degree must be a non-negative integer")
    p = int(exactness_degree)
    n1 = p + 1
    th1 = 2.0 * np.pi * np.arange(n1) / n1
    grids = [th1]
    wts = [np.full(n1, 2.0 * np.pi / n1)]
    nj = p // 2 + 1
    for level in range(2, d):
        a = (level - 2) / 2.0
        t, w = roots_jacobi(nj, a, a)
        grids.append(np.arccos(t))
        wts.append(w)
    mesh = np.meshgrid(*grids, indexing="ij")
    polar = np.stack([g.ravel() for g in mesh], axis=-1)
    wmesh = np.meshgrid(*wts, indexing="ij")
    weights = np.prod(np.stack([w.ravel() for w in wmesh], axis=-1), axis=-1)
    return QuadratureRule(d, p, polar, weights)

