"""Coefficient schemes for kernels on S^{d-1}, structural predicates and evaluation.

A scheme is the finite set of stored expansion coefficients

    K(xi, zeta) = sum_{A,B} a_{A,B} Y_A(xi) conj(Y_B(zeta))

over the product basis of :mod:`sphkern.sphere_basis`, plus an optional
:class:`TailDescriptor` that continues the expansion diagonally beyond the
truncation degree. Stored values are exact; structural predicates compare
them with zero tolerance.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from types import MappingProxyType
from typing import Mapping

import numpy as np
from scipy.special import gammaln

from . import sphere_basis as sb
from .exceptions import (
    DivergentTailError,
    DomainError,
    InsufficientQuadratureError,
    NotApplicableError,
)
from .sphere_basis import HarmonicIndex

__all__ = [
    "Structure",
    "TailDescriptor",
    "CoefficientScheme",
    "StructureReport",
    "eval_kernel",
    "kernel_matrix",
    "check_structure",
    "summability_bound",
    "recover_coefficient",
    "recover_all",
    "apply_convolution_multiplier",
    "diagonalize_convolutional",
    "index_of",
    "label_of",
]

TAIL_TOLERANCE = 1e-12
MAX_SERIES_DEGREE = 100_000
MAX_EXPLICIT_DEGREE = 400


class Structure(str, Enum):
    GENERAL = "general"
    CONVOLUTIONAL = "convolutional"
    CONVOLUTIONAL_DIAGONAL = "convolutional_diagonal"
    AXIAL = "axial"
    ISOTROPIC = "isotropic"


@dataclass(frozen=True)
class TailDescriptor:
    """Diagonal continuation ``d_{j,k} = A (1+j)^(-s(d-1))`` for degrees above L.

    ``parity`` restricts the continued degrees to ``"even"``, ``"odd"`` or
    ``"all"``; ``l1_support`` is ``"all"`` or a finite set of longitude modes.
    """

    kind: str = "none"
    s: float = 0.0
    amplitude: float = 0.0
    parity: str = "all"
    l1_support: object = "all"

    def __post_init__(self):
        if self.kind not in ("none", "power"):
            raise DomainError(f"unknown tail kind {self.kind!r}")
        if self.parity not in ("even", "odd", "all"):
            raise DomainError(f"unknown tail parity {self.parity!r}")
        if self.l1_support != "all":
            object.__setattr__(self, "l1_support", frozenset(int(v) for v in self.l1_support))
        if self.kind == "power":
            if not (math.isfinite(self.amplitude) and self.amplitude > 0):
                raise DomainError("tail amplitude must be positive and finite")
            if not math.isfinite(self.s):
                raise DomainError("tail exponent must be finite")
            if not self.s > 1:
                raise DivergentTailError(f"tail needs s > 1 to be summable, got s = {self.s:g}")

    @classmethod
    def power(cls, s, amplitude, parity="all", l1_support="all"):
        return cls("power", float(s), float(amplitude), parity, l1_support)

    @property
    def active(self):
        return self.kind == "power" and (self.l1_support == "all" or len(self.l1_support) > 0)

    @property
    def support_all(self):
        return self.l1_support == "all"

    def parity_ok(self, j):
        if self.parity == "all":
            return True
        return (j % 2 == 0) == (self.parity == "even")

    def exponent(self, d):
        return self.s * (d - 1)

    def weight(self, j, d):
        return self.amplitude * (1.0 + j) ** (-self.exponent(d))

    def covers(self, idx, L):
        """Whether the tail assigns a nonzero diagonal entry to ``idx``."""
        if not self.active or idx.degree <= L or not self.parity_ok(idx.degree):
            return False
        return self.support_all or idx.l1 in self.l1_support

    def covers_mode(self, l1):
        return self.active and (self.support_all or l1 in self.l1_support)

    def check_convergent(self, d):
        if self.kind == "power" and self.exponent(d) <= d - 1:
            raise DivergentTailError(
                f"tail exponent s(d-1) = {self.exponent(d):g} must exceed d-1 = {d - 1}"
            )

    def remainder_bound(self, d, J):
        """Upper bound on ``sum_{j>J} A (1+j)^-p N_{j,d} / sigma``.

        Uses ``N_{j,d} <= 2 (1+j)^(d-2)`` and an integral comparison.
        """
        self.check_convergent(d)
        q = self.exponent(d) - (d - 2)
        return 2.0 * self.amplitude * (J + 1.0) ** (1.0 - q) / (sb.surface_area(d) * (q - 1.0))

    def cutoff_degree(self, d, L, tol=TAIL_TOLERANCE):
        """Smallest degree J >= L with :meth:`remainder_bound` below ``tol``."""
        self.check_convergent(d)
        q = self.exponent(d) - (d - 2)
        target = 2.0 * self.amplitude / (sb.surface_area(d) * (q - 1.0) * tol)
        J = max(L, int(math.ceil(target ** (1.0 / (q - 1.0)))) - 1)
        while J > L and self.remainder_bound(d, J - 1) < tol:
            J -= 1
        return J

    def to_dict(self):
        if self.kind == "none":
            return {"kind": "none"}
        support = "all" if self.support_all else sorted(self.l1_support)
        return {
            "kind": "power",
            "s": self.s,
            "amplitude": self.amplitude,
            "parity": self.parity,
            "l1_support": support,
        }


NO_TAIL = TailDescriptor()


def index_of(d, j, k):
    """Basis index with degree ``j`` and 1-based label ``k``."""
    idx = sb.degree_indices(d, j)
    if not 1 <= k <= len(idx):
        raise DomainError(f"label k={k} outside 1..{len(idx)} for degree {j}, d={d}")
    return idx[k - 1]


def label_of(d, idx):
    """Inverse of :func:`index_of`: ``(degree, k)``."""
    return idx.degree, sb.degree_indices(d, idx.degree).index(idx) + 1


@dataclass(frozen=True, eq=False)
class CoefficientScheme:
    """Stored coefficients ``a_{A,B}`` of one kernel plus its tail."""

    ambient_dim: int
    truncation_degree: int
    structure: Structure
    entries: Mapping = field(repr=False)
    tail: TailDescriptor = NO_TAIL

    def __post_init__(self):
        d, L = self.ambient_dim, self.truncation_degree
        if d < 2:
            raise DomainError("ambient dimension must be >= 2")
        if L < 0:
            raise DomainError("truncation degree must be >= 0")
        clean = {}
        for (a, b), v in self.entries.items():
            for idx in (a, b):
                idx.validate(d)
                if idx.degree > L:
                    raise DomainError(f"index {idx} exceeds truncation degree {L}")
            v = complex(v)
            if v != 0:
                clean[(a, b)] = v
        object.__setattr__(self, "entries", MappingProxyType(clean))
        object.__setattr__(self, "structure", Structure(self.structure))
        if self.structure is Structure.AXIAL:
            bad = next((k for k in clean if k[0].l1 != k[1].l1), None)
            if bad is not None:
                raise DomainError(f"axial entry couples different modes: {_entry_str(bad)}")

    def __reduce__(self):
        return (type(self), (self.ambient_dim, self.truncation_degree, self.structure,
                             dict(self.entries), self.tail))

    def __deepcopy__(self, memo):
        # immutable value object
        return self

    # -- constructors ------------------------------------------------------

    @classmethod
    def general(cls, d, L, entries, tail=NO_TAIL, hermitian=False):
        """From labels ``{(j, k, j', k'): a}``."""
        out = {}
        for (j, k, jp, kp), v in entries.items():
            out[(index_of(d, j, k), index_of(d, jp, kp))] = v
        return cls._finish(d, L, Structure.GENERAL, out, tail, hermitian)

    @classmethod
    def convolutional(cls, d, L, blocks, tail=NO_TAIL, hermitian=False):
        """From per-degree blocks ``{j: D_j}`` of shape ``N_{j,d} x N_{j,d}``."""
        out = {}
        for j, block in blocks.items():
            idx = sb.degree_indices(d, j)
            block = np.asarray(block, dtype=complex)
            if block.shape != (len(idx), len(idx)):
                raise DomainError(f"block D_{j} must be {len(idx)}x{len(idx)}")
            for r, a in enumerate(idx):
                for c, b in enumerate(idx):
                    out[(a, b)] = block[r, c]
        return cls._finish(d, L, Structure.CONVOLUTIONAL, out, tail, hermitian)

    @classmethod
    def convolutional_diagonal(cls, d, L, values, tail=NO_TAIL):
        """From ``{(j, k): d_{j,k}}`` (real)."""
        out = {}
        for (j, k), v in values.items():
            if complex(v).imag != 0:
                raise DomainError("diagonal convolutional coefficients must be real")
            idx = index_of(d, j, k)
            out[(idx, idx)] = float(complex(v).real)
        return cls._finish(d, L, Structure.CONVOLUTIONAL_DIAGONAL, out, tail, True)

    @classmethod
    def axial(cls, d, L, maps, tail=NO_TAIL, hermitian=False):
        """From ``{l1: {(row_tail, col_tail): c}}`` or ``{l1: matrix}``.

        A matrix is read on the truncated alpha ordering of ``l1``.
        """
        out = {}
        for l1, cmap in maps.items():
            if not isinstance(cmap, Mapping):
                idx = sb.AlphaOrdering(d, l1, L).indices()
                block = np.asarray(cmap, dtype=complex)
                if block.shape != (len(idx), len(idx)):
                    raise DomainError(f"block c_{l1} must be {len(idx)}x{len(idx)}")
                cmap = {(a.tail, b.tail): block[r, c]
                        for r, a in enumerate(idx) for c, b in enumerate(idx)}
            for (row, col), v in cmap.items():
                out[(HarmonicIndex(l1, tuple(row)), HarmonicIndex(l1, tuple(col)))] = v
        return cls._finish(d, L, Structure.AXIAL, out, tail, hermitian)

    @classmethod
    def isotropic(cls, d, L, coeffs, tail=NO_TAIL):
        """From per-degree scalars ``{j: c_j}`` or a sequence ``c_0, c_1, ...``."""
        if not isinstance(coeffs, Mapping):
            coeffs = dict(enumerate(coeffs))
        out = {}
        for j, v in coeffs.items():
            if complex(v).imag != 0:
                raise DomainError("isotropic coefficients must be real")
            for idx in sb.degree_indices(d, j):
                out[(idx, idx)] = float(complex(v).real)
        return cls._finish(d, L, Structure.ISOTROPIC, out, tail, True)

    @classmethod
    def _finish(cls, d, L, structure, entries, tail, hermitian):
        scheme = cls(d, L, structure, entries, tail or NO_TAIL)
        if hermitian:
            bad = _hermitian_violation(scheme.entries)
            if bad is not None:
                raise DomainError(f"scheme declared Hermitian but entry {bad} is not")
        return scheme

    # -- derived views -----------------------------------------------------

    @cached_property
    def basis(self):
        return sb.basis_indices(self.ambient_dim, self.truncation_degree)

    @cached_property
    def _position(self):
        return {idx: i for i, idx in enumerate(self.basis)}

    @cached_property
    def matrix(self):
        """Dense coefficient matrix over :attr:`basis` (read-only)."""
        n = len(self.basis)
        mat = np.zeros((n, n), dtype=complex)
        pos = self._position
        for (a, b), v in self.entries.items():
            mat[pos[a], pos[b]] = v
        mat.setflags(write=False)
        return mat

    @property
    def has_tail(self):
        return self.tail.active

    def degree_block(self, j):
        """Block ``D_j`` of the coefficient matrix (degree ``j`` rows and columns)."""
        idx = sb.degree_indices(self.ambient_dim, j)
        if j > self.truncation_degree:
            return np.zeros((len(idx), len(idx)), dtype=complex)
        pos = [self._position[i] for i in idx]
        return self.matrix[np.ix_(pos, pos)].copy()

    def axial_block(self, l1, size=None):
        """``c_{l1}`` on the truncated alpha ordering, optionally the leading ``size``."""
        order = sb.AlphaOrdering(self.ambient_dim, l1, self.truncation_degree)
        pos = [self._position[i] for i in order.indices()]
        if size is not None:
            pos = pos[:size]
        return order, self.matrix[np.ix_(pos, pos)].copy()

    def stored_modes(self):
        """Longitude modes with a nonzero stored coefficient."""
        return sorted({a.l1 for a, _ in self.entries} | {b.l1 for _, b in self.entries})

    def stored_degrees(self):
        """Degrees with a nonzero stored coefficient."""
        return sorted({a.degree for a, _ in self.entries} | {b.degree for _, b in self.entries})

    def is_axial(self):
        return all(a.l1 == b.l1 for a, b in self.entries)

    def is_convolutional(self):
        return all(a.degree == b.degree for a, b in self.entries)

    def is_diagonal(self):
        return all(a == b for a, b in self.entries)

    def is_hermitian(self):
        return _hermitian_violation(self.entries) is None

    def tail_indices(self, J):
        """Tail-covered indices with degree in ``(L, J]``."""
        d, L = self.ambient_dim, self.truncation_degree
        out = []
        for j in range(L + 1, J + 1):
            if not self.tail.parity_ok(j):
                continue
            out.extend(i for i in sb.degree_indices(d, j) if self.tail.covers(i, L))
        return out


HERMITIAN_RTOL = 1e-12


def _hermitian_violation(entries):
    """First pair with ``a_AB != conj(a_BA)`` beyond a relative rounding tolerance."""
    for (a, b), v in entries.items():
        w = complex(entries.get((b, a), 0)).conjugate()
        if abs(v - w) > HERMITIAN_RTOL * max(abs(v), abs(w)):
            return (a, b)
    return None


# ---------------------------------------------------------------------------
# Evaluation


def _polar_pair(scheme, xi, zeta):
    d = scheme.ambient_dim
    return sb.as_polar(xi, d), sb.as_polar(zeta, d)


def kernel_matrix(scheme, X, Z=None):
    """``K[i, j] = K(X[i], Z[j])`` for point arrays (polar) or SpherePoint lists."""
    if Z is None:
        Z = X
    X, Z = _polar_pair(scheme, X, Z)
    if scheme.structure is Structure.AXIAL:
        out = _stored_axial(scheme, X, Z)
    else:
        out = _stored_dense(scheme, X, Z)
    if scheme.has_tail:
        out = out + _tail_matrix(scheme, X, Z)
    return out


def eval_kernel(scheme, xi, zeta):
    """Truncated-series value ``K(xi, zeta)`` including the declared tail."""
    for p in (xi, zeta):
        if isinstance(p, sb.SpherePoint) and p.ambient_dim != scheme.ambient_dim:
            raise DomainError(
                f"point in R^{p.ambient_dim} for a scheme on S^{scheme.ambient_dim - 1}"
            )
    return complex(kernel_matrix(scheme, xi, zeta)[0, 0])


def _stored_dense(scheme, X, Z):
    if not scheme.entries:
        return np.zeros((X.shape[0], Z.shape[0]), dtype=complex)
    used = sorted({scheme._position[i] for pair in scheme.entries for i in pair})
    idx = [scheme.basis[i] for i in used]
    A = scheme.matrix[np.ix_(used, used)]
    d = scheme.ambient_dim
    YX = sb.harmonics(d, idx, X)
    YZ = YX if Z is X else sb.harmonics(d, idx, Z)
    return YX @ A @ YZ.conj().T


def _stored_axial(scheme, X, Z):
    """Factored form: sum_l1 exp(i l1 (theta1 - upsilon1)) g(theta')^T c_l1 g(upsilon')."""
    d = scheme.ambient_dim
    out = np.zeros((X.shape[0], Z.shape[0]), dtype=complex)
    for l1 in scheme.stored_modes():
        order, C = scheme.axial_block(l1)
        rows = np.flatnonzero(np.any(C != 0, axis=1) | np.any(C != 0, axis=0))
        if rows.size == 0:
            continue
        C = C[np.ix_(rows, rows)]
        idx = [order.indices()[r] for r in rows]
        gX = sb._real_factors(d, idx, X)
        gZ = gX if Z is X else sb._real_factors(d, idx, Z)
        phase = np.exp(1j * l1 * (X[:, 0][:, None] - Z[:, 0][None, :]))
        out += phase * (gX @ C @ gZ.T)
    return out


def _tail_matrix(scheme, X, Z):
    d, L, tail = scheme.ambient_dim, scheme.truncation_degree, scheme.tail
    if tail.support_all:
        J = tail.cutoff_degree(d, L)
        if J > MAX_SERIES_DEGREE:
            warnings.warn(
                f"tail series needs degree {J}; truncating at {MAX_SERIES_DEGREE}",
                RuntimeWarning,
                stacklevel=3,
            )
            J = MAX_SERIES_DEGREE
        t = np.clip(sb.polar_to_cartesian(X) @ sb.polar_to_cartesian(Z).T, -1.0, 1.0)
        return _addition_series(d, L, J, tail, t).astype(complex)
    J = tail.cutoff_degree(d, L)
    if J > MAX_EXPLICIT_DEGREE:
        warnings.warn(
            f"finite-support tail needs degree {J}; truncating at {MAX_EXPLICIT_DEGREE}",
            RuntimeWarning,
            stacklevel=3,
        )
        J = MAX_EXPLICIT_DEGREE
    idx = scheme.tail_indices(J)
    if not idx:
        return np.zeros((X.shape[0], Z.shape[0]), dtype=complex)
    w = np.array([tail.weight(i.degree, d) for i in idx])
    YX = sb.harmonics(d, idx, X)
    YZ = sb.harmonics(d, idx, Z)
    return (YX * w) @ YZ.conj().T


def _addition_series(d, L, J, tail, t):
    """sum_{L<j<=J, parity ok} A (1+j)^-p (N_{j,d}/sigma) P_j^d(t), by recurrence."""
    lam = (d - 2) / 2.0
    sigma = sb.surface_area(d)
    jj = np.arange(J + 1, dtype=float)
    # N_{j,d} in floating point; only used as a weight
    if d == 2:
        nj = np.where(jj == 0, 1.0, 2.0)
    else:
        nj = (2 * jj + d - 2) / (d - 2) * np.exp(
            gammaln(jj + d - 2) - gammaln(jj + 1) - gammaln(d - 2)
        )
    coef = tail.amplitude * (1.0 + jj) ** (-tail.exponent(d)) * nj / sigma
    mask = jj > L
    if tail.parity != "all":
        mask &= (jj % 2 == 0) == (tail.parity == "even")
    coef = np.where(mask, coef, 0.0)
    n = jj[1:]
    a = 2.0 * (n + lam) / (n + 2.0 * lam)
    b = n / (n + 2.0 * lam)
    out = coef[0] * np.ones_like(t)
    if J >= 1:
        out = out + coef[1] * t
    p_prev = np.ones_like(t)
    p_cur = t.copy()
    for j in range(2, J + 1):
        p_prev, p_cur = p_cur, a[j - 2] * t * p_cur - b[j - 2] * p_prev
        if mask[j]:
            out += coef[j] * p_cur
    return out


# ---------------------------------------------------------------------------
# Structure


_FLAGS = (
    "hermitian",
    "parity_invariant",
    "convolutional",
    "axially_symmetric",
    "longitudinal_reversible",
    "longitudinal_independent",
    "real_valued",
)


@dataclass
class StructureReport:
    """Flag per structural property; false flags carry one violating entry.

    A flag of ``None`` means the property is only defined for axially
    symmetric kernels and the scheme is not one.
    """

    flags: dict
    witnesses: dict

    def __getattr__(self, name):
        if name in _FLAGS:
            return self.flags[name]
        raise AttributeError(name)

    def to_dict(self):
        return {
            name: {"value": self.flags[name], "witness": self.witnesses.get(name)}
            for name in _FLAGS
        }


def _entry_str(pair):
    if isinstance(pair, str):
        return pair
    a, b = pair
    return f"a[{a},{b}]"


def check_structure(scheme):
    """Evaluate every structural predicate exactly on stored entries and tail."""
    entries = scheme.entries
    tail = scheme.tail
    flags, wit = {}, {}

    def first(pred):
        return next((k for k, v in entries.items() if not pred(k, v)), None)

    def record(name, bad):
        flags[name] = bad is None
        if bad is not None:
            wit[name] = _entry_str(bad)

    record("hermitian", _hermitian_violation(entries))
    # tail entries are diagonal, so they never break parity, convolution or axial form
    record("parity_invariant", first(lambda k, v: (k[0].degree + k[1].degree) % 2 == 0))
    record("convolutional", first(lambda k, v: k[0].degree == k[1].degree))
    record("axially_symmetric", first(lambda k, v: k[0].l1 == k[1].l1))

    def real_pred(k, v):
        a, b = k
        s = a.conj_sign(scheme.ambient_dim) * b.conj_sign(scheme.ambient_dim)
        other = complex(entries.get((a.conjugate(), b.conjugate()), 0))
        return other == s * v.conjugate()

    bad = first(real_pred)
    if bad is None:
        bad = _asymmetric_tail_mode(tail)
    record("real_valued", bad)

    if flags["axially_symmetric"]:
        def rev_pred(k, v):
            a, b = k
            return complex(entries.get((a.conjugate(), b.conjugate()), 0)) == v

        bad = first(rev_pred)
        if bad is None:
            bad = _asymmetric_tail_mode(tail)
        record("longitudinal_reversible", bad)
        bad = first(lambda k, v: k[0].l1 == 0)
        if bad is None and tail.active and (tail.support_all or tail.l1_support - {0}):
            bad = "tail covers modes l1 != 0"
        record("longitudinal_independent", bad)
    else:
        for name in ("longitudinal_reversible", "longitudinal_independent"):
            flags[name] = None
            wit[name] = "not axially symmetric"
    return StructureReport(flags, wit)


def _asymmetric_tail_mode(tail):
    if not tail.active or tail.support_all:
        return None
    for m in sorted(tail.l1_support):
        if -m not in tail.l1_support:
            return f"tail covers mode {m} but not {-m}"
    return None


# ---------------------------------------------------------------------------
# Summability and coefficient recovery


def summability_bound(scheme):
    """Absolute-summability sum over stored entries plus a closed-form tail bound.

    The result bounds ``|K(xi, zeta)|`` uniformly on the sphere.
    """
    d = scheme.ambient_dim
    sigma = sb.surface_area(d)
    total = 0.0
    for (a, b), v in scheme.entries.items():
        na = sb.dim_harmonic_space(a.degree, d)
        nb = sb.dim_harmonic_space(b.degree, d)
        total += abs(v) * math.sqrt(na * nb) / sigma
    if scheme.tail.kind == "power":
        scheme.tail.check_convergent(d)
        if scheme.tail.active:
            total += scheme.tail.remainder_bound(d, scheme.truncation_degree)
    return total


def _kernel_callable(kernel):
    if isinstance(kernel, CoefficientScheme):
        return lambda X, Z: kernel_matrix(kernel, X, Z)
    return kernel


def recover_coefficient(
    kernel, j, k, jp, kp, quadrature, *, truncation_degree=None, convention="orthonormal"
):
    """Recover ``a_{j,j',k,k'}`` by double quadrature of the kernel.

    ``convention="orthonormal"`` integrates ``K conj(Y_j^k)(xi) Y_{j'}^{k'}(zeta)``,
    which inverts the expansion exactly. ``convention="literal"`` integrates
    ``K Y_j^k(xi) conj(Y_{j'}^{k'})(zeta)``; it returns ``s_A s_B a`` at the
    mode-reflected pair of indices instead, with ``s = HarmonicIndex.conj_sign``.
    """
    d = quadrature.d
    if isinstance(kernel, CoefficientScheme):
        if kernel.has_tail:
            raise InsufficientQuadratureError("a tail has unbounded degree; no finite rule is exact")
        truncation_degree = kernel.truncation_degree
    if truncation_degree is None:
        raise InsufficientQuadratureError("truncation degree of a black-box kernel is required")
    need = j + jp + truncation_degree
    if quadrature.exactness < need:
        raise InsufficientQuadratureError(
            f"quadrature exact to degree {quadrature.exactness}, need {need}"
        )
    a_idx, b_idx = index_of(d, j, k), index_of(d, jp, kp)
    nodes = quadrature.polar
    ya = sb.harmonics(d, [a_idx], nodes)[:, 0]
    yb = sb.harmonics(d, [b_idx], nodes)[:, 0]
    K = _kernel_callable(kernel)(nodes, nodes)
    w = quadrature.weights
    if convention == "orthonormal":
        left, right = ya.conj(), yb
    elif convention == "literal":
        left, right = ya, yb.conj()
    else:
        raise DomainError(f"unknown convention {convention!r}")
    return complex((w * left) @ K @ (w * right))


def recover_all(kernel, L, quadrature):
    """All coefficients up to degree ``L`` at once (orthonormal convention)."""
    d = quadrature.d
    kernel_degree = kernel.truncation_degree if isinstance(kernel, CoefficientScheme) else L
    if quadrature.exactness < 2 * L + kernel_degree:
        raise InsufficientQuadratureError("quadrature not exact enough for full recovery")
    nodes = quadrature.polar
    Y = sb.harmonics(d, sb.basis_indices(d, L), nodes)
    K = _kernel_callable(kernel)(nodes, nodes)
    W = Y * quadrature.weights[:, None]
    return W.conj().T @ K @ W


# ---------------------------------------------------------------------------
# Convolution operator


def apply_convolution_multiplier(scheme, f_coeffs):
    """Coefficients of ``Tf = int K(., zeta) f(zeta)`` for a diagonal scheme.

    ``f_coeffs`` maps :class:`HarmonicIndex` to complex coefficients; the
    result has the same keys.
    """
    if not scheme.is_diagonal():
        raise NotApplicableError("multiplier form needs a diagonal scheme; diagonalize first")
    d, L = scheme.ambient_dim, scheme.truncation_degree
    out = {}
    for idx, f in f_coeffs.items():
        idx.validate(d)
        if idx.degree <= L:
            dk = complex(scheme.entries.get((idx, idx), 0))
        elif scheme.tail.covers(idx, L):
            dk = scheme.tail.weight(idx.degree, d)
        else:
            dk = 0.0
        out[idx] = dk * complex(f)
    return out


def diagonalize_convolutional(scheme):
    """Per-degree eigendecomposition ``D_j = V diag(w) V^H`` of a convolutional scheme.

    Eigenvalues are sorted descending; each eigenvector has its first
    nonzero component made real positive.
    """
    if not scheme.is_convolutional():
        raise NotApplicableError("scheme is not convolutional")
    out = {}
    for j in range(scheme.truncation_degree + 1):
        D = scheme.degree_block(j)
        w, V = np.linalg.eigh(D)
        order = np.argsort(-w, kind="stable")
        w, V = w[order], V[:, order]
        for c in range(V.shape[1]):
            nz = np.flatnonzero(np.abs(V[:, c]) > 1e-14)
            if nz.size:
                ph = V[nz[0], c] / abs(V[nz[0], c])
                V[:, c] = V[:, c] / ph
        out[j] = (w, V)
    return out

