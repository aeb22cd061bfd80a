"""Gram matrices, interpolation, empirical SPD probing and refutation witnesses."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from . import sphere_basis as sb
from .exceptions import DomainError, DuplicatePointsError, NotApplicableError, SingularGramError
from .kernel_model import kernel_matrix, summability_bound

__all__ = [
    "Witness",
    "GramSystem",
    "ProbeReport",
    "quadratic_form",
    "assemble_gram",
    "solve_interpolation",
    "eval_interpolant",
    "probe_spd",
    "distinct_random_points",
    "witness_even_odd",
    "witness_finite_longitude_support",
    "witness_c0_zero",
    "witness_progression",
    "witness_negative_form",
]

MIN_SEPARATION = 1e-9
PROBE_SEPARATION = 1e-6
WITNESS_RTOL = 1e-9


def quadratic_form(scheme, points, coeffs):
    """``sum_{i,j} lam_i conj(lam_j) K(xi_i, xi_j)`` (real part; the form is real)."""
    G = kernel_matrix(scheme, points)
    lam = np.asarray(coeffs, dtype=complex)
    return float(np.real(lam @ G @ lam.conj()))


def _normalize(v):
    """Scale to unit max-norm with the first maximal entry real positive."""
    v = np.asarray(v, dtype=complex)
    mags = np.abs(v)
    i = int(np.argmax(mags >= mags.max() * (1 - 1e-12)))
    return v / v[i]


def _null_vector(E):
    """Unit max-norm vector spanning (part of) the kernel of a wide matrix ``E``."""
    _, _, vh = np.linalg.svd(E)
    return _normalize(vh[-1].conj())


@dataclass
class Witness:
    """Distinct points and a nonzero coefficient vector with a (near) zero or negative form."""

    points: np.ndarray
    coeffs: np.ndarray
    residual: float
    kind: str = "null"
    description: str = ""

    @property
    def ambient_dim(self):
        return self.points.shape[1] + 1

    def recompute(self, scheme):
        return quadratic_form(scheme, self.points, self.coeffs)

    def tolerance(self, scheme):
        """Allowed |residual| for a null witness: 1e-9 * ||lam||_1^2 * summability bound."""
        lam1 = float(np.abs(self.coeffs).sum())
        return WITNESS_RTOL * lam1**2 * max(summability_bound(scheme), 1e-300)

    def verify(self, scheme):
        """Recompute the form; null witnesses must vanish, negative ones stay negative."""
        q = self.recompute(scheme)
        if self.kind == "negative_form":
            return q < -self.tolerance(scheme)
        return abs(q) <= self.tolerance(scheme)

    def to_dict(self):
        return {
            "kind": self.kind,
            "description": self.description,
            "points_polar": self.points.tolist(),
            "points_cartesian": sb.polar_to_cartesian(self.points).tolist(),
            "coeffs_re": np.real(self.coeffs).tolist(),
            "coeffs_im": np.imag(self.coeffs).tolist(),
            "residual": self.residual,
        }

    @classmethod
    def from_dict(cls, data):
        points = np.asarray(data["points_polar"], dtype=float)
        coeffs = np.asarray(data["coeffs_re"], float) + 1j * np.asarray(data["coeffs_im"], float)
        return cls(points, coeffs, float(data["residual"]), data.get("kind", "null"),
                   data.get("description", ""))


def _make_witness(scheme, points, coeffs, kind, description):
    points = np.asarray(points, dtype=float)
    coeffs = _normalize(coeffs)
    return Witness(points, coeffs, quadratic_form(scheme, points, coeffs), kind, description)


# ---------------------------------------------------------------------------
# Gram systems


def _geodesic(x, y):
    return 2.0 * np.arcsin(np.clip(np.linalg.norm(x - y, axis=-1) / 2.0, 0.0, 1.0))


def _closest_pair(cart):
    n = cart.shape[0]
    best = (None, None, math.inf)
    for i in range(n - 1):
        dist = _geodesic(cart[i + 1 :], cart[i])
        j = int(np.argmin(dist))
        if dist[j] < best[2]:
            best = (i, i + 1 + j, float(dist[j]))
    return best


@dataclass
class GramSystem:
    """Hermitian Gram matrix of a scheme on a point set, plus an optional solve."""

    scheme: object
    points: np.ndarray
    gram: np.ndarray = field(repr=False)
    asymmetry: float
    lambda_min: float
    values: np.ndarray | None = None
    coefficients: np.ndarray | None = None
    residual: float | None = None

    @property
    def trace(self):
        return float(np.real(np.trace(self.gram)))

    @property
    def normalized_lambda_min(self):
        tr = self.trace
        return self.lambda_min / tr if tr > 0 else 0.0


def assemble_gram(scheme, points, min_distance=MIN_SEPARATION):
    """Gram matrix ``K(xi_i, xi_j)``, symmetrized; rejects non-distinct points."""
    polar = sb.as_polar(points, scheme.ambient_dim)
    if polar.shape[0] == 0:
        raise DomainError("need at least one point")
    cart = sb.polar_to_cartesian(polar)
    if polar.shape[0] > 1:
        i, j, dist = _closest_pair(cart)
        if dist <= min_distance:
            raise DuplicatePointsError(i, j, dist)
    K = kernel_matrix(scheme, polar)
    asym = float(np.abs(K - K.conj().T).max())
    G = 0.5 * (K + K.conj().T)
    lmin = float(np.linalg.eigvalsh(G)[0])
    return GramSystem(scheme, polar, G, asym, lmin)


def solve_interpolation(gs, values, singular_rtol=1e-12):
    """Solve ``K_Xi c = f``; raises :class:`SingularGramError` with a null-vector witness."""
    f = np.asarray(values, dtype=complex).ravel()
    if f.size != gs.points.shape[0]:
        raise DomainError(f"{f.size} values for {gs.points.shape[0]} points")
    w, V = np.linalg.eigh(gs.gram)
    scale = max(gs.trace, float(np.abs(gs.gram).max()), 0.0)
    if w[0] <= singular_rtol * scale:
        # eigenvector v has v^H G v = w0; the form uses lam = conj(v)
        wit = _make_witness(
            gs.scheme, gs.points, V[:, 0].conj(), "null",
            "eigenvector of the smallest Gram eigenvalue",
        )
        raise SingularGramError(float(w[0]), wit)
    c = scipy.linalg.solve(gs.gram, f, assume_a="her")
    resid = float(np.abs(gs.gram @ c - f).max()) if f.size else 0.0
    return replace(gs, values=f, coefficients=c, residual=resid)


def eval_interpolant(scheme, points, coefficients, zeta):
    """``s(zeta) = sum_xi c_xi K(zeta, xi)``; scalar for one point, array otherwise."""
    polar = sb.as_polar(points, scheme.ambient_dim)
    z = sb.as_polar(zeta, scheme.ambient_dim)
    vals = kernel_matrix(scheme, z, polar) @ np.asarray(coefficients, dtype=complex)
    if isinstance(zeta, sb.SpherePoint) or np.ndim(zeta) == 1:
        return complex(vals[0])
    return vals


# ---------------------------------------------------------------------------
# Probing


def distinct_random_points(d, n, rng, antipodal=False, min_distance=PROBE_SEPARATION):
    """``n`` uniform points with pairwise geodesic distance >= ``min_distance``.

    With ``antipodal`` the set is ``P`` followed by ``-P`` (trimmed to ``n``).
    """
    for _ in range(1000):
        if antipodal:
            half = sb.random_points(d, (n + 1) // 2, rng)
            cart = sb.polar_to_cartesian(half)
            cart = np.vstack([cart, -cart])[:n]
        else:
            cart = sb.polar_to_cartesian(sb.random_points(d, n, rng))
        if n < 2 or _closest_pair(cart)[2] >= min_distance:
            return sb.cartesian_to_polar(cart)
    raise RuntimeError("could not draw a well-separated point set")


@dataclass
class ProbeReport:
    n_sets: int
    n_points: int
    seed: int
    antipodal: bool
    normalized_lambda_min: list
    witnesses: list

    @property
    def min_normalized(self):
        return min(self.normalized_lambda_min) if self.normalized_lambda_min else None

    @property
    def passed(self):
        return not self.witnesses

    def to_dict(self):
        return {
            "n_sets": self.n_sets,
            "n_points": self.n_points,
            "seed": self.seed,
            "antipodal": self.antipodal,
            "min_normalized_lambda_min": self.min_normalized,
            "normalized_lambda_min": list(self.normalized_lambda_min),
            "n_witnesses": len(self.witnesses),
            "first_witness": self.witnesses[0][1].to_dict() if self.witnesses else None,
            "witness_sets": [i for i, _ in self.witnesses],
        }


def probe_spd(scheme, n_sets, n_points, seed=0, antipodal=False, threshold=1e-12):
    """Empirical falsifier: ``lambda_min / trace`` over random distinct point sets."""
    if n_points < 1:
        raise DomainError("n_points must be >= 1")
    rng = np.random.default_rng(seed)
    mins, witnesses = [], []
    for s in range(n_sets):
        pts = distinct_random_points(scheme.ambient_dim, n_points, rng, antipodal)
        gs = assemble_gram(scheme, pts)
        w, V = np.linalg.eigh(gs.gram)
        tr = gs.trace
        val = float(w[0] / tr) if tr > 0 else 0.0
        mins.append(val)
        if val <= threshold:
            wit = _make_witness(scheme, pts, V[:, 0].conj(), "null",
                                f"smallest Gram eigenvector of probe set {s}")
            witnesses.append((s, wit))
    return ProbeReport(n_sets, n_points, seed, antipodal, mins, witnesses)


# ---------------------------------------------------------------------------
# Witness constructions


def _parity_classes(scheme):
    """Stored degrees per parity and whether the tail makes each class infinite."""
    degs = scheme.stored_degrees()
    tail = scheme.tail
    even = [j for j in degs if j % 2 == 0]
    odd = [j for j in degs if j % 2 == 1]
    even_inf = tail.active and tail.parity in ("even", "all")
    odd_inf = tail.active and tail.parity in ("odd", "all")
    return even, odd, even_inf, odd_inf


def _generic_point(d, rng):
    x = rng.standard_normal(d)
    x /= np.linalg.norm(x)
    return x


_EVEN_ODD_CASES = ("even_only", "odd_only", "finite_even", "finite_odd")


def witness_even_odd(scheme, hemisphere_points=None, seed=0, case=None):
    """Antipodal construction refuting strict positive definiteness of a convolutional scheme.

    * only even degrees present: ``{p, -p}`` with ``lam = (1, -1)``;
    * only odd degrees present: ``{p, -p}`` with ``lam = (1, 1)``;
    * finitely many even degrees (odd class arbitrary): symmetric ``lam`` on
      ``Xi u -Xi`` kills every odd degree, and ``lam`` on the lower-hemisphere
      set ``Xi`` solves the ``M`` equations of the present even degrees;
    * finitely many odd degrees: the same with antisymmetric ``lam``.

    ``case`` forces one of ``even_only``, ``odd_only``, ``finite_even`` or
    ``finite_odd`` when it applies; by default the first applicable is used.
    """
    if not scheme.is_convolutional():
        raise NotApplicableError("even/odd construction needs a convolutional scheme")
    d = scheme.ambient_dim
    even, odd, even_inf, odd_inf = _parity_classes(scheme)
    rng = np.random.default_rng(seed)
    applicable = {
        "even_only": not odd and not odd_inf,
        "odd_only": not even and not even_inf,
        "finite_even": not even_inf,
        "finite_odd": not odd_inf,
    }
    if case is None:
        case = next((c for c in _EVEN_ODD_CASES if applicable[c]), None)
        if case is None:
            raise NotApplicableError(
                "both parity classes are infinite (tail parity 'all'); no antipodal witness exists"
            )
    elif case not in applicable:
        raise DomainError(f"unknown case {case!r}")
    elif not applicable[case]:
        raise NotApplicableError(f"case {case!r} does not apply to this scheme")

    if case in ("even_only", "odd_only"):
        p = _generic_point(d, rng)
        pts = sb.cartesian_to_polar(np.vstack([p, -p]))
        if case == "even_only":
            return _make_witness(scheme, pts, [1.0, -1.0], "null",
                                 "antipodal pair, antisymmetric coefficients (only even degrees)")
        return _make_witness(scheme, pts, [1.0, 1.0], "null",
                             "antipodal pair, symmetric coefficients (only odd degrees)")

    if case == "finite_even":
        degrees, sign, label = even, 1.0, "even"
    else:
        degrees, sign, label = odd, -1.0, "odd"
    idx = [i for j in degrees for i in sb.degree_indices(d, j)]
    M = len(idx)
    m = M + 1 if hemisphere_points is None else int(hemisphere_points)
    if m <= M:
        raise DomainError(f"need more than M = {M} hemisphere points, got {m}")
    cart = sb.polar_to_cartesian(sb.random_points(d, m, rng))
    cart[cart[:, -1] > 0] *= -1.0
    half = sb.cartesian_to_polar(cart)
    E = sb.harmonics(d, idx, half).T
    lam = _null_vector(E)
    pts = sb.cartesian_to_polar(np.vstack([cart, -cart]))
    coeffs = np.concatenate([lam, sign * lam])
    return _make_witness(
        scheme, pts, coeffs, "null",
        f"{m} lower-hemisphere points and antipodes; finite {label} class of degrees "
        f"{list(degrees)} (M = {M} equations)",
    )


def _longitude_support(scheme):
    tail = scheme.tail
    if tail.active and tail.support_all:
        raise NotApplicableError("tail covers every longitude mode; support is infinite")
    modes = set(scheme.stored_modes())
    if tail.active:
        L = scheme.truncation_degree
        for m in tail.l1_support:
            # on the circle mode m lives only at degree |m|; otherwise at every degree >= |m|
            if scheme.ambient_dim > 2 or (abs(m) > L and tail.parity_ok(abs(m))):
                modes.add(m)
    return sorted(modes)


def witness_finite_longitude_support(scheme):
    """Moment construction for an axial scheme with finitely many longitude modes ``J``.

    Uses ``|J|+1`` equispaced longitudes on the equator-type latitude
    ``theta_j = pi/2`` and a nonzero solution of ``sum_k lam_k e^{i l1 theta_{1,k}} = 0``.
    """
    if not scheme.is_axial():
        raise NotApplicableError("longitude-support construction needs an axial scheme")
    d = scheme.ambient_dim
    J = _longitude_support(scheme)
    n = len(J) + 1
    th1 = 2.0 * np.pi * np.arange(n) / n
    pts = np.column_stack([th1] + [np.full(n, np.pi / 2.0)] * (d - 2))
    if not J:
        return _make_witness(scheme, pts, [1.0], "null", "zero kernel: any single point")
    E = np.exp(1j * np.outer(J, th1))
    lam = _null_vector(E)
    return _make_witness(scheme, pts, lam, "null",
                         f"{n} equispaced longitudes annihilating modes {J}")


def witness_c0_zero(scheme):
    """Single pole-type point ``theta2 = 0`` for an axial scheme whose mode-0 map vanishes."""
    if not scheme.is_axial():
        raise NotApplicableError("pole construction needs an axial scheme")
    d = scheme.ambient_dim
    if d < 3:
        raise NotApplicableError("pole construction needs d >= 3")
    if 0 in scheme.stored_modes() or scheme.tail.covers_mode(0):
        raise NotApplicableError("c_0 is not identically zero")
    pt = np.array([[0.0, 0.0] + [np.pi / 2.0] * (d - 3)])
    return _make_witness(scheme, pt, [1.0], "null",
                         "degenerate pole point theta2 = 0 where all l1 != 0 harmonics vanish")


def witness_progression(scheme, a, b):
    """``b`` equispaced circle points with ``lam_k = exp(-i a theta_k)``.

    Annihilates every mode not congruent to ``a`` modulo ``b``.
    """
    if scheme.ambient_dim != 2:
        raise NotApplicableError("progression construction is for the circle")
    th = 2.0 * np.pi * np.arange(b) / b
    lam = np.exp(-1j * a * th)
    return _make_witness(scheme, th[:, None], lam, "null",
                         f"{b} equispaced points missing the progression {a} + {b}Z")


def witness_negative_form(scheme, vector, quadrature=None):
    """Points and coefficients whose quadratic form equals ``u^H A u`` for a stored vector ``u``.

    ``u`` is indexed by ``scheme.basis``. With an exact quadrature rule,
    ``lam_i = w_i sum_B conj(u_B) conj(Y_B(xi_i))`` gives
    ``sum_i lam_i Y_A(xi_i) = conj(u_A)``. The tail (if any) contributes a
    nonnegative amount, so the result is only a refutation when it stays
    negative; :meth:`Witness.verify` checks that.
    """
    d, L = scheme.ambient_dim, scheme.truncation_degree
    u = np.asarray(vector, dtype=complex)
    if quadrature is None:
        quadrature = sb.build_quadrature(d, 2 * L)
    Y = sb.harmonics(d, scheme.basis, quadrature.polar)
    lam = quadrature.weights * (Y.conj() @ u.conj())
    keep = np.abs(lam) > 1e-14 * np.abs(lam).max()
    pts = quadrature.polar[keep]
    return _make_witness(scheme, pts, lam[keep], "negative_form",
                         "quadrature points reproducing a negative coefficient direction")
