"""Certificates of (strict) positive definiteness from coefficient structure.

Every check returns a :class:`Condition`; :func:`certify` combines the
applicable ones into a :class:`Certificate`. Refutations always carry a
finite witness (point set and coefficients, or a violated index).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import interp_engine as ie
from . import sphere_basis as sb
from .exceptions import DomainError, NotApplicableError
from .kernel_model import check_structure

__all__ = [
    "Verdict",
    "Condition",
    "Certificate",
    "BlockMatrix",
    "build_block_matrix",
    "block_lambda_min",
    "dominance_rows",
    "check_coefficient_psd",
    "check_axial_pd",
    "check_axial_fset",
    "check_scaled_eigen_spd",
    "check_diag_dominance_spd",
    "check_axial_necessary",
    "check_convolutional",
    "check_circle",
    "certify",
    "EXIT_CODES",
]

DEFAULT_TOL = 1e-10


class Verdict(str, Enum):
    SPD_CERTIFIED = "SPD_CERTIFIED"
    PD_CERTIFIED = "PD_CERTIFIED"
    NOT_SPD = "NOT_SPD"
    INDETERMINATE = "INDETERMINATE"


EXIT_CODES = {
    Verdict.SPD_CERTIFIED: 0,
    Verdict.PD_CERTIFIED: 1,
    Verdict.INDETERMINATE: 2,
    Verdict.NOT_SPD: 3,
}

# roles of a condition in the final verdict
PD_SUFFICIENT = "pd_sufficient"
SPD_SUFFICIENT = "spd_sufficient"
NECESSARY = "necessary"


@dataclass
class Condition:
    """Outcome of one check: ``status`` is ``pass``, ``fail`` or ``indeterminate``."""

    name: str
    role: str
    status: str
    evidence: dict = field(default_factory=dict)
    witness: object = None

    @property
    def passed(self):
        return self.status == "pass"

    @property
    def refutes(self):
        """A failed condition that is necessary (or iff) and backed by a witness."""
        return self.status == "fail" and self.evidence.get("refutes", False)

    def to_dict(self):
        out = {"name": self.name, "role": self.role, "status": self.status,
               "evidence": self.evidence}
        if self.witness is not None:
            out["witness"] = self.witness.to_dict()
        return out


@dataclass
class Certificate:
    verdict: Verdict
    conditions: list
    parameters: dict
    structure: dict
    witness: object = None

    @property
    def exit_code(self):
        return EXIT_CODES[self.verdict]

    def condition(self, name):
        return next(c for c in self.conditions if c.name == name)

    def to_dict(self):
        return {
            "verdict": self.verdict.value,
            "parameters": self.parameters,
            "structure": self.structure,
            "conditions": [c.to_dict() for c in self.conditions],
            "witness": None if self.witness is None else self.witness.to_dict(),
        }


# ---------------------------------------------------------------------------
# Matrix helpers


def _norm1(M):
    return float(np.abs(M).sum(axis=0).max()) if M.size else 0.0


def block_lambda_min(M):
    """Smallest eigenvalue of the Hermitian part of ``M`` (``inf`` when empty)."""
    if M.size == 0:
        return float("inf")
    H = 0.5 * (M + M.conj().T)
    return float(np.linalg.eigvalsh(H)[0])


def _is_psd(M, tol):
    return block_lambda_min(M) >= -tol * _norm1(M)


def _is_strict_pd(M, tol):
    n1 = _norm1(M)
    return n1 > 0 and block_lambda_min(M) > tol * n1


@dataclass(frozen=True)
class BlockMatrix:
    """Leading ``k x k`` block of ``c_{l1}`` in alpha order, optionally sqrt(N)-scaled."""

    l1: int
    k: int
    entries: np.ndarray
    scaled: bool
    ordering: object

    @property
    def final_degrees(self):
        return [self.ordering.final_degree(a) for a in range(self.k)]


def build_block_matrix(scheme, l1, k=None, scaled=False):
    """``A_{l1}^k`` (or ``A~`` with entries times ``sqrt(N_a N_a')`` when ``scaled``).

    A mode without stored entries gives a zero block.
    """
    if not scheme.is_axial():
        raise NotApplicableError("block matrices need an axial scheme")
    order, A = scheme.axial_block(l1)
    n = A.shape[0]
    if k is None:
        k = n
    if not 0 <= k <= n:
        raise DomainError(f"k={k} outside 0..{n} for mode {l1}")
    A = A[:k, :k]
    if scaled:
        d = scheme.ambient_dim
        S = np.sqrt([float(sb.dim_harmonic_space(order.final_degree(a), d)) for a in range(k)])
        A = S[:, None] * A * S[None, :]
    A.setflags(write=False)
    return BlockMatrix(l1, k, A, scaled, order)


def dominance_rows(At, sigma):
    """Row test ``sum_{b != a} |A_ab| < sigma |A_aa|``.

    Returns ``(ok, ratios, worst_row)`` with ``ratios[a] = off_a / |A_aa|``
    (``inf`` for a zero diagonal).
    """
    At = np.asarray(At)
    diag = np.abs(np.diag(At))
    off = np.abs(At).sum(axis=1) - diag
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(diag > 0, off / np.where(diag > 0, diag, 1.0), np.inf)
    worst = int(np.argmax(ratios)) if ratios.size else -1
    ok = bool(np.all(off < sigma * diag))
    return ok, ratios, worst


def _require_hermitian(scheme):
    if not scheme.is_hermitian():
        raise NotApplicableError("certificates need a Hermitian coefficient scheme")


def _negative_direction_witness(scheme, M, positions):
    """Negative-form witness from the lowest eigenvector of the submatrix ``M``."""
    w, V = np.linalg.eigh(0.5 * (M + M.conj().T))
    u = np.zeros(len(scheme.basis), dtype=complex)
    u[positions] = V[:, 0]
    wit = ie.witness_negative_form(scheme, u)
    return wit if wit.verify(scheme) else None


def _fail_with_negative(name, role, scheme, M, positions, evidence):
    wit = _negative_direction_witness(scheme, M, positions)
    evidence["refutes"] = wit is not None
    if wit is None:
        evidence["note"] = "negative coefficient direction is masked by the tail"
        return Condition(name, role, "indeterminate", evidence)
    return Condition(name, role, "fail", evidence, wit)


# ---------------------------------------------------------------------------
# Generic and axial checks


def check_coefficient_psd(scheme, tol=DEFAULT_TOL):
    """PSD stored coefficient matrix (plus positive diagonal tail) implies PD."""
    _require_hermitian(scheme)
    A = scheme.matrix
    lmin = block_lambda_min(A)
    ev = {"lambda_min": lmin, "norm1": _norm1(A)}
    if _is_psd(A, tol):
        return Condition("coefficient_psd", PD_SUFFICIENT, "pass", ev)
    return _fail_with_negative("coefficient_psd", PD_SUFFICIENT, scheme, A,
                               list(range(len(scheme.basis))), ev)


def _require_axial(scheme):
    if not scheme.is_axial():
        raise NotApplicableError("scheme is not axially symmetric")
    if scheme.ambient_dim < 3:
        raise NotApplicableError("axial certificates need d >= 3; use check_circle")
    _require_hermitian(scheme)


def _modes_upto(L):
    return range(-L, L + 1)


def _block_positions(scheme, l1):
    order = sb.AlphaOrdering(scheme.ambient_dim, l1, scheme.truncation_degree)
    return order, [scheme._position[i] for i in order.indices()]


def check_axial_pd(scheme, tol=DEFAULT_TOL):
    """PD iff every block ``c_{l1}`` is PSD (tail diagonal blocks are positive)."""
    _require_axial(scheme)
    per_mode, bad = {}, None
    for l1 in scheme.stored_modes():
        _, A = scheme.axial_block(l1)
        lmin = block_lambda_min(A)
        ok = _is_psd(A, tol)
        per_mode[str(l1)] = {"size": A.shape[0], "lambda_min": lmin, "pass": ok}
        if not ok and (bad is None or lmin < per_mode[str(bad)]["lambda_min"]):
            bad = l1
    ev = {"per_mode": per_mode, "tail": "positive diagonal" if scheme.tail.active else "none"}
    if bad is None:
        return Condition("axial_pd", PD_SUFFICIENT, "pass", ev)
    ev["failing_mode"] = bad
    _, pos = _block_positions(scheme, bad)
    _, A = scheme.axial_block(bad)
    return _fail_with_negative("axial_pd", PD_SUFFICIENT, scheme, A, pos, ev)


def _tail_covers_all_rows(scheme):
    t = scheme.tail
    return t.active and t.support_all and t.parity == "all"


def check_axial_fset(scheme, tol=DEFAULT_TOL):
    """Strictly PD blocks for every mode; used as a proxy for the infinite F-set test.

    Passes when every ``c_{l1}`` with ``|l1| <= L`` is strictly PD on its stored
    rows and the tail continues every mode with every degree, so each infinite
    block is strictly PD and ``F = Z``.
    """
    _require_axial(scheme)
    L = scheme.truncation_degree
    per_mode, failing = {}, []
    for l1 in _modes_upto(L):
        _, A = scheme.axial_block(l1)
        ok = _is_strict_pd(A, tol)
        per_mode[str(l1)] = {"lambda_min": block_lambda_min(A), "strict_pd": ok}
        if not ok:
            failing.append(l1)
    tail_ok = _tail_covers_all_rows(scheme)
    ev = {"per_mode": per_mode, "failing_modes": failing, "tail_covers_all": tail_ok,
          "proxy": "finite blocks strictly PD and tail on every mode and degree"}
    status = "pass" if not failing and tail_ok else "indeterminate"
    return Condition("axial_fset", SPD_SUFFICIENT, status, ev)


def _per_mode(value, l1, default):
    if value is None:
        return default
    if isinstance(value, dict):
        return value.get(l1, default)
    return value


def check_scaled_eigen_spd(scheme, scaling=None, eps=DEFAULT_TOL, tol=DEFAULT_TOL):
    """Uniform lower bound ``lambda_min(sqrt(D) A_k sqrt(D)) > eps`` for every leading block.

    ``scaling`` maps ``l1`` to a positive sequence ``d_alpha`` (or is one sequence
    for all modes). The default equilibrates, ``d_alpha = 1/|a_{alpha alpha}|``,
    which turns the tail rows into ones, so the bound extends past truncation
    whenever the tail covers every row of the mode.
    """
    _require_axial(scheme)
    L = scheme.truncation_degree
    per_mode, status = {}, "pass"
    tail_ok = _tail_covers_all_rows(scheme)
    for l1 in _modes_upto(L):
        _, A = scheme.axial_block(l1)
        n = A.shape[0]
        e = float(_per_mode(eps, l1, DEFAULT_TOL))
        if not e > 0:
            raise DomainError("eps must be positive")
        user = _per_mode(scaling, l1, None)
        if user is None:
            diag = np.abs(np.diag(A))
            if np.any(diag == 0):
                per_mode[str(l1)] = {"pass": False, "reason": "zero diagonal entry"}
                status = "fail"
                continue
            dvec = 1.0 / diag
        else:
            dvec = np.asarray(user, dtype=float)[:n]
            if dvec.size < n or np.any(dvec <= 0):
                raise DomainError(f"scaling for mode {l1} must give {n} positive entries")
        S = np.sqrt(dvec)
        B = S[:, None] * A * S[None, :]
        lmins = [block_lambda_min(B[:k, :k]) for k in range(1, n + 1)]
        k_star = int(np.argmin(lmins)) + 1
        bound = lmins[k_star - 1]
        ok = bound > e
        entry = {"min_over_k": bound, "argmin_k": k_star, "eps": e, "pass": ok}
        if ok and user is None:
            entry["beyond_truncation"] = "tail rows equilibrate to 1" if tail_ok else "not covered"
        per_mode[str(l1)] = entry
        if not ok:
            status = "fail"
        elif user is not None or not tail_ok:
            # finite evidence only past the stored rows
            if status == "pass":
                status = "indeterminate"
    ev = {"per_mode": per_mode, "tail_covers_all": tail_ok,
          "modes_beyond_truncation": "equilibrated tail" if tail_ok else "not covered"}
    if not tail_ok and status == "pass":
        status = "indeterminate"
    return Condition("scaled_eigen", SPD_SUFFICIENT, status, ev)


def check_diag_dominance_spd(scheme, sigma=0.5, tol=DEFAULT_TOL):
    """Row dominance ``sum_{b != a} |A~_ab| < sigma |A~_aa|`` for ``A~ = sqrt(N) A sqrt(N)``.

    ``N_alpha`` is the dimension of the harmonic space of the final degree.
    Gershgorin then gives ``lambda_min(A~) >= (1 - sigma) min |A~_aa|``, which
    is recorded per mode.
    """
    _require_axial(scheme)
    L = scheme.truncation_degree
    tail_ok = _tail_covers_all_rows(scheme)
    per_mode, status, witness_row = {}, "pass", None
    for l1 in _modes_upto(L):
        s = float(_per_mode(sigma, l1, 0.5))
        if not 0 < s < 1:
            raise DomainError("sigma must lie in (0, 1)")
        blk = build_block_matrix(scheme, l1, scaled=True)
        if not _is_strict_pd(blk.entries, tol):
            per_mode[str(l1)] = {"pass": False, "reason": "finite block not strictly PD"}
            status = "fail"
            continue
        At = blk.entries
        ok, ratio, worst = dominance_rows(At, s)
        diag = np.abs(np.diag(At))
        entry = {"sigma": s, "max_ratio": float(ratio[worst]), "worst_row": worst,
                 "lambda_min": block_lambda_min(At),
                 "gershgorin_bound": float((1 - s) * diag.min()), "pass": ok}
        per_mode[str(l1)] = entry
        if not ok:
            status = "fail"
            witness_row = witness_row or {"l1": l1, "row": worst,
                                          "tail": list(blk.ordering.table[worst])}
    if not tail_ok:
        # rows past truncation would carry zero diagonal
        status = "fail"
        witness_row = witness_row or {"reason": "rows beyond truncation have zero diagonal",
                                      "degree": L + 1}
    ev = {"per_mode": per_mode, "tail_covers_all": tail_ok}
    if witness_row is not None:
        ev["failing_row"] = witness_row
    return Condition("diag_dominance", SPD_SUFFICIENT, status, ev)


def check_axial_necessary(scheme):
    """Refutes SPD when ``c_0`` vanishes or only finitely many modes are present."""
    _require_axial(scheme)
    tail = scheme.tail
    if 0 not in scheme.stored_modes() and not tail.covers_mode(0):
        wit = ie.witness_c0_zero(scheme)
        return Condition("axial_necessary", NECESSARY, "fail",
                         {"reason": "c_0 is identically zero", "refutes": True}, wit)
    if not (tail.active and tail.support_all):
        wit = ie.witness_finite_longitude_support(scheme)
        return Condition("axial_necessary", NECESSARY, "fail",
                         {"reason": "finitely many longitude modes",
                          "modes": ie._longitude_support(scheme), "refutes": True}, wit)
    return Condition("axial_necessary", NECESSARY, "pass",
                     {"reason": "c_0 nonzero and infinitely many modes"})


# ---------------------------------------------------------------------------
# Convolutional schemes


def _degree_scan(scheme, tol):
    d, L = scheme.ambient_dim, scheme.truncation_degree
    blocks = {}
    for j in range(L + 1):
        D = scheme.degree_block(j)
        blocks[j] = {
            "lambda_min": block_lambda_min(D),
            "nonzero": bool(np.any(D != 0)),
            "psd": _is_psd(D, tol),
            "strict_pd": _is_strict_pd(D, tol),
        }
    return blocks


def _dyn_failure(scheme, blocks, name):
    j = min((j for j, b in blocks.items() if not b["psd"]), key=lambda j: blocks[j]["lambda_min"])
    idx = sb.degree_indices(scheme.ambient_dim, j)
    pos = [scheme._position[i] for i in idx]
    ev = {"failing_degree": j, "lambda_min": blocks[j]["lambda_min"], "refutes": True,
          "reason": "a degree block with a negative eigenvalue"}
    wit = _negative_direction_witness(scheme, scheme.degree_block(j), pos)
    return Condition(name, PD_SUFFICIENT, "fail", ev, wit)


def check_convolutional(scheme, tol=DEFAULT_TOL):
    """PD iff all ``D_j`` are PSD; SPD when ``F`` has infinitely many even and odd degrees.

    Refutes SPD (with an antipodal witness) when the nonzero degrees miss a
    parity class or hold only finitely many of one.
    """
    if not scheme.is_convolutional():
        raise NotApplicableError("scheme is not convolutional")
    if scheme.ambient_dim < 3:
        raise NotApplicableError("use check_circle on S^1")
    _require_hermitian(scheme)
    return _convolutional_conditions(scheme, tol)


def _convolutional_conditions(scheme, tol):
    tail = scheme.tail
    blocks = _degree_scan(scheme, tol)
    conds = []
    if all(b["psd"] for b in blocks.values()):
        conds.append(Condition("dyn_pd", PD_SUFFICIENT, "pass",
                               {"blocks": {str(j): b for j, b in blocks.items()}}))
    else:
        conds.append(_dyn_failure(scheme, blocks, "dyn_pd"))
        return conds

    F = [j for j, b in blocks.items() if b["strict_pd"]]
    J = [j for j, b in blocks.items() if b["nonzero"]]
    even_F = tail.active and tail.support_all and tail.parity in ("even", "all")
    odd_F = tail.active and tail.support_all and tail.parity in ("odd", "all")
    ev = {"F_stored": F, "J_stored": J, "F_even_infinite": even_F, "F_odd_infinite": odd_F}
    status = "pass" if even_F and odd_F else "indeterminate"
    conds.append(Condition("even_odd_sufficient", SPD_SUFFICIENT, status, ev))

    even_J = tail.active and tail.parity in ("even", "all")
    odd_J = tail.active and tail.parity in ("odd", "all")
    if scheme.ambient_dim >= 3 and not (even_J and odd_J):
        wit = ie.witness_even_odd(scheme)
        conds.append(Condition(
            "even_odd_necessary", NECESSARY, "fail",
            {"J_stored": J, "J_even_infinite": even_J, "J_odd_infinite": odd_J,
             "reason": wit.description, "refutes": True}, wit))
    elif scheme.ambient_dim >= 3:
        conds.append(Condition("even_odd_necessary", NECESSARY, "pass",
                               {"J_even_infinite": True, "J_odd_infinite": True}))
    return conds


def _mode_set(scheme):
    """Two-sided circle modes with a nonzero stored row."""
    return set(scheme.stored_modes())


def _tail_hits(tail, L, a, b):
    """Whether the tail contains a mode ``m = a mod b`` (``|m| > L``)."""
    if not tail.active:
        return False
    if tail.support_all:
        if tail.parity == "all":
            return True
        want = 0 if tail.parity == "even" else 1
        # modes of one parity; a + bZ meets them unless b even and a has the other parity
        return not (b % 2 == 0 and a % 2 != want)
    return any((m - a) % b == 0 and abs(m) > L and tail.parity_ok(abs(m))
               for m in tail.l1_support)


def check_circle(scheme, tol=DEFAULT_TOL, progression_cap=16):
    """Circle schemes: PD via nonnegative blocks, SPD via arithmetic progressions.

    A mode set missing some ``a + bZ`` is refuted by ``b`` equispaced points.
    SPD is certified when ``F`` is cofinite (tail with full support and parity).
    """
    if scheme.ambient_dim != 2:
        raise NotApplicableError("check_circle is for d = 2")
    if not scheme.is_convolutional():
        raise NotApplicableError("circle scheme is not convolutional")
    _require_hermitian(scheme)
    L = scheme.truncation_degree
    tail = scheme.tail
    blocks = _degree_scan(scheme, tol)
    conds = []
    if all(b["psd"] for b in blocks.values()):
        conds.append(Condition("circle_pd", PD_SUFFICIENT, "pass",
                               {"blocks": {str(j): b for j, b in blocks.items()}}))
    else:
        conds.append(_dyn_failure(scheme, blocks, "circle_pd"))
        return conds

    modes = _mode_set(scheme)
    finite = not (tail.active and tail.support_all)
    if finite and tail.active:
        modes |= {m for m in tail.l1_support if abs(m) > L and tail.parity_ok(abs(m))}
    candidates = [(a, b) for b in range(1, progression_cap + 1) for a in range(b)]
    if finite:
        top = max((abs(m) for m in modes), default=0)
        candidates.append((top + 1, 2 * top + 2))
    missed = None
    for a, b in candidates:
        if any((m - a) % b == 0 for m in modes):
            continue
        if not finite and _tail_hits(tail, L, a, b):
            continue
        missed = (a, b)
        break

    F = [j for j, blk in blocks.items() if blk["strict_pd"]]
    F_missed = [[a, b] for b in range(1, progression_cap + 1) for a in range(b)
                if not any(j % b == a for j in F)]
    ev = {"F_stored": F, "progressions_missed_by_F_within_truncation": F_missed,
          "progression_cap": progression_cap, "modes_stored": sorted(_mode_set(scheme))}
    if missed is not None:
        a, b = missed
        wit = ie.witness_progression(scheme, a, b)
        ev.update({"missed_progression": [a, b], "refutes": True})
        conds.append(Condition("circle_progressions", NECESSARY, "fail", ev, wit))
        return conds
    cofinite = tail.active and tail.support_all and tail.parity == "all"
    ev["F_cofinite"] = cofinite
    conds.append(Condition("circle_progressions", SPD_SUFFICIENT,
                           "pass" if cofinite else "indeterminate", ev))
    return conds


# ---------------------------------------------------------------------------
# Combined verdict


def certify(scheme, tol=DEFAULT_TOL, sigma=0.5, progression_cap=16, scaling=None,
            eps=DEFAULT_TOL):
    """Run every applicable check and combine them.

    Any refutation gives ``NOT_SPD``; otherwise a passing SPD-sufficient check
    (with PD evidence) gives ``SPD_CERTIFIED``, PD evidence alone gives
    ``PD_CERTIFIED`` and anything else ``INDETERMINATE``.
    """
    _require_hermitian(scheme)
    if scheme.tail.kind == "power":
        scheme.tail.check_convergent(scheme.ambient_dim)
    d = scheme.ambient_dim
    conds = []
    if d == 2 and scheme.is_convolutional():
        conds.extend(check_circle(scheme, tol, progression_cap))
    elif d >= 3 and (scheme.is_convolutional() or scheme.is_axial()):
        # diagonal schemes are both; each analysis is valid on its own
        if scheme.is_convolutional():
            conds.extend(_convolutional_conditions(scheme, tol))
        if scheme.is_axial():
            pd = check_axial_pd(scheme, tol)
            conds.append(pd)
            conds.append(check_axial_necessary(scheme))
            if pd.passed:
                conds.append(check_axial_fset(scheme, tol))
                conds.append(check_scaled_eigen_spd(scheme, scaling, eps, tol))
                conds.append(check_diag_dominance_spd(scheme, sigma, tol))
    else:
        conds.append(check_coefficient_psd(scheme, tol))

    params = {"tol": tol, "sigma": sigma, "progression_cap": progression_cap, "eps": eps}
    structure = check_structure(scheme).to_dict()
    refuting = [c for c in conds if c.refutes]
    if refuting:
        return Certificate(Verdict.NOT_SPD, conds, params, structure, refuting[0].witness)
    pd = any(c.passed for c in conds if c.role == PD_SUFFICIENT)
    spd = any(c.passed for c in conds if c.role == SPD_SUFFICIENT)
    if pd and spd:
        verdict = Verdict.SPD_CERTIFIED
    elif pd:
        verdict = Verdict.PD_CERTIFIED
    else:
        verdict = Verdict.INDETERMINATE
    return Certificate(verdict, conds, params, structure)
