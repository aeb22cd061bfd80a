import copy
import math
import pickle
import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sphkern import sphere_basis as sb
from sphkern.exceptions import (
    DivergentTailError,
    DomainError,
    InsufficientQuadratureError,
    NotApplicableError,
)
from sphkern.kernel_model import (
    CoefficientScheme as CS,
    NO_TAIL,
    TailDescriptor as TD,
    apply_convolution_multiplier,
    check_structure,
    diagonalize_convolutional,
    eval_kernel,
    index_of,
    kernel_matrix,
    label_of,
    recover_all,
    recover_coefficient,
    summability_bound,
)

HI = sb.HarmonicIndex


def random_hermitian_general(d, L, rng, density=0.4):
    basis = sb.basis_indices(d, L)
    n = len(basis)
    M = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    M = M * (rng.random((n, n)) < density)
    M = M + M.conj().T
    entries = {(basis[r], basis[c]): M[r, c] for r in range(n) for c in range(n) if M[r, c] != 0}
    return CS(d, L, "general", entries), M


def random_axial(d, L, rng, hermitian=True, reversible=False, real=False):
    maps = {}
    for l1 in sorted(range(-L, L + 1), key=lambda m: (abs(m), m < 0)):
        n = len(sb.AlphaOrdering(d, l1, L))
        if reversible and l1 < 0:
            maps[l1] = maps[-l1]
            continue
        A = rng.normal(size=(n, n)) + (0 if real else 1j * rng.normal(size=(n, n)))
        maps[l1] = A + A.conj().T if hermitian else A
    return CS.axial(d, L, maps)


# -- index helpers --------------------------------------------------------------


def test_index_of_and_label_of_roundtrip():
    for d in (2, 3, 4):
        for j in range(4):
            for k in range(1, sb.dim_harmonic_space(j, d) + 1):
                assert label_of(d, index_of(d, j, k)) == (j, k)
    with pytest.raises(DomainError):
        index_of(3, 1, 4)


def test_scheme_validation():
    with pytest.raises(DomainError):
        CS.general(3, 1, {(2, 1, 2, 1): 1.0})
    with pytest.raises(DomainError):
        CS.convolutional(3, 2, {1: np.eye(2)})
    with pytest.raises(DomainError):
        CS.general(3, 1, {(1, 1, 1, 2): 1.0}, hermitian=True)
    with pytest.raises(DomainError):
        CS.isotropic(3, 1, [1j])
    with pytest.raises(DomainError):
        CS(3, 2, "axial", {(HI(0, (1,)), HI(1, (1,))): 1.0})


def test_scheme_is_immutable_and_copyable():
    s = CS.isotropic(3, 2, [1, 0.5, 0.25], tail=TD.power(2, 0.1))
    with pytest.raises(TypeError):
        s.entries[(HI(0, (0,)), HI(0, (0,)))] = 3
    t = pickle.loads(pickle.dumps(s))
    assert dict(t.entries) == dict(s.entries) and t.tail == s.tail
    assert copy.deepcopy(s) is s


# -- tails -----------------------------------------------------------------------


def test_tail_descriptor_rules():
    with pytest.raises(DomainError):
        TD.power(1.0, 1.0)
    with pytest.raises(DomainError):
        TD.power(2.0, 0.0)
    with pytest.raises(DomainError):
        TD.power(2.0, 1.0, parity="sometimes")
    t = TD.power(2, 1.0, parity="odd", l1_support=[0, 1])
    assert t.parity_ok(3) and not t.parity_ok(4)
    assert t.weight(3, 3) == pytest.approx(4.0 ** -4)
    assert t.covers(HI(1, (5,)), 4) and not t.covers(HI(2, (5,)), 4)
    assert not t.covers(HI(1, (3,)), 4)
    assert not NO_TAIL.active


def test_tail_remainder_bound_dominates_partial_sums():
    d, L = 3, 4
    t = TD.power(1.5, 2.0)
    bound = t.remainder_bound(d, L)
    sigma = sb.surface_area(d)
    partial = sum(
        t.weight(j, d) * sb.dim_harmonic_space(j, d) / sigma for j in range(L + 1, 200000)
    )
    assert partial <= bound
    assert bound < 3 * partial


def test_divergent_tail_rejected():
    with pytest.raises(DivergentTailError):
        TD.power(1.0, 1.0)
    with pytest.raises(DivergentTailError):
        TD(kind="power", s=0.5, amplitude=1.0)
    TD.power(1.0 + 1e-12, 1.0).check_convergent(3)


# -- evaluation ------------------------------------------------------------------


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_constant_kernel(d, rng):
    s = CS.isotropic(d, 0, [1.0])
    X = sb.random_points(d, 8, rng)
    np.testing.assert_allclose(kernel_matrix(s, X), 1 / sb.surface_area(d), atol=1e-14)


def test_eval_kernel_matches_matrix_and_checks_dimension(rng):
    s = CS.isotropic(3, 2, [1, 2, 3])
    X = sb.random_points(3, 2, rng)
    assert eval_kernel(s, X[0], X[1]) == pytest.approx(kernel_matrix(s, X)[0, 1])
    with pytest.raises(DomainError):
        eval_kernel(s, sb.random_points(4, 1, rng)[0], X[1])


def test_isotropic_matches_legendre_series(rng):
    d, c = 4, [0.5, 1.5, 0.3, 0.2]
    s = CS.isotropic(d, 3, c)
    X = sb.random_points(d, 6, rng)
    C = sb.polar_to_cartesian(X)
    t = np.clip(C @ C.T, -1, 1)
    ref = sum(
        cj * sb.dim_harmonic_space(j, d) / sb.surface_area(d) * sb.legendre_poly(j, d, t)
        for j, cj in enumerate(c)
    )
    np.testing.assert_allclose(kernel_matrix(s, X), ref, atol=1e-12)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_tail_series_matches_direct_sum(d, rng):
    tail = TD.power(8.0 / (d - 1), 0.7, parity="even")
    s = CS.isotropic(d, 1, [1.0, 0.5], tail=tail)
    X = sb.random_points(d, 5, rng)
    C = sb.polar_to_cartesian(X)
    t = np.clip(C @ C.T, -1, 1)
    ref = sum(
        cj * sb.dim_harmonic_space(j, d) / sb.surface_area(d) * sb.legendre_poly(j, d, t)
        for j, cj in enumerate([1.0, 0.5])
    )
    for j in range(2, 400):
        if j % 2 == 0:
            ref = ref + tail.weight(j, d) * sb.dim_harmonic_space(j, d) / sb.surface_area(d) * (
                sb.legendre_poly(j, d, t)
            )
    np.testing.assert_allclose(kernel_matrix(s, X), ref, atol=5e-11)


def test_finite_support_tail_matches_explicit_modes(rng):
    d, L = 3, 2
    tail = TD.power(4.0, 1.0, l1_support=[0])
    s = CS.axial(d, L, {0: np.eye(3)}, tail=tail)
    X = sb.random_points(d, 4, rng)
    idx = [i for i in sb.basis_indices(d, 150) if i.l1 == 0]
    Y = sb.harmonics(d, idx, X)
    w = np.array([1.0 if i.degree <= L else tail.weight(i.degree, d) for i in idx])
    ref = (Y * w) @ Y.conj().T
    np.testing.assert_allclose(kernel_matrix(s, X), ref, atol=1e-9)


def test_hermitian_kernel_symmetry(rng):
    s, _ = random_hermitian_general(3, 3, rng)
    X = sb.random_points(3, 10, rng)
    K = kernel_matrix(s, X)
    np.testing.assert_allclose(K, K.conj().T, atol=1e-12)


def test_parity_invariant_kernel(rng):
    d, L = 3, 3
    basis = sb.basis_indices(d, L)
    entries = {}
    for a in basis:
        for b in basis:
            if (a.degree + b.degree) % 2 == 0 and rng.random() < 0.3:
                entries[(a, b)] = complex(rng.normal(), rng.normal())
    s = CS(d, L, "general", entries)
    assert check_structure(s).parity_invariant
    X = sb.random_points(d, 10, rng)
    anti = sb.cartesian_to_polar(-sb.polar_to_cartesian(X))
    np.testing.assert_allclose(kernel_matrix(s, anti), kernel_matrix(s, X), atol=1e-10)


def test_axial_factored_form_matches_dense(rng):
    s = random_axial(4, 3, rng)
    X = sb.random_points(4, 7, rng)
    Y = sb.harmonics(4, s.basis, X)
    dense = Y @ s.matrix @ Y.conj().T
    np.testing.assert_allclose(kernel_matrix(s, X), dense, atol=1e-11)


def test_axial_rotation_invariance(rng):
    s = random_axial(3, 4, rng, hermitian=False)
    X = sb.random_points(3, 20, rng)
    Z = sb.random_points(3, 20, rng)
    base = np.array([eval_kernel(s, x, z) for x, z in zip(X, Z)])
    for alpha in rng.uniform(0, 2 * np.pi, 20):
        Xr, Zr = X.copy(), Z.copy()
        Xr[:, 0] = (Xr[:, 0] + alpha) % (2 * np.pi)
        Zr[:, 0] = (Zr[:, 0] + alpha) % (2 * np.pi)
        rot = np.array([eval_kernel(s, x, z) for x, z in zip(Xr, Zr)])
        np.testing.assert_allclose(rot, base, atol=1e-10)


def test_longitudinal_independence(rng):
    n = len(sb.AlphaOrdering(3, 0, 3))
    A = rng.normal(size=(n, n))
    s = CS.axial(3, 3, {0: A + A.T})
    assert check_structure(s).longitudinal_independent
    X = sb.random_points(3, 10, rng)
    Z = sb.random_points(3, 10, rng)
    K = kernel_matrix(s, X, Z)
    X[:, 0] = rng.uniform(0, 2 * np.pi, 10)
    Z[:, 0] = rng.uniform(0, 2 * np.pi, 10)
    np.testing.assert_allclose(kernel_matrix(s, X, Z), K, atol=1e-12)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_real_valued_axial_kernel(d, rng):
    s = random_axial(d, 3, rng, reversible=True, real=True)
    rep = check_structure(s)
    assert rep.real_valued and rep.longitudinal_reversible
    X = sb.random_points(d, 12, rng)
    Z = sb.random_points(d, 12, rng)
    assert np.abs(kernel_matrix(s, X, Z).imag).max() < 1e-12


@pytest.mark.parametrize("d", [2, 3])
def test_real_valued_flag_agrees_with_values(d, rng):
    # a general real-valued scheme built from a real kernel's coefficients
    L = 2
    q = sb.build_quadrature(d, 3 * L)
    X = sb.random_points(d, 3, rng)
    base = CS.isotropic(d, L, [1, 0.5, 0.2])
    C = recover_all(lambda A, B: kernel_matrix(base, A, X) @ kernel_matrix(base, X, B), L, q)
    basis = sb.basis_indices(d, L)
    entries = {(basis[r], basis[c]): C[r, c] for r in range(len(basis)) for c in range(len(basis))}
    entries = {k: complex(round(v.real, 12), round(v.imag, 12)) for k, v in entries.items()}
    s = CS(d, L, "general", entries)
    Z = sb.random_points(d, 6, rng)
    assert np.abs(kernel_matrix(s, Z).imag).max() < 1e-9
    # exact equality may be broken by rounding; the flag must at least not contradict values
    bad = dict(entries)
    k0 = next(k for k in bad if k[0].l1 != 0)
    bad[k0] = bad[k0] + 1j
    assert not check_structure(CS(d, L, "general", bad)).real_valued


# -- structure -------------------------------------------------------------------


def test_structure_single_diagonal_entry():
    s = CS.general(3, 1, {(0, 1, 0, 1): 1.0})
    assert all(v for v in check_structure(s).flags.values())


def test_structure_hermitian_but_not_parity():
    s = CS.general(3, 2, {(1, 1, 2, 1): 1j, (2, 1, 1, 1): -1j})
    rep = check_structure(s)
    assert rep.hermitian
    assert not rep.parity_invariant
    a, b = (index_of(3, 1, 1), index_of(3, 2, 1))
    assert rep.witnesses["parity_invariant"] in (f"a[{a},{b}]", f"a[{b},{a}]")


def test_structure_non_reversible_axial(rng):
    s = CS.axial(3, 2, {1: np.diag([1.0, 2.0]), -1: np.diag([1.0, 3.0])})
    rep = check_structure(s)
    assert rep.axially_symmetric
    assert not rep.longitudinal_reversible
    assert rep.witnesses["longitudinal_reversible"]


def test_every_false_flag_has_witness(rng):
    for _ in range(10):
        d, L = 3, 2
        basis = sb.basis_indices(d, L)
        entries = {
            (basis[rng.integers(len(basis))], basis[rng.integers(len(basis))]): complex(
                rng.normal(), rng.normal()
            )
            for _ in range(4)
        }
        rep = check_structure(CS(d, L, "general", entries))
        for name, value in rep.flags.items():
            if value is False:
                assert rep.witnesses.get(name)


def test_axial_with_equal_final_degrees_is_convolutional():
    s = CS.axial(3, 2, {0: np.eye(3), 1: np.diag([2.0, 1.0])})
    assert check_structure(s).convolutional
    s2 = CS.axial(3, 2, {0: np.ones((3, 3))})
    assert not check_structure(s2).convolutional


def test_circle_axial_is_convolutional():
    s = CS.axial(2, 3, {1: [[2.0]], -2: [[1.0]]})
    assert check_structure(s).convolutional


# -- summability -------------------------------------------------------------------


def test_summability_examples():
    assert summability_bound(CS.general(3, 0, {})) == 0
    s = CS.isotropic(3, 0, [1.0])
    assert summability_bound(s) == pytest.approx(1 / (4 * math.pi), rel=1e-14)


def test_summability_divergent_tail():
    with pytest.raises(DivergentTailError):
        CS.isotropic(3, 1, [1.0], tail=TD.power(1.0, 1.0))


def test_kernel_bounded_by_summability(rng):
    s, _ = random_hermitian_general(3, 3, rng)
    s = CS(3, 3, "general", dict(s.entries), TD.power(3.0, 0.5))
    bound = summability_bound(s)
    X = sb.random_points(3, 40, rng)
    Z = sb.random_points(3, 25, rng)
    assert np.abs(kernel_matrix(s, X, Z)).max() <= bound


# -- recovery -----------------------------------------------------------------------


def test_recover_example_both_conventions():
    s = CS.general(3, 1, {(1, 1, 1, 1): 2 + 1j})
    q = sb.build_quadrature(3, 3)
    for conv in ("orthonormal", "literal"):
        assert recover_coefficient(s, 1, 1, 1, 1, q, convention=conv) == pytest.approx(
            2 + 1j, abs=1e-8
        )
    assert abs(recover_coefficient(s, 1, 2, 1, 1, q)) < 1e-8


def test_recover_conventions_differ_off_axis():
    # a_{A,B} with l1(A) = 1 (label k=2 at degree 1 in d=3)
    A, B = index_of(3, 1, 2), index_of(3, 1, 3)
    assert A.l1 == 1 and B.l1 == -1
    s = CS.general(3, 1, {(1, 2, 1, 3): 2 + 1j})
    q = sb.build_quadrature(3, 3)
    assert recover_coefficient(s, 1, 2, 1, 3, q) == pytest.approx(2 + 1j, abs=1e-8)
    lit = recover_coefficient(s, 1, 3, 1, 2, q, convention="literal")
    expected = A.conj_sign(3) * B.conj_sign(3) * (2 + 1j)
    assert lit == pytest.approx(expected, abs=1e-8)
    assert abs(recover_coefficient(s, 1, 2, 1, 3, q, convention="literal")) < 1e-8


def test_recover_isotropic():
    c = [1.0, 0.5, 0.25]
    s = CS.isotropic(3, 2, c)
    q = sb.build_quadrature(3, 6)
    for j, cj in enumerate(c):
        for k in range(1, 2 * j + 2):
            assert recover_coefficient(s, j, k, j, k, q).real == pytest.approx(cj, abs=1e-8)


def test_recover_refusals():
    s = CS.isotropic(3, 2, [1, 1, 1])
    with pytest.raises(InsufficientQuadratureError):
        recover_coefficient(s, 2, 1, 2, 1, sb.build_quadrature(3, 4))
    with pytest.raises(InsufficientQuadratureError):
        recover_coefficient(
            CS.isotropic(3, 1, [1, 1], tail=TD.power(2, 1)), 0, 1, 0, 1, sb.build_quadrature(3, 9)
        )
    with pytest.raises(InsufficientQuadratureError):
        recover_coefficient(lambda X, Z: np.zeros((len(X), len(Z))), 0, 1, 0, 1,
                            sb.build_quadrature(3, 4))
    with pytest.raises(DomainError):
        recover_coefficient(s, 0, 1, 0, 1, sb.build_quadrature(3, 4), convention="other")


@pytest.mark.parametrize("d,L", [(2, 4), (3, 3), (4, 2)])
def test_recovery_roundtrip_random_general(d, L, rng):
    s, M = random_hermitian_general(d, L, rng)
    q = sb.build_quadrature(d, 3 * L)
    R = recover_all(s, L, q)
    np.testing.assert_allclose(R, M, atol=1e-8)


@given(st.data())
def test_recovery_roundtrip_single_entry(data):
    L = data.draw(st.integers(0, 3))
    j = data.draw(st.integers(0, L))
    jp = data.draw(st.integers(0, L))
    k = data.draw(st.integers(1, 2 * j + 1))
    kp = data.draw(st.integers(1, 2 * jp + 1))
    v = complex(data.draw(st.floats(-5, 5)), data.draw(st.floats(-5, 5)))
    s = CS.general(3, L, {(j, k, jp, kp): v})
    q = sb.build_quadrature(3, j + jp + L)
    assert recover_coefficient(s, j, k, jp, kp, q) == pytest.approx(v, abs=1e-8)


# -- convolution operator --------------------------------------------------------


def test_multiplier_identity_and_selection():
    d, L = 3, 2
    ones = CS.convolutional_diagonal(
        d, L, {(j, k): 1.0 for j in range(L + 1) for k in range(1, 2 * j + 2)}
    )
    f = {i: complex(n + 1, -n) for n, i in enumerate(sb.basis_indices(d, L))}
    assert apply_convolution_multiplier(ones, f) == f
    threes = CS.convolutional_diagonal(d, L, {(1, k): 3.0 for k in range(1, 4)})
    one = HI(0, (1,))
    g = {i: (1.0 if i == one else 0.0) for i in sb.basis_indices(d, L)}
    out = apply_convolution_multiplier(threes, g)
    assert out[one] == 3.0
    assert all(v == 0 for i, v in out.items() if i != one)


def test_multiplier_refuses_non_diagonal():
    s = CS.convolutional(3, 1, {1: np.ones((3, 3))})
    with pytest.raises(NotApplicableError):
        apply_convolution_multiplier(s, {})


@pytest.mark.parametrize("d,L", [(2, 4), (3, 4), (4, 3)])
def test_multiplier_matches_quadrature(d, L, rng):
    basis = sb.basis_indices(d, L)
    vals = {label_of(d, i): float(rng.uniform(0.1, 2)) for i in basis}
    s = CS.convolutional_diagonal(d, L, vals)
    f = {i: complex(rng.normal(), rng.normal()) for i in basis}
    q = sb.build_quadrature(d, 2 * L + 1)
    Yq = sb.harmonics(d, basis, q.polar)
    fq = Yq @ np.array([f[i] for i in basis])
    Tf = kernel_matrix(s, q.polar) @ (q.weights * fq)
    coeffs = (Yq * q.weights[:, None]).conj().T @ Tf
    expected = apply_convolution_multiplier(s, f)
    np.testing.assert_allclose(coeffs, [expected[i] for i in basis], atol=1e-7)


def test_diagonalize_convolutional(rng):
    d, L = 3, 2
    blocks = {}
    for j in range(L + 1):
        n = 2 * j + 1
        A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        blocks[j] = A @ A.conj().T
    s = CS.convolutional(d, L, blocks)
    out = diagonalize_convolutional(s)
    for j, (w, V) in out.items():
        assert np.all(np.diff(w) <= 0)
        np.testing.assert_allclose(V @ np.diag(w) @ V.conj().T, blocks[j], atol=1e-10)
        for c in range(V.shape[1]):
            first = V[np.flatnonzero(np.abs(V[:, c]) > 1e-14)[0], c]
            assert abs(first.imag) < 1e-14 and first.real > 0
    with pytest.raises(NotApplicableError):
        diagonalize_convolutional(CS.general(3, 1, {(0, 1, 1, 1): 1.0}))


# -- Parseval and concurrency ------------------------------------------------------


@pytest.mark.parametrize("d", [2, 3, 4])
def test_parseval(d, rng):
    basis = sb.basis_indices(d, 4)
    c = rng.normal(size=len(basis)) + 1j * rng.normal(size=len(basis))
    q = sb.build_quadrature(d, 8)
    f = sb.harmonics(d, basis, q.polar) @ c
    assert q.integrate(np.abs(f) ** 2) == pytest.approx(np.sum(np.abs(c) ** 2), abs=1e-8)


def test_concurrent_evaluation(rng):
    s = CS.isotropic(3, 3, [1, 2, 3, 4], tail=TD.power(4, 1))
    X = sb.random_points(3, 15, rng)
    ref = kernel_matrix(s, X)
    out = [None] * 6

    def work(i):
        out[i] = kernel_matrix(s, X)

    threads = [threading.Thread(target=work, args=(i,)) for i in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for K in out:
        np.testing.assert_array_equal(K, ref)
