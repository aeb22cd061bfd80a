import math
import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import eval_chebyu, eval_legendre, gamma, sph_harm_y

from sphkern import sphere_basis as sb
from sphkern.exceptions import DomainError


# -- dimensions and areas ---------------------------------------------------


@pytest.mark.parametrize("j,d,expected", [(0, 5, 1), (2, 3, 5), (4, 2, 2)])
def test_dim_harmonic_space_examples(j, d, expected):
    assert sb.dim_harmonic_space(j, d) == expected


def test_dim_harmonic_space_closed_forms():
    # N_{j,3} = 2j+1, N_{j,4} = (j+1)^2
    for j in range(40):
        assert sb.dim_harmonic_space(j, 3) == 2 * j + 1
        assert sb.dim_harmonic_space(j, 4) == (j + 1) ** 2


def test_dim_harmonic_space_matches_enumeration():
    for d in range(2, 7):
        for j in range(7):
            assert sb.dim_harmonic_space(j, d) == len(sb.degree_indices(d, j))


def test_dim_harmonic_space_exact_for_huge_degree():
    j, d = 10**6, 6
    num = (2 * j + d - 2) * math.factorial(j + d - 3) if j < 50 else None
    # (2j+d-2)(j+d-3)!/(j!(d-2)!) = (2j+4)(j+1)(j+2)(j+3)/24 for d=6
    assert num is None
    assert sb.dim_harmonic_space(j, d) == (2 * j + 4) * (j + 1) * (j + 2) * (j + 3) // 24
    assert isinstance(sb.dim_harmonic_space(j, d), int)


@pytest.mark.parametrize("args", [(-1, 3), (2, 1), (1.5, 3)])
def test_dim_harmonic_space_domain(args):
    with pytest.raises(DomainError):
        sb.dim_harmonic_space(*args)


@pytest.mark.parametrize("d,expected", [(2, 2 * math.pi), (3, 4 * math.pi), (4, 2 * math.pi**2)])
def test_surface_area(d, expected):
    assert sb.surface_area(d) == pytest.approx(expected, rel=1e-14)


def test_surface_area_domain():
    with pytest.raises(DomainError):
        sb.surface_area(1)


# -- Legendre polynomials in d dimensions --------------------------------------


def test_legendre_examples():
    assert sb.legendre_poly(5, 3, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert sb.legendre_poly(2, 2, 0.5) == pytest.approx(-0.5, abs=1e-14)
    assert sb.legendre_poly(2, 3, 0.0) == pytest.approx(-0.5, abs=1e-15)


def test_legendre_matches_classical_families():
    t = np.linspace(-1, 1, 41)
    for j in range(15):
        np.testing.assert_allclose(sb.legendre_poly(j, 3, t), eval_legendre(j, t), atol=1e-13)
        np.testing.assert_allclose(sb.legendre_poly(j, 2, t), np.cos(j * np.arccos(t)), atol=1e-12)
        np.testing.assert_allclose(sb.legendre_poly(j, 4, t), eval_chebyu(j, t) / (j + 1), atol=1e-13)


def test_legendre_normalized_at_one():
    for d in range(2, 8):
        for j in range(12):
            assert sb.legendre_poly(j, d, 1.0) == pytest.approx(1.0, abs=1e-13)


def test_legendre_domain():
    with pytest.raises(DomainError):
        sb.legendre_poly(2, 3, 1.01)
    sb.legendre_poly(2, 3, 1.0 + 1e-13)


# -- coordinates ------------------------------------------------------------------


def test_polar_to_cartesian_convention():
    # d=4: x1 = cos th1 sin th2 sin th3, x2 = sin th1 sin th2 sin th3,
    # x3 = cos th2 sin th3, x4 = cos th3
    th = np.array([0.3, 1.1, 0.7])
    x = sb.polar_to_cartesian(th[None, :])[0]
    s2, s3 = math.sin(1.1), math.sin(0.7)
    expected = [math.cos(0.3) * s2 * s3, math.sin(0.3) * s2 * s3, math.cos(1.1) * s3, math.cos(0.7)]
    np.testing.assert_allclose(x, expected, atol=1e-15)


@given(
    d=st.integers(2, 6),
    data=st.data(),
)
def test_polar_roundtrip(d, data):
    th1 = data.draw(st.floats(0.0, 2 * math.pi - 1e-6))
    rest = [data.draw(st.floats(1e-3, math.pi - 1e-3)) for _ in range(d - 2)]
    polar = np.array([[th1] + rest])
    x = sb.polar_to_cartesian(polar)
    assert abs(np.linalg.norm(x) - 1) < 1e-12
    back = sb.cartesian_to_polar(x)
    np.testing.assert_allclose(back, polar, atol=1e-10)


def test_cartesian_singularity_sets_angles_to_zero():
    pole = np.array([[0.0, 0.0, 1.0]])
    np.testing.assert_array_equal(sb.cartesian_to_polar(pole), [[0.0, 0.0]])
    south = np.array([[0.0, 0.0, 0.0, -1.0]])
    np.testing.assert_allclose(sb.cartesian_to_polar(south), [[0.0, 0.0, math.pi]])


def test_sphere_point_antipode_and_validation():
    p = sb.SpherePoint.from_polar([0.4, 1.2])
    q = p.antipode()
    np.testing.assert_allclose(q.cartesian, -np.asarray(p.cartesian), atol=1e-15)
    with pytest.raises(DomainError):
        sb.SpherePoint.from_cartesian([0.0, 0.0, 0.0])


# -- index sets -------------------------------------------------------------------


def test_enumerate_lambda_examples():
    assert sb.enumerate_lambda(3, 1, 3) == [(1,), (2,), (3,)]
    assert sb.enumerate_lambda(4, 0, 1) == [(0, 0), (0, 1), (1, 1)]
    assert sb.enumerate_lambda(2, 3, 5) == [()]
    assert sb.enumerate_lambda(3, 4, 3) == []


def test_alpha_ordering_invariants():
    for d in (3, 4, 5):
        for l1 in (-2, 0, 1):
            order = sb.AlphaOrdering(d, l1, 5)
            degs = [order.final_degree(a) for a in range(len(order))]
            assert degs == sorted(degs)
            brute = {
                t for t in __import__("itertools").product(range(6), repeat=d - 2)
                if all(x <= y for x, y in zip((abs(l1),) + t, t))
            }
            assert set(order.table) == brute
            assert len(order) == len(brute)


def test_harmonic_index_validation():
    sb.HarmonicIndex(-2, (2, 3)).validate(4)
    with pytest.raises(DomainError):
        sb.HarmonicIndex(3, (2,)).validate(3)
    with pytest.raises(DomainError):
        sb.HarmonicIndex(0, (1,)).validate(4)


def test_degree_indices_order():
    labels = [(i.l1, i.tail) for i in sb.degree_indices(3, 2)]
    assert labels == [(0, (2,)), (1, (2,)), (-1, (2,)), (2, (2,)), (-2, (2,))]


# -- harmonics ----------------------------------------------------------------------


def test_sph_harm_examples():
    p = sb.SpherePoint.from_polar([0.7, 1.3])
    assert sb.sph_harm(sb.HarmonicIndex(0, (0,)), p) == pytest.approx(1 / (2 * math.sqrt(math.pi)))
    for j in (0, 1, -3):
        val = sb.sph_harm(sb.HarmonicIndex(j, ()), sb.SpherePoint.from_polar([0.9]))
        assert val == pytest.approx(np.exp(1j * j * 0.9) / math.sqrt(2 * math.pi))
    north = sb.SpherePoint.from_polar([0.4, 0.0])
    assert abs(sb.sph_harm(sb.HarmonicIndex(1, (2,)), north)) < 1e-15
    assert abs(sb.sph_harm(sb.HarmonicIndex(-2, (3,)), north)) < 1e-15


def test_sph_harm_rejects_bad_index():
    with pytest.raises(DomainError):
        sb.sph_harm(sb.HarmonicIndex(2, (1,)), sb.SpherePoint.from_polar([0.1, 0.2]))


def test_two_sphere_formula_examples():
    assert sb.sph_harm_2sphere(0, 0, 0.3, 1.0) == pytest.approx(1 / (2 * math.sqrt(math.pi)))
    assert abs(sb.sph_harm_2sphere(1, 0, math.pi / 2, 0.4)) < 1e-16
    mods = [abs(sb.sph_harm_2sphere(1, 1, 0.8, phi)) for phi in np.linspace(0, 6, 7)]
    np.testing.assert_allclose(mods, mods[0], rtol=1e-14)
    with pytest.raises(DomainError):
        sb.sph_harm_2sphere(1, 2, 0.1, 0.1)


def test_two_sphere_formula_matches_scipy_and_product_basis(rng):
    theta = rng.uniform(0, math.pi, 25)
    phi = rng.uniform(0, 2 * math.pi, 25)
    for j in range(6):
        for k in range(-j, j + 1):
            ours = sb.sph_harm_2sphere(j, k, theta, phi)
            np.testing.assert_allclose(ours, sph_harm_y(j, k, theta, phi), atol=1e-13)
            prod = sb.harmonics(3, [sb.HarmonicIndex(k, (j,))], np.column_stack([phi, theta]))[:, 0]
            np.testing.assert_allclose(ours, sb.two_sphere_phase(j, k) * prod, atol=1e-13)


def test_gegenbauer_norms_match_closed_form():
    # ||sin^m P_n||^2 under sin^(level-1) with P = C_n^lam / C_n^lam(1)
    for level in (2, 3, 4):
        for m in (0, 1, 3):
            lam = m + (level - 1) / 2
            norms = sb._factor_norms(level, m, 10)
            for n in range(10):
                h = math.pi * 2 ** (1 - 2 * lam) * gamma(n + 2 * lam) / (
                    math.factorial(n) * (n + lam) * gamma(lam) ** 2
                )
                c1 = gamma(n + 2 * lam) / (math.factorial(n) * gamma(2 * lam))
                assert norms[n] == pytest.approx(c1 / math.sqrt(h), rel=1e-12)


def test_normalization_cache_is_thread_safe():
    sb._norm_cache.clear()
    results = []

    def work():
        results.append(sb._factor_norms(5, 2, 30).copy())

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for r in results:
        np.testing.assert_array_equal(r[:31], results[0][:31])


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_addition_theorem(d, rng):
    X = sb.random_points(d, 40, rng)
    Z = sb.random_points(d, 40, rng)
    t = np.sum(sb.polar_to_cartesian(X) * sb.polar_to_cartesian(Z), axis=1)
    for j in range(9):
        idx = sb.degree_indices(d, j)
        lhs = np.sum(sb.harmonics(d, idx, X) * sb.harmonics(d, idx, Z).conj(), axis=1)
        rhs = sb.dim_harmonic_space(j, d) / sb.surface_area(d) * sb.legendre_poly(j, d, t)
        np.testing.assert_allclose(lhs, rhs, atol=1e-11)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_pointwise_bound_parity_and_real_factor(d, rng):
    P = sb.random_points(d, 300, rng)
    anti = sb.cartesian_to_polar(-sb.polar_to_cartesian(P))
    idx = sb.basis_indices(d, 6)
    Y = sb.harmonics(d, idx, P)
    Ya = sb.harmonics(d, idx, anti)
    bound = np.sqrt([sb.dim_harmonic_space(i.degree, d) / sb.surface_area(d) for i in idx])
    assert np.all(np.abs(Y) <= bound + 1e-12)
    signs = np.array([(-1) ** i.degree for i in idx])
    np.testing.assert_allclose(Ya, Y * signs, atol=1e-10)
    g = sb.real_factor(d, idx[-1], P)
    assert np.isrealobj(g) or np.abs(np.imag(g)).max() < 1e-12


def test_conjugate_symmetry_of_basis(rng):
    P = sb.random_points(4, 20, rng)
    for idx in sb.basis_indices(4, 3):
        y = sb.harmonics(4, [idx], P)[:, 0]
        ybar = sb.harmonics(4, [idx.conjugate()], P)[:, 0]
        np.testing.assert_allclose(y.conj(), (-1) ** (idx.l1 % 2) * ybar, atol=1e-14)


# -- quadrature ---------------------------------------------------------------------


def test_quadrature_examples():
    q = sb.build_quadrature(3, 4)
    assert q.integrate(np.ones(q.size)) == pytest.approx(4 * math.pi, abs=1e-10)
    y11 = sb.harmonics(3, [sb.HarmonicIndex(1, (1,))], q.polar)[:, 0]
    assert q.integrate(np.abs(y11) ** 2) == pytest.approx(1.0, abs=1e-9)
    y01 = sb.harmonics(3, [sb.HarmonicIndex(0, (1,))], q.polar)[:, 0]
    y02 = sb.harmonics(3, [sb.HarmonicIndex(0, (2,))], q.polar)[:, 0]
    assert abs(q.integrate(y01 * y02.conj())) < 1e-9


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_quadrature_weights_and_monomials(d):
    q = sb.build_quadrature(d, 6)
    assert np.all(q.weights > 0)
    assert q.weights.sum() == pytest.approx(sb.surface_area(d), abs=1e-10)
    x = q.cartesian
    # int x_i^2 = sigma/d, int x_i^4 = 3 sigma/(d(d+2)), int x_1^2 x_2^2 = sigma/(d(d+2))
    sig = sb.surface_area(d)
    for i in range(d):
        assert q.integrate(x[:, i] ** 2) == pytest.approx(sig / d, abs=1e-12)
        assert q.integrate(x[:, i] ** 4) == pytest.approx(3 * sig / (d * (d + 2)), abs=1e-12)
    assert q.integrate(x[:, 0] ** 2 * x[:, -1] ** 2) == pytest.approx(sig / (d * (d + 2)), abs=1e-12)
    assert abs(q.integrate(x[:, 0] * x[:, 1] ** 2)) < 1e-12


@pytest.mark.parametrize("d", [2, 3, 4])
def test_orthonormality(d):
    q = sb.build_quadrature(d, 12)
    Y = sb.harmonics(d, sb.basis_indices(d, 5), q.polar)
    G = (Y * q.weights[:, None]).conj().T @ Y
    assert np.abs(G - np.eye(G.shape[0])).max() < 1e-8


def test_values_independent_of_cache_history():
    code = (
        "import sys, numpy as np\n"
        "from sphkern import sphere_basis as sb\n"
        "P = sb.random_points(4, 5, np.random.default_rng(0))\n"
        "if sys.argv[1] == 'warm':\n"
        "    sb.harmonics(4, sb.degree_indices(4, 40), P)\n"
        "sys.stdout.write(sb.harmonics(4, sb.basis_indices(4, 6), P).tobytes().hex())\n"
    )
    import subprocess
    import sys

    runs = [subprocess.run([sys.executable, "-c", code, mode], capture_output=True,
                           text=True, check=True).stdout for mode in ("cold", "warm")]
    assert runs[0] == runs[1]
