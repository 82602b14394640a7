from math import factorial

import mpmath
import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st

from ncindex.algebra_core import from_matrix, make_matrix_algebra, matrix_of
from ncindex.errors import BackendUnsupported, ParityMismatch, ZeroMode
from ncindex.fredholm_pairing import TrigPoly
from ncindex.nc_forms import Chain
from ncindex.spectral_heat import (
    SpectralTriple,
    divided_difference_exp,
    jlo,
    jlo_monte_carlo,
    jlo_pairing,
    jlo_pairing_t_independence,
    jlo_unsigned,
    random_dense_triple,
    residue_cocycle,
    residue_pairing,
    retraction_compare,
    simplex_exp_integral,
    zeta_trace,
)

M2 = make_matrix_algebra(2)


def naive_divided_difference(x):
    # textbook recursion, fine for well separated points
    x = list(x)
    if len(x) == 1:
        return np.exp(-x[0])
    return (naive_divided_difference(x[1:]) - naive_divided_difference(x[:-1])) / (x[-1] - x[0])


def test_divided_difference_separated_points():
    x = [0.3, 1.7, 3.2, 4.0]
    assert divided_difference_exp(x) == pytest.approx(naive_divided_difference(x), rel=1e-12)


@pytest.mark.parametrize("n", [1, 3, 6])
def test_divided_difference_confluent(n):
    # all points equal: f^(n)(x) / n! with f = exp(-.)
    x0 = 2.5
    assert divided_difference_exp([x0] * (n + 1)) == pytest.approx((-1) ** n * np.exp(-x0) / factorial(n), rel=1e-13)


def test_simplex_integral_degree_one():
    m0, m1 = 0.4, 2.9
    assert simplex_exp_integral([m0, m1]) == pytest.approx((np.exp(-m1) - np.exp(-m0)) / (m0 - m1), rel=1e-13)


def test_simplex_integral_large_spread_is_positive():
    vals = simplex_exp_integral([0.0, 400.0, 900.0, 1e-9])
    assert vals > 0 and np.isfinite(vals)


def test_heat_small_diagonal():
    T = SpectralTriple.dense(M2, np.array([matrix_of(M2.basis(i)) for i in range(4)]), np.diag([0.0, 1.0]))
    npt.assert_allclose(T.heat(1.0), np.diag([1.0, np.exp(-1.0)]), atol=1e-15)
    npt.assert_allclose(T.heat(1e-12), np.eye(2), atol=1e-11)


def test_heat_trace_circle():
    T = SpectralTriple.circle(32)
    k = np.arange(-32, 33).astype(float)
    k[32] = 0.5  # shifted zero mode
    assert np.trace(T.heat(1.0)).real == pytest.approx(np.sum(np.exp(-k ** 2)), rel=1e-14)


def test_hermitian_required():
    with pytest.raises(Exception):
        SpectralTriple.dense(M2, np.zeros((4, 2, 2)), np.array([[0, 1], [0, 0]]))


def test_even_supertrace_of_heat_vanishes():
    T = random_dense_triple(M2, 4, "even", 0)
    assert abs(jlo(0, 1.0, [None], T)) < 1e-13


def test_commuting_family_vanishes():
    T = random_dense_triple(M2, 4, "odd", 1)
    one = M2.unit()
    a0 = M2.random_element(np.random.default_rng(2))
    assert abs(jlo(1, 1.0, [a0, one], T)) < 1e-14
    assert abs(jlo(3, 0.5, [a0, one, one, one], T)) < 1e-14


def test_parity_mismatch():
    with pytest.raises(ParityMismatch):
        jlo(2, 1.0, [None, M2.unit(), M2.unit()], random_dense_triple(M2, 4, "odd", 3))


def test_block_and_path_methods_agree():
    T = random_dense_triple(M2, 4, "odd", 4)
    rng = np.random.default_rng(5)
    a = [M2.random_element(rng) for _ in range(4)]
    assert jlo(3, 0.7, a, T, method="paths") == pytest.approx(jlo(3, 0.7, a, T, method="block"), abs=1e-12)


def test_monte_carlo_agrees_within_three_sigma():
    T = random_dense_triple(M2, 4, "odd", 6)
    rng = np.random.default_rng(7)
    a = [M2.random_element(rng) for _ in range(4)]
    mean, se = jlo_monte_carlo(T, 1.0, a, 100_000, seed=8)
    assert abs(mean - jlo_unsigned(T, 1.0, a)) <= 3 * se


@pytest.mark.parametrize("k", [-2, -1, 0, 1, 2])
def test_circle_jlo_pairing_is_winding(k):
    T = SpectralTriple.circle(32)
    assert jlo_pairing(T, TrigPoly.monomial(k), "invertible") == pytest.approx(k, abs=1e-6)


def test_t_independence():
    T = SpectralTriple.circle(64)
    u = TrigPoly.monomial(1)
    assert jlo_pairing_t_independence(T, u, [1.0]) == 0
    assert jlo_pairing_t_independence(T, u, [0.5, 1.0, 2.0]) < 1e-6


@pytest.mark.parametrize("k", [1, 0, -2])
def test_retraction(k):
    j, c, diff = retraction_compare(SpectralTriple.circle(32), TrigPoly.monomial(k))
    assert j == pytest.approx(k, abs=1e-6) and c == pytest.approx(k, abs=1e-9)
    assert abs(diff) <= 1e-6


def test_zero_mode():
    T = SpectralTriple.dense(M2, np.array([matrix_of(M2.basis(i)) for i in range(4)]), np.diag([0.0, 1.0]))
    with pytest.raises(ZeroMode):
        retraction_compare(T, from_matrix(M2, np.eye(2)))


def test_zeta_of_unit():
    Z = zeta_trace(SpectralTriple.circle(8), TrigPoly.monomial(0))
    assert Z.poles() == {1: pytest.approx(2)}
    # 2 zeta(z) plus the shifted zero mode 0.5^-z
    for z in (2.0, 3.5):
        assert Z(z) == pytest.approx(2 * float(mpmath.zeta(z)) + 0.5 ** -z, rel=1e-12)


def test_zeta_off_diagonal_has_no_poles():
    assert zeta_trace(SpectralTriple.circle(8), TrigPoly.monomial(1)).poles() == {}


def test_zeta_residue_is_twice_the_mean():
    a = TrigPoly(np.array([0.3, 1.5 - 0.5j, 2.0]), low=-1)
    res, _ = zeta_trace(SpectralTriple.circle(8), a).laurent(1.0)
    assert res == pytest.approx(2 * (1.5 - 0.5j), abs=1e-14)


@pytest.mark.parametrize("z", [3.0, 4.5, 6.0])
def test_zeta_matches_window_eigen_sum(z):
    M = 40
    T = SpectralTriple.circle(M)
    a = TrigPoly(np.array([0.3, 1.5 - 0.5j, 2.0]), low=-1)
    lam = np.abs(np.diag(T.D).real)
    direct = np.sum(np.diag(T.rho(a)) * lam ** -z)
    assert zeta_trace(T, a)(z, window=M) == pytest.approx(direct, abs=1e-10)


def test_zeta_needs_circle():
    with pytest.raises(BackendUnsupported):
        zeta_trace(random_dense_triple(M2, 4, "odd", 9), TrigPoly.monomial(0))


@pytest.mark.parametrize("k", [1, 2, -1])
def test_residue_pairing_is_winding(k):
    assert residue_pairing(SpectralTriple.circle(16), TrigPoly.monomial(k)) == pytest.approx(k, abs=1e-9)


def test_residue_on_constants_vanishes():
    c = TrigPoly.monomial(0, 2.0)
    x = Chain.elementary(c, c, c, c)
    assert residue_cocycle(3, x, SpectralTriple.circle(16)) == 0


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0.0, 30.0), min_size=2, max_size=6))
def test_divided_difference_is_symmetric(x):
    a = divided_difference_exp(x)
    b = divided_difference_exp(x[::-1])
    assert a == pytest.approx(b, rel=1e-10, abs=1e-300)


@settings(max_examples=10, deadline=None)
@given(st.integers(-3, 3), st.complex_numbers(min_magnitude=0.1, max_magnitude=10))
def test_residue_equals_jlo_on_chern_cycles(k, c):
    # the cochains agree in cohomology, so compare on cycles
    T = SpectralTriple.circle(32)
    u = TrigPoly.monomial(k, c)
    assert residue_pairing(T, u) == pytest.approx(jlo_pairing(T, u, "invertible"), abs=1e-6)
