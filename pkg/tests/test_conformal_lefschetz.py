import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st

from ncindex.conformal_lefschetz import (
    BottProjector,
    ConformalMap,
    GroupoidElement,
    Jet,
    LogDerivative,
    MatrixField,
    Region,
    TestFunction,
    bott_pairing,
    cauchy_quadrature_oracle,
    closed_form_contribution,
    cocycle_property_check,
    find_fixed_points,
    lefschetz_contribution,
    localized_sum,
    modular_delta,
    order3_discrepancy,
    phi_records,
    phi_trace,
    random_moebius_pair,
    schatten_decay_check,
    todd_pair,
    trace_property_check,
)
from ncindex.errors import OrderMismatch, SupportViolation, UnsupportedFixedManifold

# holomorphic polynomial part 1 + 2z + 3z^2 + 4z^3 (rows index powers of z)
POLY = np.array([[1.0], [2.0], [3.0], [4.0]])


def germ_with_order(rng, z0, n):
    """g(z) = z + sum_{k >= n} c_k (z - z0)^k: a fixed point of order n at z0."""
    cs = [z0, 1.0] + [0.0] * (n - 2) + list(rng.standard_normal(4) + 1j * rng.standard_normal(4))
    if n == 1:
        cs[1] = 1.0 + 0.5 + rng.random()
    return ConformalMap.germ(z0, cs, 1.0)


def nearest(records, z):
    return min(records, key=lambda r: abs(r.z0 - z))


def test_jet_reciprocal_and_division():
    x = Jet(0.3, [2.0, 1.0, -0.5, 0.25])
    npt.assert_allclose((x * x.reciprocal()).coeffs, [1, 0, 0, 0], atol=1e-15)
    y = Jet(0.3, [0.0, 0.0, 1.0, 2.0])
    z = Jet(0.3, [0.0, 0.0, 3.0, 1.0])
    npt.assert_allclose((z / y).coeffs, [3.0, -5.0], atol=1e-15)


def test_jet_compose_matches_map_composition():
    f = ConformalMap.moebius(2, 1, 0.1, 1)
    g = ConformalMap.polynomial([0.1, 1.5, 0.2])
    z0 = 0.2 + 0.1j
    lhs = f.jet(complex(g(z0)), 5).compose(g.jet(z0, 5))
    npt.assert_allclose(lhs.coeffs, f.compose(g).jet(z0, 5).coeffs, atol=1e-12)


def test_fixed_points_of_scaling():
    (fp,) = find_fixed_points(ConformalMap.scaling(2))
    assert fp.z0 == 0 and fp.order == 1


def test_parabolic_moebius_has_order_two():
    (fp,) = find_fixed_points(ConformalMap.moebius(1, 0, -1, 1))
    assert abs(fp.z0) < 1e-14 and fp.order == 2


def test_polynomial_order_three():
    (fp,) = find_fixed_points(ConformalMap.polynomial([0, 1, 0, 1]))
    assert abs(fp.z0) < 1e-10 and fp.order == 3


def test_translation_has_no_fixed_points():
    assert find_fixed_points(ConformalMap.moebius(1, 2, 0, 1)) == []


def test_two_fixed_points():
    fps = find_fixed_points(ConformalMap.moebius(2, 1, 1, 3), Region(0, 5))
    # z = (2z + 1)/(z + 3)  <=>  z^2 + z - 1 = 0
    npt.assert_allclose(sorted(fp.z0.real for fp in fps), [(-1 - 5 ** 0.5) / 2, (-1 + 5 ** 0.5) / 2], atol=1e-14)


def test_univalence_check():
    with pytest.raises(ValueError):
        ConformalMap.polynomial([0, 0, 1], within=(0j, 1.0))
    ConformalMap.polynomial([0, 1, 0.2], within=(0j, 1.0))


def test_simple_fixed_point_contribution():
    g = ConformalMap.scaling(2)
    a = TestFunction.gaussian()
    (fp,) = find_fixed_points(g)
    assert lefschetz_contribution(g, fp, a) == pytest.approx(-1, abs=1e-15)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_pure_power_contribution(n):
    # g(z) = z + z^n: (z^n)/(g(z) - z) = 1, so the value is minus the (n-1)st Taylor coefficient of a
    g = ConformalMap.polynomial([0, 1] + [0] * (n - 2) + [1]) if n > 1 else ConformalMap.polynomial([0, 2])
    a = TestFunction.gaussian(poly=POLY)
    (fp,) = find_fixed_points(g)
    assert lefschetz_contribution(g, fp, a) == pytest.approx(-POLY[n - 1, 0], abs=1e-9)


def test_order_mismatch():
    g = ConformalMap.scaling(2)
    (fp,) = find_fixed_points(g)
    with pytest.raises(OrderMismatch):
        lefschetz_contribution(g, type(fp)(fp.z0, 2, g), TestFunction.gaussian())


def test_order_three_factor_two():
    g = ConformalMap.polynomial([0, 1, 0, 1, 0.3, 0.2])
    a = TestFunction.gaussian(poly=POLY)
    (fp,) = find_fixed_points(g, Region(0, 0.5))
    assert fp.order == 3
    report = order3_discrepancy(g, fp, a)
    assert report["ratio"] == pytest.approx(2, abs=1e-10)


def test_phi_of_map_without_fixed_points():
    x = GroupoidElement.elementary(TestFunction.gaussian(), ConformalMap.moebius(1, 2, 0, 1))
    assert phi_trace(x) == 0


def test_phi_single_term_is_contribution():
    g = ConformalMap.scaling(2)
    a = TestFunction.gaussian(poly=POLY)
    x = GroupoidElement.elementary(a, g)
    (fp,) = find_fixed_points(g)
    assert phi_trace(x) == pytest.approx(lefschetz_contribution(g, fp, a), abs=1e-14)


def test_identity_component_contributes_zero():
    x = GroupoidElement.elementary(TestFunction.gaussian(), ConformalMap.identity())
    recs = phi_records(x)
    assert phi_trace(x) == 0 and recs[0].infinite_order_convention


def test_support_must_lie_in_domain():
    with pytest.raises(SupportViolation):
        GroupoidElement.elementary(TestFunction.gaussian(), ConformalMap.moebius(1, 0, 1, -1))


def test_trace_property_with_itself():
    x, _ = random_moebius_pair(np.random.default_rng(11))
    assert trace_property_check(x, x, Region(0j, 60.0)) == 0


def test_trace_property_random_pair():
    x, y = random_moebius_pair(np.random.default_rng(11))
    assert trace_property_check(x, y, Region(0j, 60.0)) < 1e-8


def test_cauchy_oracle_scaling():
    g = ConformalMap.scaling(2)
    a = TestFunction.gaussian()
    assert localized_sum(g, a) == pytest.approx(-1, abs=1e-15)
    assert cauchy_quadrature_oracle(g, a) == pytest.approx(-1, abs=1e-4)


def test_cauchy_oracle_two_fixed_points():
    g = ConformalMap.moebius(2, 1, 1, 3, pole_radius=0.2)
    a = TestFunction.gaussian(alpha=0.6, center=-0.5, poly=np.array([[1.0, 0.3], [0.5, 0.0]]))
    region = Region(0j, 5.0)
    assert cauchy_quadrature_oracle(g, a, region) == pytest.approx(localized_sum(g, a, region), abs=1e-4)


def test_cauchy_oracle_far_support():
    # the only fixed point is far outside the support
    assert abs(cauchy_quadrature_oracle(ConformalMap.scaling(2), TestFunction.gaussian(alpha=4.0, center=8.0))) < 1e-6


def test_modular_delta_of_affine_maps_vanishes():
    z = np.array([0.1, 1 + 1j, -2j])
    for g in (ConformalMap.moebius(1, 3, 0, 1), ConformalMap.scaling(2 - 1j)):
        assert np.max(np.abs(LogDerivative(g)(z))) == 0


def test_modular_delta_moebius_factor():
    a, b, c, d = 2.0, 1.0, 0.05 - 0.02j, 1.0  # pole far from the Gaussian support
    g = ConformalMap.moebius(a, b, c, d)
    z0 = 0.4 + 0.2j
    # g' = (ad - bc)/(cz + d)^2, so g''/g' = -2c/(cz + d); its jet from the map jet must agree
    assert LogDerivative(g).jet(z0, 0).coeffs[0] == pytest.approx(-2 * c / (c * z0 + d), abs=1e-14)
    x = modular_delta(GroupoidElement.elementary(TestFunction.gaussian(), g))
    assert x.degree == 1
    assert x.terms[0].value(z0) == pytest.approx(TestFunction.gaussian()(z0) * -2 * c / (c * z0 + d), abs=1e-14)


def test_todd_disjoint_supports():
    f0 = TestFunction.gaussian(alpha=8.0, center=-4.0)
    f1 = TestFunction.gaussian(alpha=8.0, center=4.0)
    assert abs(todd_pair("fundamental", f0, f1, f1)) < 1e-12


def test_todd_equals_split_form():
    rng = np.random.default_rng(0)
    fields = [MatrixField.random(rng) for _ in range(3)]
    assert todd_pair("todd", *fields) == pytest.approx(todd_pair("todd_split", *fields), abs=1e-8)
    # trivial action: chern1 vanishes, so todd is the fundamental class
    assert todd_pair("todd", *fields) == pytest.approx(todd_pair("fundamental", *fields), abs=1e-12)


def test_todd_rejects_nontrivial_action():
    x = GroupoidElement.elementary(TestFunction.gaussian(), ConformalMap.scaling(2))
    with pytest.raises(UnsupportedFixedManifold):
        todd_pair("fundamental", x, x, x)


def test_cocycle_on_constants():
    c = TestFunction.gaussian(alpha=1e-9)  # flat to working precision near the origin
    assert abs(todd_pair("fundamental", TestFunction.gaussian(), c * 0.0, c * 0.0)) == 0


def test_cocycle_property_small():
    assert cocycle_property_check("todd", trials=2, seed=3) < 1e-6


def test_bott_pairing():
    assert bott_pairing() == pytest.approx(1, abs=1e-6)
    assert bott_pairing(BottProjector(constant=True)) == 0


def test_bott_pairing_conjugation_invariance():
    rng = np.random.default_rng(1)
    Z = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    U, _ = np.linalg.qr(Z)
    assert bott_pairing(BottProjector(U)) == pytest.approx(bott_pairing(), abs=1e-10)


def test_schatten_zero_function():
    zero = TestFunction([(np.zeros((1, 1)), 1.0, 0)])
    (rep,) = schatten_decay_check(None, zero, grids=(8,))
    assert np.max(rep.singular_values) == 0
    assert all(np.max(v) == 0 for v in rep.partial_sums.values())


def test_gaussian_integral_closed_form():
    # int |z|^2 exp(-a |z|^2) d^2 z = pi / a^2
    f = TestFunction.gaussian(alpha=1.7, poly=np.array([[0, 0], [0, 1.0]]))
    assert f.integral() == pytest.approx(np.pi / 1.7 ** 2, rel=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_jet_matches_order_two_closed_form(seed):
    rng = np.random.default_rng(seed)
    z0 = complex(0.3 * rng.standard_normal(), 0.3 * rng.standard_normal())
    g = germ_with_order(rng, z0, 2)
    a = TestFunction.random(rng, degree=2)
    fp = nearest(find_fixed_points(g, Region(z0, 0.5)), z0)
    assert fp.order == 2
    gd = [g.derivative(fp.z0, k) for k in range(4)]
    # holomorphic derivative of a by its own differentiation rule, independent of the jet route
    ad = [a(fp.z0), a.dz()(fp.z0)]
    assert lefschetz_contribution(g, fp, a) == pytest.approx(closed_form_contribution(2, gd, ad), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_jet_matches_order_one_closed_form(seed):
    rng = np.random.default_rng(seed)
    g = ConformalMap.moebius(2 + rng.random(), rng.standard_normal(), 0.05 * rng.standard_normal(), 1)
    a = TestFunction.random(rng, degree=2)
    for fp in find_fixed_points(g, Region(0j, 3.0)):
        value = closed_form_contribution(1, [fp.z0, g.derivative(fp.z0, 1)], [a(fp.z0)])
        assert lefschetz_contribution(g, fp, a) == pytest.approx(value, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_affine_chart_invariance(seed):
    rng = np.random.default_rng(seed)
    A = complex(*rng.uniform(0.5, 2.0, 2))
    B = complex(*rng.standard_normal(2))
    g = germ_with_order(rng, 0.1 + 0.2j, 2)
    a = TestFunction.random(rng, degree=2)
    fp = nearest(find_fixed_points(g, Region(0.1 + 0.2j, 0.3)), 0.1 + 0.2j)
    h = g.affine_conjugate(A, B)
    fq = nearest(find_fixed_points(h, Region(A * fp.z0 + B, 0.3 * abs(A))), A * fp.z0 + B)
    assert fq.order == fp.order == 2
    assert lefschetz_contribution(h, fq, a.affine_pullback(A, B)) == pytest.approx(
        lefschetz_contribution(g, fp, a), abs=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.complex_numbers(max_magnitude=3))
def test_todd_is_linear_in_each_slot(seed, c):
    rng = np.random.default_rng(seed)
    a0, a1, a2, b = (TestFunction.random(rng, degree=1) for _ in range(4))
    lhs = todd_pair("fundamental", a0, a1 + b * c, a2)
    rhs = todd_pair("fundamental", a0, a1, a2) + c * todd_pair("fundamental", a0, b, a2)
    assert lhs == pytest.approx(rhs, abs=1e-12 * max(1.0, abs(rhs)))
