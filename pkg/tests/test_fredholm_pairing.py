import json

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st

from ncindex.algebra_core import from_matrix, make_matrix_algebra, matrix_of
from ncindex.errors import ConfigInvalid, ParityMismatch, SummabilityViolation, WindowTooSmall
from ncindex.fredholm_pairing import (
    CircleModule,
    FredholmModule,
    TrigPoly,
    chi_even,
    eta,
    index_pairing,
    load_module,
    operator_index_oracle,
    random_dense_module,
    random_unitary,
    summability_check,
    toeplitz_even_module,
    transgression_check,
)
from ncindex.nc_forms import Chain, NCForm

M2 = make_matrix_algebra(2)


def commuting_odd_module():
    # rho(a) = a (x) 1 and F = 1 (x) diag(1, -1) commute
    mats = np.array([np.kron(matrix_of(M2.basis(i)), np.eye(2)) for i in range(4)])
    F = np.kron(np.eye(2), np.diag([1.0, -1.0]))
    return FredholmModule(M2, mats, F, "odd", 1)


def test_module_check_rejects_bad_F():
    mats = np.array([matrix_of(M2.basis(i)) for i in range(4)])
    with pytest.raises(ConfigInvalid):
        FredholmModule(M2, mats, 2 * np.eye(2), "odd", 1).check()


def test_module_needs_grading():
    mats = np.array([matrix_of(M2.basis(i)) for i in range(4)])
    with pytest.raises(ConfigInvalid):
        FredholmModule(M2, mats, np.eye(2), "even", 0)


def test_chi_zero_when_rho_plus_equals_rho_minus():
    h = 2
    mats = np.array([matrix_of(M2.basis(i)) for i in range(4)])
    rho = np.zeros((4, 2 * h, 2 * h), dtype=complex)
    rho[:, :h, :h] = mats
    rho[:, h:, h:] = mats
    F = np.block([[np.zeros((h, h)), np.eye(h)], [np.eye(h), np.zeros((h, h))]])
    mod = FredholmModule(M2, rho, F, "even", 0, np.r_[np.ones(h), -np.ones(h)])
    x = NCForm.random(M2, 2, np.random.default_rng(0))
    assert abs(chi_even(0, mod, x).scalar) < 1e-14


def test_commuting_F_gives_zero_cochains():
    mod = commuting_odd_module()
    x = NCForm.random(M2, 4, np.random.default_rng(1))
    assert chi_even(1, mod, x).max_abs() < 1e-14
    assert eta(2, mod, x).max_abs() < 1e-14
    assert transgression_check(1, mod, 5, seed=2) < 1e-14


def test_eta_ignores_other_degrees():
    x = NCForm.random(M2, 4, np.random.default_rng(3), degrees=[1, 3])
    assert eta(2, random_dense_module(M2, 6, "odd", 4), x).max_abs() == 0


def test_parity_and_summability_guards():
    x = Chain.elementary(None, TrigPoly.monomial(1))
    with pytest.raises(ParityMismatch):
        chi_even(2, CircleModule(8), x)
    with pytest.raises(SummabilityViolation):
        chi_even(1, CircleModule(8, p=3), x)
    with pytest.raises(ParityMismatch):
        index_pairing(CircleModule(8), M2.unit(), "idempotent")


def test_window_too_small():
    with pytest.raises(WindowTooSmall):
        index_pairing(CircleModule(2), TrigPoly.monomial(3), "invertible")


@pytest.mark.parametrize("k", [-3, -2, -1, 1, 2, 3])
def test_toeplitz_index_matches_oracle(k):
    mod = CircleModule(16)
    u = TrigPoly.monomial(k)
    assert index_pairing(mod, u, "invertible") == pytest.approx(k, abs=1e-9)
    # the oracle counts ker - coker of T_u, which is -k in this mode convention
    assert operator_index_oracle(mod, u) == -k


def test_trivial_class_pairs_to_zero():
    mod = CircleModule(8)
    assert index_pairing(mod, TrigPoly.monomial(0), "invertible") == 0
    assert operator_index_oracle(mod, TrigPoly.monomial(0)) == 0


def test_pairing_independent_of_degree():
    mod = CircleModule(24)
    for k in (-2, 1, 3):
        u = TrigPoly.monomial(k, 0.5 - 2j)
        base = index_pairing(mod, u, "invertible")
        assert index_pairing(mod, u, "invertible", n=3) == pytest.approx(base, abs=1e-8)
        assert index_pairing(mod, u, "invertible", n=5) == pytest.approx(base, abs=1e-8)


def test_even_toeplitz_rank_times_base_index():
    alg = make_matrix_algebra(3)
    mod = toeplitz_even_module(alg, 4)
    for r in range(4):
        e = from_matrix(alg, np.diag([1.0] * r + [0.0] * (3 - r)))
        assert operator_index_oracle(mod, e) == r
        assert index_pairing(mod, e, "idempotent") == pytest.approx(r, abs=1e-10)
        assert index_pairing(mod, e, "idempotent", n=2) == pytest.approx(r, abs=1e-8)


def test_direct_sum_adds_pairings():
    a = toeplitz_even_module(M2, 3)
    b = random_dense_module(M2, 4, "even", 5)
    e = from_matrix(M2, np.diag([1.0, 0.0]))
    total = index_pairing(a.direct_sum(b), e, "idempotent")
    assert total == pytest.approx(index_pairing(a, e, "idempotent") + index_pairing(b, e, "idempotent"), abs=1e-10)


def test_transgression_m2_toy_module():
    assert transgression_check(1, random_dense_module(M2, 6, "odd", 7), 100, seed=7) < 1e-10


def test_transgression_circle():
    assert transgression_check(1, CircleModule(16), 10, seed=8) < 1e-10


def test_transgression_even_dense():
    mod = random_dense_module(M2, 6, "even", 9)
    assert transgression_check(0, mod, 20, seed=9) < 1e-10
    assert transgression_check(2, mod, 20, seed=9) < 1e-10


def test_transgression_workers_agree():
    mod = random_dense_module(M2, 6, "odd", 10)
    assert transgression_check(1, mod, 6, seed=3, workers=3) == transgression_check(1, mod, 6, seed=3)


def test_summability_monomial():
    out = summability_check(TrigPoly.monomial(1), 1.5)
    assert out["passed"]
    # [F, z] only moves mode -1 to mode 0: one singular value, equal to 2
    npt.assert_allclose(out["sums"], 2.0 ** 1.5, atol=1e-12)


def test_module_json_round_trip(tmp_path):
    mod = random_dense_module(M2, 4, "even", 11)
    path = tmp_path / "mod.json"
    path.write_text(mod.to_json())
    back = load_module(M2, path)
    npt.assert_array_equal(back.rho_basis, mod.rho_basis)
    npt.assert_array_equal(back.F, mod.F)
    npt.assert_array_equal(back.grading, mod.grading)


def test_load_module_plain_reals():
    mats = [matrix_of(M2.basis(i)).real.tolist() for i in range(4)]
    doc = {"h_dim": 2, "parity": "odd", "p": 1, "rho": mats, "F": [[1.0, 0.0], [0.0, -1.0]]}
    mod = load_module(M2, json.dumps(doc))
    npt.assert_array_equal(mod.rho_basis[1], matrix_of(M2.basis(1)))


def test_load_module_missing_key():
    with pytest.raises(ConfigInvalid):
        load_module(M2, json.dumps({"h_dim": 2, "parity": "odd", "p": 1}))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_conjugation_invariance(seed):
    rng = np.random.default_rng(seed)
    mod = random_dense_module(M2, 4, "even", seed)
    h = mod.h_dim // 2
    # even invertible U: block diagonal with respect to the grading
    U = np.zeros((2 * h, 2 * h), dtype=complex)
    U[:h, :h] = np.eye(h) + 0.3 * rng.standard_normal((h, h))
    U[h:, h:] = random_unitary(rng, h)
    e = from_matrix(M2, np.diag([1.0, 0.0]))
    assert index_pairing(mod.conjugated(U), e, "idempotent") == pytest.approx(index_pairing(mod, e, "idempotent"), abs=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.integers(-3, 3), st.integers(-2, 2))
def test_product_pairing_is_additive(j, k):
    mod = CircleModule(24)
    u = TrigPoly.monomial(j) * TrigPoly.monomial(k)
    assert index_pairing(mod, u, "invertible") == pytest.approx(j + k, abs=1e-9)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_circle_conjugation_invariance(seed):
    rng = np.random.default_rng(seed)
    mod = CircleModule(8)
    # even U: commutes with F, so it preserves the nonnegative and negative modes
    U = np.zeros((mod.h_dim, mod.h_dim))
    neg, pos = mod.modes < 0, mod.modes >= 0
    U[np.ix_(neg, neg)] = np.eye(8) + 0.1 * rng.standard_normal((8, 8))
    U[np.ix_(pos, pos)] = np.eye(9) + 0.1 * rng.standard_normal((9, 9))
    u = TrigPoly.monomial(1)
    assert index_pairing(mod.conjugated(U), u, "invertible") == pytest.approx(1, abs=1e-8)
