import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rcar.dist import ChiSquare1, Constant, Exponential, ScaledBernoulli, Uniform
from rcar.first_moment import FINITE, INCONCLUSIVE, INFINITE
from rcar.model import A1, A2, FiniteIndependent, GeometricFactor, ModelSpec, NoiseSpec, build_oracle
from rcar.pair_sum import second_moment_exact
from rcar.spectral import (
    expected_companion,
    expected_kron,
    gelfand_estimate,
    hypotheses,
    jensen_lemma_check,
    kron_second_moment,
    nq_criterion,
    positive_coefficients,
    spectral_radius,
    spectral_radius_full,
)

from conftest import order2_iid


def test_companion_ar1(ar1_half):
    assert expected_companion(ar1_half).tolist() == [[0.5]]
    assert expected_kron(ar1_half).tolist() == [[0.25]]


def test_companion_order2(iid2):
    assert expected_companion(iid2) == pytest.approx(np.array([[0.3, 0.3], [1.0, 0.0]]))


def test_kron_order2_display(iid2):
    a, b = 0.3, 0.2
    expect = np.array([[b, a * a, a * a, b], [a, 0, a, 0], [a, a, 0, 0], [1, 0, 0, 0]])
    assert expected_kron(iid2) == pytest.approx(expect, abs=1e-15)


def test_kron_deterministic_mixed_product():
    o = build_oracle(ModelSpec(A1, FiniteIndependent((Constant(0.2), Constant(0.5), Constant(0.1)))))
    K1 = expected_companion(o)
    assert expected_kron(o) == pytest.approx(np.kron(K1, K1), abs=1e-15)


def test_infinite_order_rejected():
    with pytest.raises(ValueError):
        expected_companion(build_oracle(ModelSpec(A2, GeometricFactor(0.3, ChiSquare1()))))


def test_radius_scalars():
    assert spectral_radius(np.array([[0.25]])) == pytest.approx(0.25, abs=1e-15)
    m = np.array([[0.5]])
    assert spectral_radius(np.kron(m, m)) == pytest.approx(0.25, abs=1e-15)


def test_radius_order2_matches_characteristic_polynomial(iid2):
    a, b = 0.3, 0.2
    K = expected_kron(iid2)
    # The matrix splits into an antisymmetric eigenvalue -a and the cubic
    # X^3 - (a + b) X^2 + (-2 a^3 - b + a b) X + a b on the symmetric part.
    cubic = np.array([1.0, -(a + b), -2 * a**3 - b + a * b, a * b])
    assert np.poly(K) == pytest.approx(np.polymul([1.0, a], cubic), abs=1e-14)
    assert np.polyval(cubic, 1.0) > 0
    rho = spectral_radius(K)
    assert rho < 1
    assert rho == pytest.approx(max(abs(np.roots(cubic))), rel=1e-10)


@pytest.mark.parametrize("M", [np.array([[1.0, 2.0], [-1.0, 0.0]]), np.array([[1.0, 2.0]]), np.array([[np.inf]])])
def test_radius_rejects_bad_input(M):
    with pytest.raises(ValueError):
        spectral_radius(M)


@given(st.integers(1, 6).flatmap(lambda n: st.lists(st.floats(0, 3), min_size=n * n, max_size=n * n)))
def test_radius_matches_eigvals(entries):
    n = int(round(math.sqrt(len(entries))))
    M = np.array(entries).reshape(n, n)
    full = spectral_radius_full(M)
    ref = max(abs(np.linalg.eigvals(M)))
    assert full.lower - 1e-9 <= ref <= full.upper + 1e-9 * max(1, ref)
    assert spectral_radius(M) == pytest.approx(ref, rel=1e-6, abs=1e-9)


def test_gelfand_on_shear():
    M = np.array([[0.5, 10.0], [0.0, 0.5]])
    assert gelfand_estimate(M) == pytest.approx(0.5, rel=0.05)


def test_kron_second_moment_deterministic(ar1_half):
    assert kron_second_moment(ar1_half) == pytest.approx(4.0, rel=1e-14)


def test_kron_second_moment_ar1_fixed_point():
    # A = beta (1 + Z) with Z = 1 and beta = 0.4: X = 1 / (1 - 0.8) = 5.
    o = build_oracle(ModelSpec(A1, FiniteIndependent((Constant(0.8),))))
    assert kron_second_moment(o) == pytest.approx(25.0, rel=1e-13)


def test_kron_second_moment_random_ar1():
    # E[X^2] = (E[B^2] + 2 E[A] E[B] E[X]) / (1 - E[A^2]) with E[X] = E[B] / (1 - E[A]).
    A, B = Uniform(0.0, 1.2), Exponential(2.0)
    o = build_oracle(ModelSpec(A1, FiniteIndependent((A,)), NoiseSpec(B)))
    ex = 0.5 / (1 - 0.6)
    expect = (0.5 + 2 * 0.6 * 0.5 * ex) / (1 - A.moment(2.0))
    assert kron_second_moment(o) == pytest.approx(expect, rel=1e-12)


def test_kron_matches_pair_sum(iid2):
    assert kron_second_moment(iid2) == pytest.approx(second_moment_exact(iid2).value, rel=1e-6)


def test_nq_finite(iid2):
    r = nq_criterion(iid2)
    assert r.verdict == FINITE
    assert r.values["spectral_radius"] < 1


def test_nq_infinite_needs_positive_coefficients():
    pos = build_oracle(ModelSpec(A1, FiniteIndependent((Exponential(1.0),))))
    assert positive_coefficients(pos)
    assert nq_criterion(pos).verdict == INFINITE
    atom = build_oracle(order2_iid(0.6, 0.5))
    assert not positive_coefficients(atom)
    r = nq_criterion(atom)
    assert r.values["spectral_radius"] >= 1
    assert r.verdict == INCONCLUSIVE
    assert "positive_coefficients" in r.caveats


def test_hypotheses_checklist(iid2):
    h = hypotheses(iid2)
    assert h["row_iid_A1"] and h["finite_order"]
    assert not h["positive_coefficients"]


def test_jensen_order2(iid2):
    ok, r1, r2 = jensen_lemma_check(iid2)
    assert ok
    assert r1 <= math.sqrt(r2) + 1e-12
    assert r1 == pytest.approx(max(abs(np.roots([1, -0.3, -0.3]))), rel=1e-10)
