import math

import numpy as np
import pytest

from rcar.dist import ChiSquare1, Constant, Exponential, ParameterError, ScaledBernoulli, Uniform
from rcar.model import (
    A1,
    A2,
    JOINT_ROW,
    FiniteIndependent,
    FiniteSingleFactor,
    GeometricFactor,
    ModelSpec,
    ModelValidationError,
    NoiseSpec,
    build_oracle,
    tail_mass,
)


def test_default_noise_is_one():
    spec = ModelSpec(A1, FiniteIndependent((Constant(0.5),)))
    assert build_oracle(spec).noise(2.0) == 1.0


def test_independent_joint_factorises():
    o = build_oracle(ModelSpec(A1, FiniteIndependent((Exponential(2.0), Uniform(0.0, 1.0)))))
    # E[A1^{1/2}] E[A2^{1/2}] with E[A2^{1/2}] = 2/3 for Uniform(0, 1).
    expect = math.gamma(1.5) / math.sqrt(2.0) * (2 / 3)
    assert o.joint(1, 2, 1.0) == pytest.approx(expect, rel=1e-13)
    assert o.joint(2, 2, 2.0) == pytest.approx(1 / 3, rel=1e-13)


def test_single_factor_joint():
    # A_j = w_j Z with Z chi-square(1): E[(w1 w2)^{theta/2} Z^theta].
    o = build_oracle(ModelSpec(A2, FiniteSingleFactor((0.2, 0.1), ChiSquare1())))
    assert o.joint(1, 2, 2.0) == pytest.approx(0.02 * 3.0, rel=1e-13)
    assert o.marginal(2, 1.0) == pytest.approx(0.1, rel=1e-13)


def test_geometric_marginal_and_series():
    o = build_oracle(ModelSpec(A2, GeometricFactor(0.5, ChiSquare1())))
    assert o.marginal(3, 2.0) == pytest.approx(0.5**6 * 3.0, rel=1e-13)
    # sum_j 0.25^j * 3 = 3 * (1/3) = 1.
    assert o.series(2.0) == pytest.approx(1.0, rel=1e-13)
    direct = math.fsum(o.marginal(j, 2.0) for j in range(1, 80))
    assert o.series(2.0) == pytest.approx(direct, rel=1e-13)


def test_marginal_beyond_order_is_zero():
    o = build_oracle(ModelSpec(A1, FiniteIndependent((Constant(0.5),))))
    assert o.marginal(2, 1.0) == 0.0
    assert o.joint(1, 2, 2.0) == 0.0


def test_group_moment_repeated_index():
    o = build_oracle(ModelSpec(A1, FiniteIndependent((ChiSquare1(), Constant(0.5)))))
    # E[A1^{1/2} A1^{1/2} A2^{1/2}] = E[A1] * sqrt(0.5).
    assert o.group_moment([1, 1, 2], 0.5) == pytest.approx(math.sqrt(0.5), rel=1e-13)


def test_b_vector_and_c_matrix():
    A = ScaledBernoulli(0.45, 2 / 3)
    o = build_oracle(ModelSpec(A1, FiniteIndependent((A, A))))
    b = o.b_vector(2.0, 1.0, 3)
    assert b.tolist() == pytest.approx([0.0, 0.3, 0.3, 0.0])
    c = o.c_matrix(2.0, 1.0, 2)
    assert c == pytest.approx(np.array([[0.2, 0.09], [0.09, 0.2]]))


def test_tail_mass():
    spec = ModelSpec(A2, GeometricFactor(0.5, Constant(1.0)))
    assert tail_mass(spec, 1.0, 3) == pytest.approx(0.5**4 / 0.5, rel=1e-14)
    with pytest.raises(ParameterError):
        tail_mass(ModelSpec(A1, FiniteIndependent((Constant(0.5),))), 1.0, 3)


@pytest.mark.parametrize(
    "make, path",
    [
        (lambda: ModelSpec("A3", FiniteIndependent((Constant(0.5),))), "/assumption"),
        (lambda: ModelSpec(A1, FiniteIndependent((Constant(0.0), Constant(0.0)))), "/coeffs/dists"),
        (lambda: ModelSpec(A1, FiniteSingleFactor((0.1, -0.2), ChiSquare1())), "/coeffs/weights/1"),
        (lambda: ModelSpec(A2, GeometricFactor(1.0, ChiSquare1())), "/coeffs/beta"),
        (lambda: ModelSpec(A1, FiniteIndependent((Constant(0.5),)), NoiseSpec(Constant(0.0))), "/noise/dist"),
        (lambda: ModelSpec(A2, FiniteIndependent((Constant(0.5),)), NoiseSpec(Constant(1.0), JOINT_ROW)),
         "/noise/dependence"),
    ],
)
def test_validation_paths(make, path):
    with pytest.raises(ModelValidationError) as ei:
        make()
    assert path in [p for p, _ in ei.value.errors]


def test_round_trip_dict():
    spec = ModelSpec(A2, GeometricFactor(0.3, ChiSquare1()), NoiseSpec(Exponential(1.0)))
    d = spec.to_dict()
    assert d["assumption"] == "A2"
    assert d["coeffs"]["kind"] == "geometric_factor"
    assert spec.order == math.inf
