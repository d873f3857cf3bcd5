import math

import pytest

from rcar.dist import ChiSquare1, Constant, LogNormal
from rcar.first_moment import (
    FINITE,
    INCONCLUSIVE,
    INFINITE,
    mean_exact,
    phi1,
    phi1_tilde,
    sign_class,
    theorem1_verdict,
)
from rcar.model import A1, A2, FiniteIndependent, GeometricFactor, ModelSpec, NoiseSpec, build_oracle

from conftest import order2_iid


def geo(beta, Z, noise=None):
    return build_oracle(ModelSpec(A2, GeometricFactor(beta, Z), noise))


def test_phi1_deterministic(ar1_half):
    assert phi1(ar1_half, 1.0) == pytest.approx(math.log(0.5), abs=1e-15)


def test_phi1_geometric_unit_sum():
    assert phi1(geo(0.5, Constant(1.0)), 1.0) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("beta, theta", [(0.3, 0.5), (0.4, 2.0), (0.2, 2.7)])
def test_phi1_geometric_closed_form(beta, theta):
    Z = ChiSquare1()
    # log(beta^theta E[Z^theta] / (1 - beta^theta)).
    expect = math.log(beta**theta * Z.moment(theta) / (1 - beta**theta))
    assert phi1(geo(beta, Z), theta) == pytest.approx(expect, rel=1e-12)


@pytest.mark.parametrize("theta", [0.3, 1.0, 2.5])
def test_phi1_tilde_deterministic(ar1_half, theta):
    assert phi1_tilde(ar1_half, theta) == pytest.approx(math.log(0.5), abs=1e-14)


def test_phi1_tilde_iid_pair():
    assert phi1_tilde(build_oracle(order2_iid()), 2.0) == pytest.approx(math.log(2 * math.sqrt(0.2)), rel=1e-13)
    assert math.log(2 * math.sqrt(0.2)) == pytest.approx(-0.1115718, abs=1e-7)


@pytest.mark.parametrize("beta, theta", [(0.3, 0.5), (0.4, 2.0)])
def test_phi1_tilde_geometric_closed_form(beta, theta):
    Z = LogNormal(0.0, 0.5)
    expect = math.log(beta * Z.moment(theta) ** (1 / theta) / (1 - beta))
    assert phi1_tilde(geo(beta, Z), theta) == pytest.approx(expect, rel=1e-12)


def test_mean_exact():
    o = build_oracle(ModelSpec(A1, FiniteIndependent((Constant(0.5),))))
    assert mean_exact(o) == 2.0
    g = geo(0.25, Constant(1.0), NoiseSpec(Constant(4 / 3)))
    assert mean_exact(g) == pytest.approx(2.0, rel=1e-14)
    assert mean_exact(geo(0.5, Constant(1.0))) == math.inf


def test_sign_class():
    assert sign_class(0.0) == "nonneg"
    assert sign_class(-1e-13) == "boundary"
    assert sign_class(-0.1) == "neg"
    assert sign_class(math.nan) is None


def test_verdict_finite_small_theta():
    o = build_oracle(ModelSpec(A1, FiniteIndependent((Constant(0.25),))))
    r = theorem1_verdict(o, 0.5)
    assert r.values["phi1"] == pytest.approx(math.log(0.5))
    assert r.verdict == FINITE


def test_verdict_infinite_at_unit_sum():
    r = theorem1_verdict(geo(0.5, Constant(1.0)), 1.0)
    assert r.verdict == INFINITE
    assert "boundary" in r.flags


def test_verdict_matches_recorded_signs():
    o = build_oracle(order2_iid())
    r = theorem1_verdict(o, 1.5)
    p1, p1t = r.values["phi1"], r.values["phi1_tilde"]
    # theta >= 1: finite iff phi1_tilde < 0, infinite iff phi1 >= 0.
    if p1t < 0:
        assert r.verdict == FINITE
    elif p1 >= 0:
        assert r.verdict == INFINITE
    else:
        assert r.verdict == INCONCLUSIVE


def test_verdict_infinite_noise():
    # E[B^theta] is finite for every law here, so force the clause through a huge theta
    # on a lognormal noise whose moment overflows.
    o = build_oracle(ModelSpec(A1, FiniteIndependent((Constant(0.1),)), NoiseSpec(LogNormal(0.0, 30.0))))
    r = theorem1_verdict(o, 3.0)
    assert r.verdict == INFINITE
    assert r.justification == ["noise_moment_infinite"]


def test_report_to_dict_serialises_inf():
    r = theorem1_verdict(geo(0.9, Constant(1.0)), 1.0)
    d = r.to_dict()
    assert d["verdict"] == INFINITE
    assert isinstance(d["values"]["phi1"], float)
