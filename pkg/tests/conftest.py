import math

import pytest
from hypothesis import HealthCheck, settings

from rcar.dist import Constant, ScaledBernoulli
from rcar.model import A1, FiniteIndependent, ModelSpec, NoiseSpec, build_oracle

settings.register_profile("repo", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


def two_atom(mean, second):
    """Law with E[A] = mean and E[A^2] = second (needs mean^2 <= second)."""
    return ScaledBernoulli(mean * mean / second, second / mean)


def order2_iid(a=0.3, b=0.2, assumption=A1, noise=None):
    """AR(2) with iid coefficients A_1, A_2 of mean a and second moment b."""
    A = two_atom(a, b)
    return ModelSpec(assumption, FiniteIndependent((A, A)), noise or NoiseSpec(Constant(1.0)))


def order2_closed_pairs(a, b):
    """Closed-pair sum 2 (b + a^3 / (1 - a)) of the iid AR(2) model."""
    return 2 * (b + a**3 / (1 - a))


@pytest.fixture
def iid2():
    return build_oracle(order2_iid())


@pytest.fixture
def ar1_half():
    return build_oracle(ModelSpec(A1, FiniteIndependent((Constant(0.5),))))
