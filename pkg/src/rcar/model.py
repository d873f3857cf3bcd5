"""Model descriptions and moment oracles.

A model is ``X_t = sum_j A_{t,j} X_{t-j} + B_t`` with non-negative random
coefficients.  Two sharing structures are supported:

* ``A1``: the rows ``((A_{t,j})_j, B_t)`` are iid across ``t``.
* ``A2``: ``A_{t,j} = A'_{t-j,j}`` with iid rows ``(A'_{u,j})_j``; the noise
  is independent of all coefficients.

In the backward-path picture a jump from path point ``u`` to ``v > u`` uses a
coefficient whose row is indexed by ``u`` under A1 and by ``v`` under A2.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .dist import ParameterError, ScalarDist

A1 = "A1"
A2 = "A2"
INDEPENDENT = "independent"
JOINT_ROW = "joint_row"
INF = math.inf


class ModelValidationError(ValueError):
    """Invalid model; ``errors`` is a list of ``(path, message)``."""

    def __init__(self, errors):
        self.errors = list(errors)
        msg = "; ".join(f"{p or '/'}: {m}" for p, m in self.errors)
        super().__init__(msg)


@dataclass(frozen=True)
class FiniteIndependent:
    """A_1..A_p mutually independent with the given laws."""

    dists: tuple
    kind = "finite_independent"

    def __post_init__(self):
        object.__setattr__(self, "dists", tuple(self.dists))

    @property
    def order(self):
        return len(self.dists)

    def to_dict(self):
        return {"kind": self.kind, "dists": [d.to_dict() for d in self.dists]}


@dataclass(frozen=True)
class FiniteSingleFactor:
    """A_j = w_j Z with one shared Z per row."""

    weights: tuple
    factor: ScalarDist
    kind = "finite_single_factor"

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    @property
    def order(self):
        return len(self.weights)

    def to_dict(self):
        return {"kind": self.kind, "weights": list(self.weights), "factor": self.factor.to_dict()}


@dataclass(frozen=True)
class GeometricFactor:
    """Infinite order, A_j = beta^j Z with one shared Z per row."""

    beta: float
    factor: ScalarDist
    kind = "geometric_factor"

    @property
    def order(self):
        return INF

    def to_dict(self):
        return {"kind": self.kind, "beta": self.beta, "factor": self.factor.to_dict()}


CoeffFamily = Union[FiniteIndependent, FiniteSingleFactor, GeometricFactor]


@dataclass(frozen=True)
class NoiseSpec:
    dist: ScalarDist
    dependence: str = INDEPENDENT

    def to_dict(self):
        return {"dist": self.dist.to_dict(), "dependence": self.dependence}


@dataclass(frozen=True)
class ModelSpec:
    """Declarative model; validated on construction."""

    assumption: str
    coeffs: CoeffFamily
    noise: NoiseSpec = field(default=None)

    def __post_init__(self):
        if self.noise is None:
            from .dist import Constant

            object.__setattr__(self, "noise", NoiseSpec(Constant(1.0)))
        errors = validate(self)
        if errors:
            raise ModelValidationError(errors)

    @property
    def order(self):
        return self.coeffs.order

    @property
    def noise_independent(self):
        return self.noise.dependence == INDEPENDENT

    def to_dict(self):
        return {"assumption": self.assumption, "coeffs": self.coeffs.to_dict(), "noise": self.noise.to_dict()}


def validate(spec: ModelSpec) -> list:
    """Return a list of ``(path, message)`` problems, empty if valid."""
    errs = []
    if spec.assumption not in (A1, A2):
        errs.append(("/assumption", f"must be 'A1' or 'A2', got {spec.assumption!r}"))
    c = spec.coeffs
    if isinstance(c, FiniteIndependent):
        if len(c.dists) < 1:
            errs.append(("/coeffs/dists", "need at least one coefficient"))
        for i, d in enumerate(c.dists):
            if not isinstance(d, ScalarDist):
                errs.append((f"/coeffs/dists/{i}", "not a distribution"))
        if c.dists and all(isinstance(d, ScalarDist) and d.surely_zero() for d in c.dists):
            errs.append(("/coeffs/dists", "all coefficients are almost surely zero"))
    elif isinstance(c, FiniteSingleFactor):
        if len(c.weights) < 1:
            errs.append(("/coeffs/weights", "need at least one weight"))
        for i, w in enumerate(c.weights):
            if not (w >= 0 and math.isfinite(w)):
                errs.append((f"/coeffs/weights/{i}", f"must be finite and >= 0, got {w!r}"))
        if not isinstance(c.factor, ScalarDist):
            errs.append(("/coeffs/factor", "not a distribution"))
        elif c.weights and (all(w == 0 for w in c.weights) or c.factor.surely_zero()):
            errs.append(("/coeffs", "all coefficients are almost surely zero"))
    elif isinstance(c, GeometricFactor):
        if not 0 < c.beta < 1:
            errs.append(("/coeffs/beta", f"must lie strictly in (0, 1), got {c.beta!r}"))
        if not isinstance(c.factor, ScalarDist):
            errs.append(("/coeffs/factor", "not a distribution"))
        elif c.factor.surely_zero():
            errs.append(("/coeffs/factor", "factor is almost surely zero"))
    else:
        errs.append(("/coeffs", f"unknown coefficient family {type(c).__name__}"))
    n = spec.noise
    if not isinstance(n, NoiseSpec) or not isinstance(n.dist, ScalarDist):
        errs.append(("/noise/dist", "not a distribution"))
    else:
        if n.dependence not in (INDEPENDENT, JOINT_ROW):
            errs.append(("/noise/dependence", f"must be 'independent' or 'joint_row', got {n.dependence!r}"))
        if n.dist.surely_zero():
            errs.append(("/noise/dist", "noise is almost surely zero"))
        if spec.assumption == A2 and n.dependence != INDEPENDENT:
            errs.append(("/noise/dependence", "assumption A2 requires noise independent of the coefficients"))
    return errs


class MomentOracle:
    """Moment tables of a validated model.

    Coefficient indices are 1-based throughout.
    """

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.family = spec.coeffs
        self.order = spec.order
        self._cache = {}

    @property
    def finite(self):
        return self.order != INF

    def _factor_moment(self, theta):
        key = ("z", theta)
        if key not in self._cache:
            self._cache[key] = self.family.factor.moment(theta)
        return self._cache[key]

    def _dist_moment(self, j, theta):
        key = ("d", j, theta)
        if key not in self._cache:
            self._cache[key] = self.family.dists[j - 1].moment(theta)
        return self._cache[key]

    def _weight(self, j):
        f = self.family
        if isinstance(f, GeometricFactor):
            return f.beta**j
        return f.weights[j - 1]

    def _check_index(self, j):
        if j < 1 or (self.finite and j > self.order):
            raise IndexError(f"coefficient index {j} outside 1..{self.order}")

    def marginal(self, j: int, theta: float) -> float:
        """E[A_j^theta]; zero beyond a finite order."""
        if j < 1:
            raise IndexError(f"coefficient index must be >= 1, got {j}")
        if self.finite and j > self.order:
            return 0.0
        if isinstance(self.family, FiniteIndependent):
            return self._dist_moment(j, theta)
        return self._weight(j) ** theta * self._factor_moment(theta)

    def joint(self, i: int, j: int, theta: float) -> float:
        """E[A_i^{theta/2} A_j^{theta/2}] within one row."""
        if i == j:
            return self.marginal(i, theta)
        if i < 1 or j < 1:
            raise IndexError("coefficient indices must be >= 1")
        if self.finite and max(i, j) > self.order:
            return 0.0
        if isinstance(self.family, FiniteIndependent):
            return self._dist_moment(i, theta / 2) * self._dist_moment(j, theta / 2)
        return (self._weight(i) * self._weight(j)) ** (theta / 2) * self._factor_moment(theta)

    def group_moment(self, indices: Sequence[int], exponent: float) -> float:
        """E[prod_l A_{j_l}^exponent] for indices within one row.

        A repeated index is the same random variable, so its powers add.
        """
        counts = Counter(indices)
        if any(j < 1 for j in counts):
            raise IndexError("coefficient indices must be >= 1")
        if self.finite and any(j > self.order for j in counts):
            return 0.0
        if isinstance(self.family, FiniteIndependent):
            out = 1.0
            for j, n in counts.items():
                out *= self._dist_moment(j, exponent * n)
            return out
        w = 1.0
        for j, n in counts.items():
            w *= self._weight(j) ** (exponent * n)
        return w * self._factor_moment(exponent * len(indices))

    def noise(self, theta: float) -> float:
        """E[B^theta]."""
        key = ("b", theta)
        if key not in self._cache:
            self._cache[key] = self.spec.noise.dist.moment(theta)
        return self._cache[key]

    def series(self, theta: float, power: float = 1.0) -> float:
        """sum_j E[A_j^theta]^power, in closed form for geometric weights."""
        f = self.family
        if isinstance(f, GeometricFactor):
            q = f.beta ** (theta * power)
            return q * self._factor_moment(theta) ** power / (1.0 - q)
        return math.fsum(self.marginal(j, theta) ** power for j in range(1, self.order + 1))

    def b_vector(self, theta: float, r: float, P: int) -> np.ndarray:
        """``(E[A_k^{theta/2}]^r)_{k=1..P}`` as a length ``P + 1`` array with a zero at index 0."""
        out = np.zeros(P + 1)
        for k in range(1, P + 1):
            out[k] = self.marginal(k, theta / 2) ** r
        return out

    def c_matrix(self, theta: float, r: float, P: int) -> np.ndarray:
        """``(E[A_i^{theta/2} A_j^{theta/2}]^r)_{i,j=1..P}`` as a ``P x P`` array."""
        f = self.family
        if isinstance(f, FiniteIndependent):
            h = np.array([self.marginal(k, theta / 2) for k in range(1, P + 1)])
            c = np.outer(h, h)
            diag = np.array([self.marginal(k, theta) for k in range(1, P + 1)])
            np.fill_diagonal(c, diag)
            return c**r
        w = np.array([self._weight(k) if k <= self.order else 0.0 for k in range(1, P + 1)])
        wh = w ** (theta / 2)
        return (np.outer(wh, wh) * self._factor_moment(theta)) ** r


def build_oracle(spec: ModelSpec) -> MomentOracle:
    """Moment oracle for a (validated) model."""
    if not isinstance(spec, ModelSpec):
        raise ModelValidationError([("/", "expected a ModelSpec")])
    errors = validate(spec)
    if errors:
        raise ModelValidationError(errors)
    return MomentOracle(spec)


def tail_mass(spec: ModelSpec, theta: float, J: int) -> float:
    """sum_{j > J} E[A_j^theta] for geometric weights."""
    f = spec.coeffs
    if not isinstance(f, GeometricFactor):
        raise ParameterError("tail_mass needs an infinite-order (geometric) family")
    if theta <= 0:
        raise ParameterError("theta must be > 0")
    q = f.beta**theta
    return f.factor.moment(theta) * q ** (J + 1) / (1.0 - q)
