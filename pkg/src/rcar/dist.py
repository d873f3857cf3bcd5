"""Non-negative scalar laws with fractional moments and seeded sampling.

Every law is a frozen dataclass.  Sampling goes through the quantile function
so a single uniform stream drives all variants and two laws can be coupled
comonotonically by feeding them the same uniforms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

QUAD_TOL = 1e-10
QUAD_MAX_EVALS = 1_000_000


class ParameterError(ValueError):
    """Invalid distribution parameter or moment order."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


def _check_theta(theta):
    theta = float(theta)
    if not theta > 0 or math.isnan(theta):
        raise ParameterError(f"moment order must be > 0, got {theta!r}")
    return theta


def _exp(x):
    # Moments may legitimately overflow to +inf for heavy-tailed laws.
    return math.exp(x) if x < 709.0 else math.inf


def _quad(f, a, b):
    # QUADPACK evaluates 21 (finite) or 15 (infinite range) points per subinterval.
    limit = QUAD_MAX_EVALS // 21
    val, err, info = integrate.quad(
        f, a, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=limit, full_output=1
    )[:3]
    if info["neval"] > QUAD_MAX_EVALS or err > max(QUAD_TOL, QUAD_TOL * abs(val)) * 10:
        raise QuadratureError(f"quadrature failed: value={val}, error={err}, neval={info['neval']}")
    return val


class RandomStream:
    """Counter-based Philox4x64 stream keyed by ``(seed, substream)``.

    The key is used verbatim, so stream ``(s, r)`` never depends on how many
    other streams were created before it.
    """

    def __init__(self, seed: int = 0, substream: int = 0):
        mask = (1 << 64) - 1
        self.seed = int(seed) & mask
        self.substream = int(substream) & mask
        self._gen = np.random.Generator(
            np.random.Philox(key=np.array([self.seed, self.substream], dtype=np.uint64))
        )

    def uniform(self, size=None):
        return self._gen.random(size)


class ScalarDist:
    """Base class; subclasses implement the closed-form moment and quantile."""

    kind: str = ""

    def moment(self, theta: float) -> float:
        raise NotImplementedError

    def moment_quad(self, theta: float) -> float:
        theta = _check_theta(theta)
        return self.expect(lambda x: x**theta)

    def expect(self, f: Callable[[float], float]) -> float:
        raise NotImplementedError

    def quantile(self, u):
        raise NotImplementedError

    def surely_positive(self) -> bool:
        """True when P(D > 0) = 1."""
        raise NotImplementedError

    def surely_zero(self) -> bool:
        return False

    def sample(self, stream: RandomStream, size=None):
        return self.quantile(stream.uniform(size))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(ScalarDist):
    c: float
    kind = "constant"

    def __post_init__(self):
        if not (self.c >= 0 and math.isfinite(self.c)):
            raise ParameterError(f"constant: c must be finite and >= 0, got {self.c!r}")

    def moment(self, theta):
        theta = _check_theta(theta)
        return self.c**theta

    def expect(self, f):
        return float(f(self.c))

    def quantile(self, u):
        return np.full_like(np.asarray(u, dtype=float), self.c)[()]

    def surely_positive(self):
        return self.c > 0

    def surely_zero(self):
        return self.c == 0

    def to_dict(self):
        return {"kind": self.kind, "c": self.c}


@dataclass(frozen=True)
class ScaledBernoulli(ScalarDist):
    """``c`` with probability ``q``, else 0."""

    q: float
    c: float
    kind = "scaled_bernoulli"

    def __post_init__(self):
        if not 0 <= self.q <= 1:
            raise ParameterError(f"scaled_bernoulli: q must lie in [0, 1], got {self.q!r}")
        if not (self.c >= 0 and math.isfinite(self.c)):
            raise ParameterError(f"scaled_bernoulli: c must be finite and >= 0, got {self.c!r}")

    def moment(self, theta):
        theta = _check_theta(theta)
        return self.q * self.c**theta

    def expect(self, f):
        return self.q * float(f(self.c)) + (1 - self.q) * float(f(0.0))

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(u >= 1.0 - self.q, self.c, 0.0)[()]

    def surely_positive(self):
        return self.q == 1 and self.c > 0

    def surely_zero(self):
        return self.q == 0 or self.c == 0

    def to_dict(self):
        return {"kind": self.kind, "q": self.q, "c": self.c}


@dataclass(frozen=True)
class Exponential(ScalarDist):
    rate: float
    kind = "exponential"

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ParameterError(f"exponential: rate must be finite and > 0, got {self.rate!r}")

    def moment(self, theta):
        theta = _check_theta(theta)
        return _exp(special.gammaln(theta + 1.0) - theta * math.log(self.rate))

    def expect(self, f):
        lam = self.rate
        return _quad(lambda x: f(x) * lam * math.exp(-lam * x), 0.0, math.inf)

    def quantile(self, u):
        return (-np.log1p(-np.asarray(u, dtype=float)) / self.rate)[()]

    def surely_positive(self):
        return True

    def to_dict(self):
        return {"kind": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class LogNormal(ScalarDist):
    mu: float
    sigma: float
    kind = "lognormal"

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ParameterError(f"lognormal: mu must be finite, got {self.mu!r}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ParameterError(f"lognormal: sigma must be finite and > 0, got {self.sigma!r}")

    def moment(self, theta):
        theta = _check_theta(theta)
        return _exp(theta * self.mu + 0.5 * theta * theta * self.sigma**2)

    def expect(self, f):
        mu, s = self.mu, self.sigma
        norm = 1.0 / math.sqrt(2 * math.pi)
        # The Gaussian weight underflows past |y| = 38, so a finite window is exact
        # in double precision and keeps exp(mu + s y) from overflowing.
        return _quad(lambda y: f(math.exp(mu + s * y)) * norm * math.exp(-0.5 * y * y), -40.0, 40.0)

    def quantile(self, u):
        return np.exp(self.mu + self.sigma * special.ndtri(np.asarray(u, dtype=float)))[()]

    def surely_positive(self):
        return True

    def to_dict(self):
        return {"kind": self.kind, "mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True)
class ChiSquare1(ScalarDist):
    kind = "chisquare1"

    def moment(self, theta):
        theta = _check_theta(theta)
        return _exp(theta * math.log(2.0) + special.gammaln(theta + 0.5) - special.gammaln(0.5))

    def expect(self, f):
        # x = y^2 removes the x^{-1/2} singularity of the density at 0.
        norm = 2.0 / math.sqrt(2 * math.pi)
        return _quad(lambda y: f(y * y) * norm * math.exp(-0.5 * y * y), 0.0, math.inf)

    def quantile(self, u):
        # |N| has quantile ndtri((1+u)/2); squaring keeps it monotone in u.
        z = special.ndtri(0.5 * (1.0 + np.asarray(u, dtype=float)))
        return (z * z)[()]

    def surely_positive(self):
        return True

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class Uniform(ScalarDist):
    lo: float
    hi: float
    kind = "uniform"

    def __post_init__(self):
        if not (self.lo >= 0 and math.isfinite(self.hi) and self.hi > self.lo):
            raise ParameterError(f"uniform: need 0 <= lo < hi < inf, got lo={self.lo!r}, hi={self.hi!r}")

    def moment(self, theta):
        theta = _check_theta(theta)
        lo, hi = self.lo, self.hi
        return (hi ** (theta + 1) - lo ** (theta + 1)) / ((theta + 1) * (hi - lo))

    def expect(self, f):
        w = 1.0 / (self.hi - self.lo)
        return _quad(lambda x: f(x) * w, self.lo, self.hi)

    def quantile(self, u):
        return (self.lo + (self.hi - self.lo) * np.asarray(u, dtype=float))[()]

    def surely_positive(self):
        # P(U = 0) = 0 even when lo = 0.
        return True

    def to_dict(self):
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Scaled(ScalarDist):
    """``scale * base``; used for the GARCH driver (alpha/beta) * chi2_1."""

    scale: float
    base: ScalarDist
    kind = "scaled"

    def __post_init__(self):
        if not (self.scale >= 0 and math.isfinite(self.scale)):
            raise ParameterError(f"scaled: scale must be finite and >= 0, got {self.scale!r}")
        if not isinstance(self.base, ScalarDist):
            raise ParameterError("scaled: base must be a distribution")

    def moment(self, theta):
        theta = _check_theta(theta)
        return self.scale**theta * self.base.moment(theta)

    def expect(self, f):
        s = self.scale
        return self.base.expect(lambda x: f(s * x))

    def quantile(self, u):
        return (self.scale * np.asarray(self.base.quantile(u)))[()]

    def surely_positive(self):
        return self.scale > 0 and self.base.surely_positive()

    def surely_zero(self):
        return self.scale == 0 or self.base.surely_zero()

    def to_dict(self):
        return {"kind": self.kind, "scale": self.scale, "dist": self.base.to_dict()}


def moment(d: ScalarDist, theta: float) -> float:
    """E[D^theta] in closed form."""
    return d.moment(theta)


def shifted_moment(d: ScalarDist, shift: float, theta: float) -> float:
    """E[(shift + D)^theta] by quadrature (exact for atomic laws)."""
    theta = _check_theta(theta)
    if shift < 0:
        raise ParameterError("shift must be >= 0")
    return d.expect(lambda x: (shift + x) ** theta)


def sample(d: ScalarDist, stream: RandomStream) -> float:
    """One draw from ``d``; advances ``stream``."""
    return float(d.sample(stream))


_KINDS = {
    "constant": (Constant, ("c",)),
    "scaled_bernoulli": (ScaledBernoulli, ("q", "c")),
    "exponential": (Exponential, ("rate",)),
    "lognormal": (LogNormal, ("mu", "sigma")),
    "chisquare1": (ChiSquare1, ()),
    "uniform": (Uniform, ("lo", "hi")),
}


def dist_from_dict(obj: dict) -> ScalarDist:
    """Inverse of ``ScalarDist.to_dict``; schema checks live in :mod:`rcar.io`."""
    kind = obj["kind"]
    if kind == "scaled":
        return Scaled(float(obj["scale"]), dist_from_dict(obj["dist"]))
    cls, fields = _KINDS[kind]
    return cls(*(float(obj[f]) for f in fields))
