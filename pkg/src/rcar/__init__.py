"""Moment criteria for random-coefficient AR(p) and AR(inf) recursions.

Modules
-------
dist          scalar laws with closed-form moments and quantiles
model         model description and the moment oracle
first_moment  phi1, phi1_tilde and the first-moment verdict
pair_sum      closed and open pair sums, phi2, phi2_tilde, exact E[X^2]
spectral      companion and Kronecker criteria for finite order
simulate      Monte Carlo, moment estimates, Hill tail index
solve         critical parameters, theta sweeps, GARCH(1,1) region scan
verify        cross-oracle checks
io, cli       model files, reports and the ``rcar`` command
"""
from ._accel import HAVE_NUMBA, backend

__version__ = "0.1.0"

__all__ = ["HAVE_NUMBA", "backend", "__version__"]
