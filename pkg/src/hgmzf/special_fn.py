"""Confluent hypergeometric function 1F1(N; NR; sigma).

Two independent routes are provided: the Kummer power series around zero,
and the holonomic gradient method, which integrates the second-order ODE

    sigma f'' + (NR - sigma) f' - N f = 0

from a small anchor ``sigma0`` where the series is cheap and exact to
rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .integrator import IntegratorSettings, dopri5, integrate

__all__ = [
    "SeriesResult",
    "Hyp1F1State",
    "pochhammer",
    "hyp1f1_series",
    "hyp1f1_deriv_series",
    "hyp1f1_hgm",
    "hyp1f1",
    "SeriesError",
]

N_MAX = 10_000
OVERFLOW_GUARD = 1e300
DEFAULT_SIGMA0 = 1e-2
DEFAULT_REL_TOL = 1e-13
SERIES_LIMIT = 50.0


class SeriesError(ArithmeticError):
    """A truncated series failed to converge where convergence was required."""


@dataclass(frozen=True)
class SeriesResult:
    """Outcome of summing a truncated infinite series.

    ``condition`` is ``sum|terms| / |sum|``; large values mean the result
    lost that factor of relative accuracy to cancellation.
    """

    value: float
    terms_used: int
    converged: bool
    last_term_magnitude: float
    condition: float = 1.0


@dataclass(frozen=True)
class Hyp1F1State:
    f: float
    f1: float

    def __post_init__(self):
        if not (math.isfinite(self.f) and math.isfinite(self.f1)):
            raise ArithmeticError("non-finite 1F1 state")


def pochhammer(x: float, n: int) -> float:
    """Rising factorial ``(x)_n = x (x+1) ... (x+n-1)``, with ``(x)_0 = 1``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    out = 1.0
    for k in range(n):
        out *= x + k
    return out


def hyp1f1_series(N: float, NR: float, sigma: float, rel_tol: float = DEFAULT_REL_TOL,
                  n_max: int = N_MAX, overflow_guard: float = OVERFLOW_GUARD) -> SeriesResult:
    """Sum ``sum_n (N)_n / (NR)_n sigma^n / n!`` until two consecutive terms are negligible."""
    if NR <= 0:
        raise ValueError("NR must be positive")
    total = 1.0
    abs_total = 1.0
    term = 1.0
    small = 0
    n = 0
    while n < n_max:
        term *= (N + n) / (NR + n) * sigma / (n + 1)
        n += 1
        total += term
        abs_total += abs(term)
        if not (abs_total < overflow_guard and math.isfinite(total)):
            return SeriesResult(total, n + 1, False, abs(term), math.inf)
        if abs(term) <= rel_tol * abs(total):
            small += 1
            if small == 2:
                break
        else:
            small = 0
        if term == 0.0:
            break
    converged = small == 2 or term == 0.0
    cond = abs_total / abs(total) if total != 0 else math.inf
    return SeriesResult(total, n + 1, converged, abs(term), cond)


def hyp1f1_deriv_series(N: float, NR: float, sigma: float, rel_tol: float = DEFAULT_REL_TOL,
                        **kw) -> SeriesResult:
    """``d/dsigma 1F1(N; NR; sigma) = (N/NR) 1F1(N+1; NR+1; sigma)``."""
    r = hyp1f1_series(N + 1, NR + 1, sigma, rel_tol, **kw)
    s = N / NR
    return SeriesResult(s * r.value, r.terms_used, r.converged, abs(s) * r.last_term_magnitude, r.condition)


@njit(cache=True, nogil=True)
def hyp1f1_rhs(sigma, y, params):
    """Companion field ``d/dsigma (f, f') = [[0, 1], [N/sigma, 1 - NR/sigma]] (f, f')``."""
    N = params[0]
    NR = params[1]
    out = np.empty(2)
    out[0] = y[1]
    out[1] = N / sigma * y[0] + (1.0 - NR / sigma) * y[1]
    return out


@njit(cache=True, nogil=True)
def _hyp1f1_core(x0, x1, y0, params, rtol, atol, max_steps, min_step):
    return dopri5(hyp1f1_rhs, x0, x1, y0, params, rtol, atol, max_steps, min_step)


def hyp1f1_hgm(N: float, NR: float, sigma: float, sigma0: float | None = None,
               rel_tol: float = DEFAULT_REL_TOL,
               settings: IntegratorSettings | None = None) -> Hyp1F1State:
    """Evaluate ``1F1`` and its derivative at ``sigma`` by integrating its ODE.

    The anchor ``sigma0`` defaults to ``+-0.01`` on the same side of zero as
    ``sigma``.  Initial values come from :func:`hyp1f1_series`.

    Raises
    ------
    ValueError
        ``sigma0`` is zero or on the other side of zero from ``sigma``.
    SeriesError
        The anchor series did not converge.
    """
    if sigma0 is None:
        sigma0 = math.copysign(DEFAULT_SIGMA0, sigma) if sigma != 0 else DEFAULT_SIGMA0
    if sigma0 == 0:
        raise ValueError("the anchor sigma0 must be non-zero: the ODE is singular at 0")
    if sigma != 0 and (sigma > 0) != (sigma0 > 0):
        raise ValueError("sigma and sigma0 must lie on the same side of the singular point 0")
    f0 = hyp1f1_series(N, NR, sigma0, rel_tol)
    f1 = hyp1f1_deriv_series(N, NR, sigma0, rel_tol)
    if not (f0.converged and f1.converged):
        raise SeriesError(f"1F1 series did not converge at the anchor sigma0={sigma0}")
    if sigma == sigma0:
        return Hyp1F1State(f0.value, f1.value)
    y = integrate(hyp1f1_rhs, sigma0, sigma, np.array([f0.value, f1.value]), settings,
                  params=np.array([float(N), float(NR)]), core=_hyp1f1_core)
    return Hyp1F1State(float(y[0]), float(y[1]))


def hyp1f1(N: float, NR: float, sigma: float) -> float:
    """``1F1(N; NR; sigma)`` for real ``sigma``, choosing the stable route.

    Negative arguments go through Kummer's transformation
    ``1F1(N; NR; s) = e^s 1F1(NR - N; NR; -s)`` so the series never alternates;
    large positive arguments use the ODE.
    """
    if sigma < 0:
        return math.exp(sigma) * hyp1f1(NR - N, NR, -sigma)
    if sigma <= SERIES_LIMIT:
        r = hyp1f1_series(N, NR, sigma)
        if r.converged:
            return r.value
    return hyp1f1_hgm(N, NR, sigma).f
