"""Adaptive Dormand-Prince 5(4) integrator for small linear ODE systems.

The stepping loop is compiled with numba when the vector field is itself a
numba-compiled function, and runs as plain Python otherwise (same source,
via ``py_func``).  Vector fields have the signature ``rhs(x, y, params)`` and
return ``dy/dx`` as a new array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from numba.extending import is_jitted

__all__ = ["IntegratorSettings", "IntegrationError", "StiffnessError", "integrate", "dopri5"]

OK, UNDERFLOW, MAX_STEPS, NONFINITE = 0, 1, 2, 3
# steps are held to this fraction of the requested tolerance, which keeps the
# accumulated (global) error of a run below the tolerance itself
LOCAL_SAFETY = 0.25

# Dormand & Prince (1980), 5th-order propagating solution, 4th-order embedded
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = (
    71 / 57600,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)


class IntegrationError(RuntimeError):
    """The integrator could not reach the end point."""


class StiffnessError(IntegrationError):
    """Step size collapsed below ``min_step``."""


@dataclass(frozen=True)
class IntegratorSettings:
    """Error control for :func:`integrate`.

    The local error estimate of every accepted step satisfies
    ``|err_i| <= LOCAL_SAFETY * (abs_tol + rel_tol * max(|y_i|, |y_new_i|))``
    componentwise, so that the global error stays within the tolerances.
    """

    rel_tol: float = 1e-12
    abs_tol: float = 1e-14
    max_steps: int = 200_000
    min_step: float = 1e-14

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_steps < 1 or not self.min_step > 0:
            raise ValueError("max_steps and min_step must be positive")


@njit(cache=True, nogil=True)
def _error_norm(err, y, ynew, rtol, atol):
    m = 0.0
    for i in range(err.shape[0]):
        sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
        r = abs(err[i]) / sc
        if not r <= m:
            m = r
    return m


@njit(nogil=True, inline="always")
def dopri5(rhs, x0, x1, y0, params, rtol, atol, max_steps, min_step):
    y = y0.copy()
    span = x1 - x0
    if span == 0.0:
        return y, OK, 0
    direction = 1.0 if span > 0 else -1.0
    length = abs(span)

    k1 = rhs(x0, y, params)
    # starting step (Hairer, Norsett & Wanner, Sec. II.4)
    d0 = 0.0
    d1 = 0.0
    for i in range(y.shape[0]):
        sc = atol + rtol * abs(y[i])
        d0 = max(d0, abs(y[i]) / sc)
        d1 = max(d1, abs(k1[i]) / sc)
    if d0 < 1e-5 or d1 < 1e-5:
        h = 1e-6 * length
    else:
        h = 0.01 * d0 / d1
    h = min(h, length)

    n = y.shape[0]
    ys = np.empty(n)
    ynew = np.empty(n)
    err = np.empty(n)
    x = x0
    steps = 0
    while True:
        remaining = (x1 - x) * direction
        if remaining <= 0.0:
            return y, OK, steps
        last = False
        if h >= remaining:
            h = remaining
            last = True
        if steps >= max_steps:
            return y, MAX_STEPS, steps
        if h < min_step * max(1.0, abs(x)):
            return y, UNDERFLOW, steps
        hs = h * direction
        for i in range(n):
            ys[i] = y[i] + hs * (A21 * k1[i])
        k2 = rhs(x + C2 * hs, ys, params)
        for i in range(n):
            ys[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i])
        k3 = rhs(x + C3 * hs, ys, params)
        for i in range(n):
            ys[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        k4 = rhs(x + C4 * hs, ys, params)
        for i in range(n):
            ys[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        k5 = rhs(x + C5 * hs, ys, params)
        for i in range(n):
            ys[i] = y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
        k6 = rhs(x + hs, ys, params)
        for i in range(n):
            ynew[i] = y[i] + hs * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
        k7 = rhs(x + hs, ynew, params)
        for i in range(n):
            err[i] = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
        en = _error_norm(err, y, ynew, rtol, atol)
        steps += 1
        if not np.isfinite(en):
            if h <= min_step * max(1.0, abs(x)):
                return y, NONFINITE, steps
            h *= 0.1
            continue
        if en <= 1.0:
            x = x1 if last else x + hs
            y, ynew = ynew, y
            k1 = k7  # first-same-as-last
            fac = 5.0 if en == 0.0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
            h *= fac
        else:
            h *= max(0.2, 0.9 * en ** -0.2)


def integrate(rhs, u_start: float, u_end: float, y0, settings: IntegratorSettings | None = None,
              params=None, core=None) -> np.ndarray:
    """Solve ``y' = rhs(u, y, params)`` from ``u_start`` to ``u_end``.

    Parameters
    ----------
    rhs : callable
        Vector field ``rhs(u, y, params) -> ndarray``.  Numba-compiled fields
        run the compiled stepping loop.
    u_start, u_end : float
        Integration interval (either direction).
    y0 : array_like
        Initial state, finite.
    settings : IntegratorSettings, optional
    params : array_like, optional
        Float parameter vector forwarded to ``rhs``.
    core : callable, optional
        Compiled ``core(x0, x1, y0, params, rtol, atol, max_steps, min_step)``
        that calls :func:`dopri5` with ``rhs`` fixed.  numba cannot cache
        code that receives a function as an argument, so such wrappers keep
        compiled steppers in the on-disk cache across processes.

    Returns
    -------
    ndarray
        State at ``u_end``.

    Raises
    ------
    StiffnessError
        Step size underflow.
    IntegrationError
        Step budget exhausted or non-finite state.
    """
    settings = settings or IntegratorSettings()
    y0 = np.array(y0, dtype=np.float64)
    if y0.ndim != 1 or not np.all(np.isfinite(y0)):
        raise ValueError("initial state must be a finite 1-D vector")
    params = np.zeros(0) if params is None else np.asarray(params, dtype=np.float64)
    args = (float(u_start), float(u_end), y0, params, LOCAL_SAFETY * settings.rel_tol,
            LOCAL_SAFETY * settings.abs_tol, settings.max_steps, settings.min_step)
    if core is not None:
        y, status, steps = core(*args)
    elif is_jitted(rhs):
        y, status, steps = dopri5(rhs, *args)
    else:
        y, status, steps = dopri5.py_func(rhs, *args)
    if status == UNDERFLOW:
        raise StiffnessError(f"step size underflow after {steps} steps between {u_start} and {u_end}")
    if status == MAX_STEPS:
        raise IntegrationError(f"more than {settings.max_steps} steps between {u_start} and {u_end}")
    if status == NONFINITE:
        raise IntegrationError(f"non-finite state between {u_start} and {u_end}")
    return y
