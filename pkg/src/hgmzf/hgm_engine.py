"""Holonomic gradient evaluation of the ZF SNR density.

The normalised density vector ``y = (p, dp/dt, d2p/dt2)`` satisfies

    dy/dt = P(t, a) y            (third-order ODE in t)
    dy/da = Q(t, a) y / a        (first-order system in a)

Along the ray ``a = c t`` both combine into one ODE in ``u``,

    dy/du = [P(u, c u) + Q(u, c u) / u] y,

which is integrated from a small ``u0`` (series anchor, ``a`` tiny) out to the
requested SNR, so the series is never used where it cancels badly.

Internally the ray ODE is solved in ``v = log u`` for the Euler-scaled state
``w = (p, u p', u^2 p'')``: that removes the regular singularity at ``u = 0``
from the step-size control.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .integrator import IntegrationError, IntegratorSettings, dopri5, integrate
from .scenario import DerivedParams
from .series_model import DEFAULT_POLICY, StateVector, TruncationPolicy, initial_states

__all__ = [
    "PdfGrid",
    "HGMError",
    "companion_p",
    "companion_q",
    "combined_rhs",
    "hgm_state",
    "continue_in_t",
    "pdf_hgm",
    "DEFAULT_U0",
    "DEFAULT_SETTINGS",
]

DEFAULT_U0 = 0.1
# largest a at which a ray is anchored; keeps the anchor series free of cancellation
ANCHOR_A = 1.0
DEFAULT_SETTINGS = IntegratorSettings(rel_tol=1e-12, abs_tol=1e-14)
NEGATIVE_CLAMP = 1e-10


class HGMError(ArithmeticError):
    """HGM could not produce a density value."""


@njit(cache=True, nogil=True)
def _p_matrix(t, a, N, NR):
    m = np.zeros((3, 3))
    t2 = t * t
    m[0, 1] = 1.0
    m[1, 2] = 1.0
    m[2, 0] = ((NR - 2.0) * t + (N - 1.0) * (2.0 - NR - a)) / t2
    m[2, 1] = -(t2 + (6.0 - 2.0 * N - NR - a) * t + (N - 1.0) * (N - 2.0)) / t2
    m[2, 2] = -(2.0 * t2 - (2.0 * N - 4.0) * t) / t2
    return m


@njit(cache=True, nogil=True)
def _q_matrix(t, a, N, NR):
    m = np.empty((3, 3))
    t2 = t * t
    N2 = N * N
    m[0, 0] = -1.0
    m[0, 1] = N - t - 2.0
    m[0, 2] = -t
    m[1, 0] = 2.0 - NR + (2.0 - 2.0 * N - NR - a + N * NR + N * a) / t
    m[1, 1] = 4.0 - 2.0 * N - NR - a + t + (2.0 + N2 - 3.0 * N) / t
    m[1, 2] = 1.0 - N + t
    m[2, 0] = (-2.0 + NR
               + (-4.0 + 4.0 * N + 2.0 * NR + a - 2.0 * N * NR - N * a) / t
               + (-4.0 + 6.0 * N + 2.0 * NR + 2.0 * a - 3.0 * N * NR - 3.0 * N * a
                  + N2 * NR + N2 * a - 2.0 * N2) / t2)
    m[2, 1] = 3.0 * N - 4.0 + a - t + (-6.0 - 3.0 * N2 + 9.0 * N) / t + (-4.0 + 8.0 * N - 5.0 * N2 + N2 * N) / t2
    m[2, 2] = -1.0 + 2.0 * N - NR - a - t + (-2.0 - N2 + 3.0 * N) / t
    return m


@njit(cache=True, nogil=True)
def _line_matrix(u, c, N, NR):
    return _p_matrix(u, c * u, N, NR) + _q_matrix(u, c * u, N, NR) / u


@njit(cache=True, nogil=True)
def line_field(u, y, params):
    """``dy/du`` on the ray ``a = c u``; ``params = (c, N, NR)``."""
    return _line_matrix(u, params[0], params[1], params[2]) @ y


@njit(cache=True, nogil=True)
def scaled_line_field(v, w, params):
    """Ray ODE in ``v = log u`` for ``w = (p, u p', u^2 p'')``; ``params = (c, N, NR)``.

    With ``A = P + Q/u`` the field is ``u A_ij u^(i-j) w_j + i w_i``; entries
    are expanded by hand to avoid temporaries in the inner loop.
    """
    u = math.exp(v)
    c = params[0]
    N = params[1]
    NR = params[2]
    a = c * u
    iu = 1.0 / u
    iu2 = iu * iu
    N2 = N * N
    # u * (P + Q/u) = u P + Q, row by row
    b00 = -1.0
    b01 = N - 2.0
    b02 = -u
    b10 = 2.0 - NR + (2.0 - 2.0 * N - NR - a + N * NR + N * a) * iu
    b11 = 4.0 - 2.0 * N - NR - a + u + (2.0 + N2 - 3.0 * N) * iu
    b12 = 2.0 * u + 1.0 - N
    b20 = ((NR - 2.0) * u + (N - 1.0) * (2.0 - NR - a)) * iu + (
        -2.0 + NR
        + (-4.0 + 4.0 * N + 2.0 * NR + a - 2.0 * N * NR - N * a) * iu
        + (-4.0 + 6.0 * N + 2.0 * NR + 2.0 * a - 3.0 * N * NR - 3.0 * N * a
           + N2 * NR + N2 * a - 2.0 * N2) * iu2)
    b21 = -(u * u + (6.0 - 2.0 * N - NR - a) * u + (N - 1.0) * (N - 2.0)) * iu + (
        3.0 * N - 4.0 + a - u + (-6.0 - 3.0 * N2 + 9.0 * N) * iu
        + (-4.0 + 8.0 * N - 5.0 * N2 + N2 * N) * iu2)
    b22 = -(2.0 * u - (2.0 * N - 4.0)) + (
        -1.0 + 2.0 * N - NR - a - u + (-2.0 - N2 + 3.0 * N) * iu)
    out = np.empty(3)
    out[0] = b00 * w[0] + b01 * iu * w[1] + b02 * iu2 * w[2]
    out[1] = u * b10 * w[0] + (b11 + 1.0) * w[1] + b12 * iu * w[2]
    out[2] = u * u * b20 * w[0] + u * b21 * w[1] + (b22 + 2.0) * w[2]
    return out


@njit(cache=True, nogil=True)
def t_field(t, y, params):
    """``dy/dt = P(t, a) y`` at fixed ``a``; ``params = (a, N, NR)``."""
    return _p_matrix(t, params[0], params[1], params[2]) @ y


@njit(cache=True, nogil=True)
def a_field(a, y, params):
    """``dy/da = Q(t, a) y / a`` at fixed ``t``; ``params = (t, N, NR)``."""
    return _q_matrix(params[0], a, params[1], params[2]) @ y / a


@njit(cache=True, nogil=True)
def _ray_core(x0, x1, y0, params, rtol, atol, max_steps, min_step):
    return dopri5(scaled_line_field, x0, x1, y0, params, rtol, atol, max_steps, min_step)


@njit(cache=True, nogil=True)
def _t_core(x0, x1, y0, params, rtol, atol, max_steps, min_step):
    return dopri5(t_field, x0, x1, y0, params, rtol, atol, max_steps, min_step)


def companion_p(t: float, a: float, N: int, NR: int) -> np.ndarray:
    """3x3 companion matrix of the t-ODE; rows 1-2 are the shift ``[0 1 0], [0 0 1]``."""
    if not t > 0:
        raise ValueError("companion matrices need t > 0")
    return _p_matrix(float(t), float(a), float(N), float(NR))


def companion_q(t: float, a: float, N: int, NR: int) -> np.ndarray:
    """3x3 matrix with ``a d/da y = Q(t, a) y``."""
    if not t > 0:
        raise ValueError("companion matrices need t > 0")
    return _q_matrix(float(t), float(a), float(N), float(NR))


def combined_rhs(u: float, c: float, state, N: int, NR: int) -> np.ndarray:
    """``[P(u, c u) + Q(u, c u) / u] y`` for ``y = (p, p', p'')``."""
    if not u > 0:
        raise ValueError("the ray ODE needs u > 0")
    y = state.as_array() if isinstance(state, StateVector) else np.asarray(state, dtype=float)
    return line_field(float(u), y, np.array([float(c), float(N), float(NR)]))


@dataclass(frozen=True, eq=False)
class PdfGrid:
    """Density samples ``pdf[i] = p_gamma1(t[i])`` in linear SNR units."""

    t: np.ndarray
    pdf: np.ndarray
    params: DerivedParams

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        pdf = np.asarray(self.pdf, dtype=float)
        if t.shape != pdf.shape or t.ndim != 1 or t.size == 0:
            raise ValueError("t and pdf must be non-empty 1-D arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("t must be strictly increasing")
        if np.any(pdf < -NEGATIVE_CLAMP):
            raise ValueError("density samples must be non-negative")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "pdf", pdf)

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.t.tolist(), self.pdf.tolist()))

    def __len__(self):
        return self.t.size


def _ray_state(u_end: float, c: float, y0: np.ndarray, u0: float, N: int, NR: int,
               settings: IntegratorSettings) -> np.ndarray:
    """Integrate the scaled ray ODE from ``u0`` to ``u_end``; returns ``(p, p', p'')``."""
    w = y0 * np.array([1.0, u0, u0 * u0])
    scale = np.max(np.abs(w))
    if not scale > 0:
        raise HGMError(f"zero initial state at u0={u0}")
    w = integrate(scaled_line_field, math.log(u0), math.log(u_end), w / scale, settings,
                  params=np.array([c, float(N), float(NR)]), core=_ray_core)
    w = w * scale
    return np.array([w[0], w[1] / u_end, w[2] / (u_end * u_end)])


def hgm_state(t: float, a: float, N: int, NR: int, u0: float | None = None,
              settings: IntegratorSettings = DEFAULT_SETTINGS,
              policy: TruncationPolicy = DEFAULT_POLICY) -> StateVector:
    """Normalised ``(p, p', p'')`` at ``(t, a)`` by HGM along ``a = (a/t) u``.

    The anchor defaults to ``min(DEFAULT_U0, t/10)`` and is moved closer to the
    origin if ``a`` there would exceed ``ANCHOR_A``.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if not a > 0:
        raise ValueError("HGM along the ray needs a > 0; use the Gamma closed form for a = 0")
    if u0 is None:
        u0 = min(DEFAULT_U0, t / 10)
    if not u0 <= t / 10:
        raise ValueError(f"u0={u0} must not exceed t/10={t / 10}")
    c = a / t
    u0 = min(u0, ANCHOR_A / c)
    y0 = initial_states(u0, [c], N, NR, policy)[0]
    y = _ray_state(t, c, y0, u0, N, NR, settings)
    return StateVector(float(y[0]), float(y[1]), float(y[2]), t, a)


def continue_in_t(state: StateVector, t_end: float, N: int, NR: int,
                  settings: IntegratorSettings = DEFAULT_SETTINGS) -> StateVector:
    """Carry a known state at fixed ``a`` from ``state.t`` to ``t_end`` with ``dy/dt = P y``."""
    if not (state.t > 0 and t_end > 0):
        raise ValueError("t must stay positive")
    y = integrate(t_field, state.t, t_end, state.as_array(), settings,
                  params=np.array([state.a, float(N), float(NR)]), core=_t_core)
    return StateVector(float(y[0]), float(y[1]), float(y[2]), t_end, state.a)


def _threads(workers: int | None) -> int:
    if workers is None:
        try:
            workers = int(os.environ.get("HGM_MIMO_THREADS", "1"))
        except ValueError:
            workers = 1
    return max(1, workers)


def pdf_hgm(params: DerivedParams, t_grid, u0: float | None = None,
            settings: IntegratorSettings = DEFAULT_SETTINGS,
            policy: TruncationPolicy = DEFAULT_POLICY,
            workers: int | None = None) -> PdfGrid:
    """SNR density ``p_gamma1(t, a)`` on ``t_grid`` (linear SNR units).

    Every grid point is integrated on its own ray from ``u0``: with
    ``u_m = t / Gamma_1`` and ``c = a / u_m`` the ray passes through
    ``(u_m, a)``, and the result is rescaled by ``1 / Gamma_1``.

    Parameters
    ----------
    params : DerivedParams
        Must have ``noncentrality > 0``.
    t_grid : array_like
        Strictly increasing positive SNR values.
    u0 : float, optional
        Normalised anchor for every ray, at most ``min(u_m) / 10``.  By
        default each ray gets its own ``min(DEFAULT_U0, u_m / 10)``.  Either way a
        ray whose anchor would sit above ``a = ANCHOR_A`` starts further in,
        at ``u = ANCHOR_A / c``.  Anchors near the origin cost accuracy:
        the ray field has ``1/u`` terms that cancel near the origin.
    workers : int, optional
        Threads for per-point integration (default ``$HGM_MIMO_THREADS`` or 1).
        Results do not depend on the thread count.

    Raises
    ------
    ValueError
        ``a <= 0``, non-positive grid values or ``u0`` above ``min(u_m)/10``.
    HGMError
        Integration failed at a grid point, or produced a clearly negative density.
    """
    a = params.noncentrality
    if not a > 0:
        raise ValueError("pdf_hgm needs a > 0; use measures.rayleigh_pdf for a = 0")
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be strictly increasing and positive")
    g1 = params.gamma1
    N, NR = params.dof, params.n_rx
    um = t / g1
    if u0 is None:
        u0 = np.minimum(DEFAULT_U0, um / 10)
    elif not u0 <= um[0] / 10:
        raise ValueError(f"u0={u0} exceeds min(t)/(10 Gamma_1)={um[0] / 10}")
    c = a / um
    starts = np.minimum(u0, ANCHOR_A / c)
    y0 = np.empty((t.size, 3))
    for s in np.unique(starts):
        sel = starts == s
        y0[sel] = initial_states(float(s), c[sel], N, NR, policy)

    def one(i):
        try:
            return _ray_state(float(um[i]), float(c[i]), y0[i], float(starts[i]), N, NR, settings)[0]
        except IntegrationError as exc:
            raise HGMError(f"HGM failed at t={t[i]!r}: {exc}") from exc

    n_threads = _threads(workers)
    if n_threads > 1 and t.size > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            p = np.array(list(pool.map(one, range(t.size))))
    else:
        p = np.array([one(i) for i in range(t.size)])
    bad = np.flatnonzero(p < -NEGATIVE_CLAMP * max(1.0, np.max(np.abs(p))))
    if bad.size:
        raise HGMError(f"negative density {p[bad[0]]!r} at t={t[bad[0]]!r}")
    p = np.maximum(p, 0.0) / g1
    return PdfGrid(t, p, params)
