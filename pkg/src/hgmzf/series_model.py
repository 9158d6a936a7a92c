"""Truncated-series evaluation of the normalised ZF SNR law.

With ``Gamma_1 = 1`` the SNR density is an infinite mixture of Gamma
densities,

    p(t, a) = e^{-t} sum_n A_n(a) sum_m C(n, m) (-1)^m t^{N+n-m-1} / (N+n-m-1)!,

with ``A_n(a) = (N)_n / (NR)_n a^n / n!``.  Writing ``f = p e^t = t^{N-1} g``
gives series for every t-derivative of ``g``, hence of ``p``.  The alternating
inner sums cancel more and more as ``a`` and ``t`` grow; the cancellation
factor is tracked and a result is flagged unconverged once it exceeds
``TruncationPolicy.max_cancellation``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .special_fn import SeriesError, SeriesResult, hyp1f1

__all__ = [
    "TruncationPolicy",
    "StateVector",
    "mgf_closed",
    "pdf_series",
    "pdf_boundary",
    "pdf_derivatives",
    "pdf_derivatives_series",
    "initial_state",
    "initial_states",
]

LOG_SPACE_ORDER = 150


@dataclass(frozen=True)
class TruncationPolicy:
    """Stopping and breakdown rules for the density series.

    Attributes
    ----------
    rel_tol : float
        Stop after two consecutive outer terms below ``rel_tol * |sum|``.
    n_max : int
        Hard cap on outer terms.
    overflow_guard : float
        Abort once the running sum of term magnitudes exceeds this.
    max_cancellation : float
        Largest tolerated ``sum|terms| / |sum|``.  Beyond ``1e13`` round-off
        leaves fewer than about three significant digits in double
        precision, and the result is reported as not converged.
    """

    rel_tol: float = 1e-13
    n_max: int = 10_000
    overflow_guard: float = 1e300
    max_cancellation: float = 1e13

    def __post_init__(self):
        if not 0 < self.rel_tol <= 1e-3:
            raise ValueError("rel_tol must lie in (0, 1e-3]")
        if self.n_max < 50:
            raise ValueError("n_max must be at least 50")
        if not self.max_cancellation >= 1:
            raise ValueError("max_cancellation must be >= 1")


DEFAULT_POLICY = TruncationPolicy()


@dataclass(frozen=True)
class StateVector:
    """``(p, dp/dt, d2p/dt2)`` at one point ``(t, a)``."""

    p: float
    p1: float
    p2: float
    t: float
    a: float
    converged: tuple[bool, bool, bool] = field(default=(True, True, True))

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.p, self.p1, self.p2)):
            raise ArithmeticError(f"non-finite density state at t={self.t}, a={self.a}")

    def as_array(self) -> np.ndarray:
        return np.array([self.p, self.p1, self.p2])


def mgf_closed(s: float, a: float, N: int, NR: int, gamma1: float = 1.0) -> float:
    """``E[exp(s gamma_1)] = (1 - Gamma_1 s)^-N 1F1(N; NR; a Gamma_1 s / (1 - Gamma_1 s))``."""
    x = gamma1 * s
    if not x < 1:
        raise ValueError(f"m.g.f. is defined only for s < 1/gamma1, got s={s}")
    return (1.0 - x) ** (-N) * hyp1f1(N, NR, a * x / (1.0 - x))


def _log_outer_prefactor(N, NR, n):
    # log((N)_n / (NR)_n / n!)
    return gammaln(N + n) - gammaln(N) - gammaln(NR + n) + gammaln(NR) - gammaln(n + 1)


def _inner_sums(t: float, N: int, n: int, q: int) -> tuple[float, float]:
    """Signed and absolute ``sum_{r=q}^n C(n,r) (-1)^{n-r} r!/((r-q)! (N-1+r)!) t^{r-q}``."""
    if N + n - 1 <= LOG_SPACE_ORDER:
        # c_r by ratio recursion from c_q = n! / ((n-q)! (N-1+q)!)
        c = math.exp(gammaln(n + 1) - gammaln(n - q + 1) - gammaln(N + q))
        signed = 0.0
        absolute = 0.0
        sign = -1.0 if (n - q) % 2 else 1.0
        for r in range(q, n + 1):
            signed += sign * c
            absolute += c
            c *= (n - r) * t / ((r + 1 - q) * (N + r))
            sign = -sign
        return signed, absolute
    r = np.arange(q, n + 1)
    logc = (gammaln(n + 1) - gammaln(n - r + 1) - gammaln(r - q + 1) - gammaln(N + r)
            + (r - q) * math.log(t))
    shift = logc.max()
    w = np.exp(logc - shift)
    signs = np.where((n - r) % 2, -1.0, 1.0)
    scale = math.exp(shift) if shift < 700 else math.inf
    return float(np.dot(signs, w)) * scale, float(w.sum()) * scale


def _g_series(t: float, a: np.ndarray, N: int, NR: int, q: int, policy: TruncationPolicy):
    """q-th t-derivative of ``g(t, a)`` for every entry of ``a`` (same ``t``).

    Returns ``(values, abs_sums, terms_used, stopped, last_term)``; ``stopped``
    is False when ``n_max`` or the overflow guard ended the summation.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    total = np.zeros_like(a)
    abs_total = np.zeros_like(a)
    last = np.zeros_like(a)
    if np.all(a == 0):
        if q == 0:
            v = 1.0 / math.factorial(N - 1)
            return total + v, abs_total + v, 1, True, last
        return total, abs_total, 0, True, last
    with np.errstate(divide="ignore"):
        loga = np.log(a)
    small = np.zeros(a.shape, dtype=int)
    prev = np.full(a.shape, np.inf)
    n = q
    stopped = False
    while n - q < policy.n_max:
        signed, absolute = _inner_sums(t, N, n, q)
        with np.errstate(over="ignore", invalid="ignore"):
            if n == 0:
                A = np.ones_like(a)
            else:
                A = np.exp(_log_outer_prefactor(N, NR, n) + n * loga)
            term = A * signed
            mag = A * absolute
        total = total + term
        abs_total = abs_total + mag
        last = mag
        n += 1
        if not (np.all(np.isfinite(abs_total)) and abs_total.max() < policy.overflow_guard):
            break
        tiny = (mag <= policy.rel_tol * np.abs(total)) & (mag <= prev)
        small = np.where(tiny, small + 1, 0)
        prev = mag
        if np.all(small >= 2):
            stopped = True
            break
    return total, abs_total, n - q, stopped, last


def _converged(value, abs_sum, stopped, policy):
    if not stopped or not math.isfinite(value):
        return False
    if value == 0:
        return abs_sum == 0
    return abs_sum <= policy.max_cancellation * abs(value)


def _falling(x: int, k: int) -> float:
    # x (x-1) ... (x-k+1); zero when k > x for non-negative integer x
    out = 1.0
    for j in range(k):
        out *= x - j
    return out


def pdf_derivatives(t: float, a, N: int, NR: int, order: int = 2,
                    policy: TruncationPolicy = DEFAULT_POLICY) -> list:
    """Series values of ``d^q p / dt^q`` for ``q = 0..order``.

    ``a`` may be a scalar (returns a list of :class:`SeriesResult`) or an
    array sharing the same ``t`` (returns a list of per-order lists).
    Uses ``f = t^{N-1} g`` with Leibniz' rule; the falling factorial
    ``(N-1)(N-2)...`` vanishes for ``k > N-1``, which reproduces the special
    forms for ``N = 1, 2``.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    scalar = np.ndim(a) == 0
    a_arr = np.atleast_1d(np.asarray(a, dtype=float))
    if np.any(a_arr < 0):
        raise ValueError("a must be non-negative")
    g = [_g_series(t, a_arr, N, NR, q, policy) for q in range(order + 1)]

    # f^(i) = sum_k C(i,k) (N-1)_k^falling t^{N-1-k} g^(i-k)
    f_val, f_abs = [], []
    for i in range(order + 1):
        v = np.zeros_like(a_arr)
        m = np.zeros_like(a_arr)
        for k in range(i + 1):
            ff = _falling(N - 1, k)
            if ff == 0.0:
                continue
            coef = math.comb(i, k) * ff * t ** (N - 1 - k)
            v = v + coef * g[i - k][0]
            m = m + abs(coef) * g[i - k][1]
        f_val.append(v)
        f_abs.append(m)

    e = math.exp(-t)
    results = []
    for q in range(order + 1):
        v = np.zeros_like(a_arr)
        m = np.zeros_like(a_arr)
        for i in range(q + 1):
            coef = math.comb(q, i) * (-1.0) ** (q - i)
            v = v + coef * f_val[i]
            m = m + abs(coef) * f_abs[i]
        v *= e
        m *= e
        terms = max(g[i][2] for i in range(q + 1))
        stopped = all(g[i][3] for i in range(q + 1))
        last = e * max(np.max(g[i][4]) for i in range(q + 1)) * max(1.0, t ** (N - 1))
        per_a = []
        for j in range(a_arr.size):
            val, ab = float(v[j]), float(m[j])
            cond = ab / abs(val) if val != 0 else (1.0 if ab == 0 else math.inf)
            per_a.append(SeriesResult(val, terms, _converged(val, ab, stopped, policy), last, cond))
        results.append(per_a[0] if scalar else per_a)
    return results


def pdf_series(t: float, a: float, N: int, NR: int,
               policy: TruncationPolicy = DEFAULT_POLICY) -> SeriesResult:
    """Normalised density ``p(t, a)`` (``Gamma_1 = 1``) by series truncation.

    Non-convergence, including cancellation beyond
    ``policy.max_cancellation``, is reported through ``converged=False``.
    """
    return pdf_derivatives(t, a, N, NR, 0, policy)[0]


def pdf_boundary(a: float, N: int, NR: int) -> float:
    """``p(0+, a)``: ``1F1(N; NR; -a)`` when ``N = 1``, else 0."""
    if a < 0:
        raise ValueError("a must be non-negative")
    if N == 1:
        return hyp1f1(N, NR, -a)
    return 0.0


def pdf_derivatives_series(t: float, a: float, N: int, NR: int,
                           policy: TruncationPolicy = DEFAULT_POLICY) -> StateVector:
    """``(p, p', p'')`` at ``(t, a)`` from the derivative series."""
    p0, p1, p2 = pdf_derivatives(t, a, N, NR, 2, policy)
    return StateVector(p0.value, p1.value, p2.value, t, a, (p0.converged, p1.converged, p2.converged))


def initial_states(u0: float, c, N: int, NR: int,
                   policy: TruncationPolicy = DEFAULT_POLICY) -> np.ndarray:
    """HGM anchors at ``(u0, c u0)`` for an array of slopes ``c``; shape ``(len(c), 3)``.

    Raises
    ------
    SeriesError
        If any component fails to converge.
    """
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if not u0 > 0:
        raise ValueError("u0 must be positive")
    if np.any(c < 0):
        raise ValueError("slopes must be non-negative")
    comps = pdf_derivatives(u0, c * u0, N, NR, 2, policy)
    out = np.empty((c.size, 3))
    for q in range(3):
        for j, r in enumerate(comps[q]):
            if not r.converged:
                raise SeriesError(f"initial-condition series for p^({q}) failed at u0={u0}, a={c[j] * u0}")
            out[j, q] = r.value
    return out


def initial_state(u0: float, c: float, N: int, NR: int,
                  policy: TruncationPolicy = DEFAULT_POLICY) -> StateVector:
    """Anchor ``(p, p', p'')`` at the on-line point ``(u0, c u0)``."""
    y = initial_states(u0, [c], N, NR, policy)[0]
    return StateVector(float(y[0]), float(y[1]), float(y[2]), u0, c * u0)
