"""Outage probability, ergodic capacity and c.d.f. from an SNR density.

Densities produced by HGM are integrated with the rectangle (midpoint) rule;
the Rayleigh-only closed forms use adaptive quadrature.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize
from scipy.special import gammaln

from .hgm_engine import DEFAULT_SETTINGS, PdfGrid, pdf_hgm
from .integrator import IntegratorSettings
from .scenario import DerivedParams
from .series_model import pdf_boundary

__all__ = [
    "OutageSpec",
    "CapacityResult",
    "QuadratureError",
    "cdf_from_pdf",
    "outage_probability",
    "ergodic_capacity",
    "rayleigh_pdf",
    "rayleigh_outage",
    "rayleigh_capacity",
    "tail_bound",
    "pdf_source",
    "DensityModel",
    "capacity_cutoff",
]

PdfSource = Callable[[np.ndarray], np.ndarray]

DEFAULT_RESOLUTION = 2000
TAIL_CAP = 2.0 ** 20


class QuadratureError(ArithmeticError):
    """Numerical integration did not reach the requested accuracy."""


@dataclass(frozen=True)
class OutageSpec:
    threshold_snr: float

    def __post_init__(self):
        if not (self.threshold_snr > 0 and math.isfinite(self.threshold_snr)):
            raise ValueError("outage threshold must be positive and finite")


@dataclass(frozen=True)
class CapacityResult:
    """Ergodic capacity in bits per channel use.

    ``tail_mass_dropped`` bounds the probability mass beyond the integration
    cut-off ``t_max``.
    """

    bpcu: float
    tail_mass_dropped: float
    t_max: float = math.inf


def rayleigh_pdf(t, N: int, gamma1: float):
    """Gamma density ``t^{N-1} e^{-t/Gamma_1} / ((N-1)! Gamma_1^N)``."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = (N - 1) * np.log(t) - t / gamma1 - gammaln(N) - N * math.log(gamma1)
    out = np.exp(logp)
    if N == 1:
        out = np.where(t == 0, 1.0 / gamma1, out)
    out = np.where(t < 0, 0.0, out)
    return out if out.ndim else float(out)


def rayleigh_outage(threshold: float, N: int, gamma1: float) -> float:
    """``P(gamma_1 <= threshold)`` for Rayleigh fading, by adaptive quadrature."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    if math.isinf(threshold):
        return 1.0
    val, err = integrate.quad(lambda t: rayleigh_pdf(t, N, gamma1), 0.0, threshold,
                              epsabs=1e-14, epsrel=1e-12, limit=200,
                              points=[min(threshold, (N - 1) * gamma1)] if N > 1 else None)
    if err > 1e-9:
        raise QuadratureError(f"outage quadrature error estimate {err:g}")
    return min(1.0, val)


def rayleigh_capacity(N: int, gamma1: float) -> float:
    """``E[log2(1 + gamma_1)]`` for Rayleigh fading, by adaptive quadrature."""
    def f(t):
        return math.log1p(t) * rayleigh_pdf(t, N, gamma1)

    mode = max((N - 1) * gamma1, gamma1)
    v1, e1 = integrate.quad(f, 0.0, mode, epsabs=1e-14, epsrel=1e-12, limit=200)
    v2, e2 = integrate.quad(f, mode, math.inf, epsabs=1e-14, epsrel=1e-12, limit=200)
    if e1 + e2 > 1e-9 * max(1.0, v1 + v2):
        raise QuadratureError(f"capacity quadrature error estimate {e1 + e2:g}")
    return (v1 + v2) / math.log(2)


def tail_bound(t: float, params: DerivedParams) -> float:
    """Chernoff bound on ``P(gamma_1 > t)``.

    Since ``(N)_n <= (NR)_n`` the m.g.f. is dominated by the noncentral one,
    ``M(s) <= (1 - s)^-N exp(a s / (1 - s))`` (normalised units), so
    ``P(gamma > T) <= min_{0<s<1} exp(-s T) (1 - s)^-N exp(a s / (1 - s))``.
    """
    T = t / params.gamma1
    N, a = params.dof, params.noncentrality
    if T <= N + a:
        return 1.0

    def log_bound(s):
        return -s * T - N * math.log1p(-s) + a * s / (1.0 - s)

    res = optimize.minimize_scalar(log_bound, bounds=(0.0, 1.0 - 1e-12), method="bounded",
                                   options={"xatol": 1e-12})
    return min(1.0, math.exp(min(res.fun, 0.0)))


class DensityModel:
    """Vectorised SNR density ``t -> p_gamma1(t)`` of one scenario.

    Uses HGM when ``a > 0`` and the Gamma closed form when ``a = 0``.
    Values of the normalised density ``p(u, a)`` are memoised, and
    :meth:`rescaled` shares them between scenarios that differ only in
    ``Gamma_1`` (a ``Gamma_b`` sweep).
    """

    def __init__(self, params: DerivedParams, settings: IntegratorSettings = DEFAULT_SETTINGS,
                 workers: int | None = None, _memo: dict | None = None):
        self.params = params
        self.settings = settings
        self.workers = workers
        self._memo = {} if _memo is None else _memo
        self._unit = dataclasses.replace(params, gamma1=1.0)

    @property
    def method(self) -> str:
        return "hgm" if self.params.noncentrality > 0 else "rayleigh"

    def rescaled(self, params: DerivedParams) -> "DensityModel":
        p = self.params
        if (params.dof, params.n_rx, params.noncentrality) != (p.dof, p.n_rx, p.noncentrality):
            raise ValueError("rescaled model must share N, N_R and a")
        return DensityModel(params, self.settings, self.workers, self._memo)

    def normalized(self, u) -> np.ndarray:
        """``p(u, a)`` with ``Gamma_1 = 1``."""
        u = np.asarray(u, dtype=float)
        if self.params.noncentrality == 0:
            return np.asarray(rayleigh_pdf(u, self.params.dof, 1.0))
        flat = u.ravel()
        todo = np.unique(flat[[x not in self._memo for x in flat.tolist()]]) if flat.size else flat
        todo = todo[todo > 0]
        if todo.size:
            vals = pdf_hgm(self._unit, todo, settings=self.settings, workers=self.workers).pdf
            self._memo.update(zip(todo.tolist(), vals.tolist()))
        p0 = pdf_boundary(self.params.noncentrality, self.params.dof, self.params.n_rx)
        out = np.array([self._memo[x] if x > 0 else (p0 if x == 0 else 0.0) for x in flat.tolist()])
        return out.reshape(u.shape)

    def __call__(self, t) -> np.ndarray:
        g1 = self.params.gamma1
        return self.normalized(np.asarray(t, dtype=float) / g1) / g1


def pdf_source(params: DerivedParams, settings: IntegratorSettings = DEFAULT_SETTINGS,
               workers: int | None = None) -> DensityModel:
    """Shorthand for :class:`DensityModel`."""
    return DensityModel(params, settings, workers)


def cdf_from_pdf(grid: PdfGrid) -> np.ndarray:
    """Running rectangle-rule c.d.f. at the grid points; shape ``(len(grid), 2)``.

    Each panel ``[t_{i-1}, t_i]`` contributes ``pdf(t_{i-1}) (t_i - t_{i-1})``;
    the first panel starts at ``t = 0`` with the boundary value ``p(0+)``
    (zero unless ``N = 1``).
    """
    t, p = grid.t, grid.pdf
    if np.any(np.diff(t) <= 0):
        raise ValueError("grid must be strictly increasing")
    prm = grid.params
    p0 = pdf_boundary(prm.noncentrality, prm.dof, prm.n_rx) / prm.gamma1
    left = np.concatenate(([p0], p[:-1]))
    width = np.diff(np.concatenate(([0.0], t)))
    cdf = np.cumsum(left * width)
    return np.column_stack((t, cdf))


def _midpoints(lo: float, hi: float, n: int) -> tuple[np.ndarray, float]:
    h = (hi - lo) / n
    return lo + h * (np.arange(n) + 0.5), h


def outage_probability(source: PdfSource, spec: OutageSpec | float,
                       resolution: int = DEFAULT_RESOLUTION) -> float:
    """``P(gamma_1 <= threshold)`` by the midpoint rectangle rule on ``[0, threshold]``."""
    if not isinstance(spec, OutageSpec):
        spec = OutageSpec(float(spec))
    if resolution < 100:
        raise ValueError("resolution must be at least 100 panels")
    t, h = _midpoints(0.0, spec.threshold_snr, resolution)
    val = float(np.sum(source(t)) * h)
    if val > 1 + 1e-3:
        raise QuadratureError(f"outage integral {val} exceeds one")
    return min(max(val, 0.0), 1.0)


def capacity_cutoff(params: DerivedParams, tail_tol: float) -> tuple[float, float]:
    """Normalised cut-off ``T = (N + a) 2^k`` (``t_max = Gamma_1 T``) and its tail bound.

    ``k`` is the smallest non-negative integer whose :func:`tail_bound` is
    below ``tail_tol``.
    """
    T = float(params.dof + params.noncentrality)
    while True:
        tail = tail_bound(T * params.gamma1, params)
        if tail < tail_tol:
            return T, tail
        if T >= TAIL_CAP:
            raise QuadratureError(f"tail mass {tail:g} above {tail_tol:g} at the cut-off cap")
        T *= 2.0


def ergodic_capacity(source: PdfSource, params: DerivedParams | None = None,
                     resolution: int = DEFAULT_RESOLUTION, tail_tol: float = 1e-6) -> CapacityResult:
    """``E[log2(1 + gamma_1)]`` by the midpoint rule on ``[0, t_max]``.

    ``t_max / Gamma_1`` doubles from ``N + a`` until :func:`tail_bound` drops
    below ``tail_tol``.  ``params`` may be omitted when ``source`` is a
    :class:`DensityModel`.
    """
    if params is None:
        if not isinstance(source, DensityModel):
            raise TypeError("params are required unless source is a DensityModel")
        params = source.params
    if not 0 < tail_tol <= 1e-6:
        raise ValueError("tail_tol must lie in (0, 1e-6]")
    if resolution < 100:
        raise ValueError("resolution must be at least 100 panels")
    T, tail = capacity_cutoff(params, tail_tol)
    u, h = _midpoints(0.0, T, resolution)
    g1 = params.gamma1
    if isinstance(source, DensityModel):
        dens = source.normalized(u)
    else:
        dens = np.asarray(source(u * g1)) * g1
    val = float(np.sum(np.log2(1.0 + g1 * u) * dens) * h)
    return CapacityResult(max(val, 0.0), tail, T * g1)
