"""Monte Carlo reference for the stream-1 ZF SNR under Rician-Rayleigh fading.

Channels are ``H = H_d + H_r`` where only the first column of ``H_d`` is
non-zero and the rows of ``H_r`` are i.i.d. ``CN(0, R_T / (K + 1))``.
Gaussian variates come from Box-Muller on a Philox counter-based stream; chunk
``i`` of a run uses the key ``seed ^ i``, so results do not depend on how
chunks are scheduled.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .scenario import CorrelationMatrix, ScenarioConfig, db_to_linear

__all__ = [
    "ChannelSample",
    "EmpiricalDistribution",
    "SimulationResult",
    "channel_factors",
    "draw_channel",
    "draw_channels",
    "zf_snr",
    "zf_snr_batch",
    "simulate",
    "ks_distance",
]

CHUNK = 1 << 16
MIN_SAMPLES = 10_000
# Gram matrices with eigenvalue ratio below this are treated as singular
SINGULAR_RATIO = 1e-13
MAX_REJECT_FRACTION = 1e-6


@dataclass(frozen=True)
class ChannelSample:
    h: np.ndarray

    def __post_init__(self):
        if self.h.ndim != 2 or not np.all(np.isfinite(self.h)):
            raise ValueError("channel sample must be a finite 2-D matrix")


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Histogram of SNR samples.

    The last bin runs from the 0.9999 quantile to the sample maximum so that
    ``counts.sum() == n_samples``.
    """

    bin_edges: np.ndarray
    counts: np.ndarray
    n_samples: int

    def __post_init__(self):
        if self.bin_edges.size != self.counts.size + 1:
            raise ValueError("need len(bin_edges) == len(counts) + 1")
        if np.any(np.diff(self.bin_edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if int(self.counts.sum()) != self.n_samples:
            raise ValueError("counts must sum to n_samples")

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def pdf(self) -> np.ndarray:
        return self.counts / (self.n_samples * np.diff(self.bin_edges))

    @property
    def cdf(self) -> np.ndarray:
        """Empirical c.d.f. at the right bin edges."""
        return np.cumsum(self.counts) / self.n_samples

    def merge(self, other: "EmpiricalDistribution") -> "EmpiricalDistribution":
        if not np.array_equal(self.bin_edges, other.bin_edges):
            raise ValueError("cannot merge histograms with different edges")
        return EmpiricalDistribution(self.bin_edges, self.counts + other.counts,
                                     self.n_samples + other.n_samples)


@dataclass(frozen=True)
class SimulationResult:
    """Sorted SNR samples of one scenario plus their histogram."""

    samples: np.ndarray
    histogram: EmpiricalDistribution
    gamma_s: float
    rejected: int
    seed: int

    @property
    def n_samples(self) -> int:
        return self.samples.size

    def outage(self, threshold: float) -> float:
        """Fraction of samples at or below ``threshold``."""
        return np.searchsorted(self.samples, threshold, side="right") / self.samples.size

    def capacity(self) -> float:
        """Sample mean of ``log2(1 + gamma_1)``."""
        return float(np.mean(np.log2(1.0 + self.samples)))

    def rescaled(self, gamma_s: float) -> np.ndarray:
        """Samples for another symbol SNR (the SNR scales linearly with it)."""
        return self.samples * (gamma_s / self.gamma_s)


def channel_factors(cfg: ScenarioConfig, rt: CorrelationMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Mean matrix ``H_d`` and a factor ``L`` with ``L L^H = R_T / (K + 1)``.

    ``H_d`` has the all-ones first column scaled to squared norm
    ``K / (K + 1) N_R N_T``.
    """
    k = db_to_linear(cfg.k_factor_db)
    hd = np.zeros((cfg.n_rx, cfg.n_tx), dtype=complex)
    hd[:, 0] = math.sqrt(k / (k + 1.0) * cfg.n_tx)
    cov = rt.entries / (k + 1.0)
    try:
        factor = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        factor = v * np.sqrt(np.clip(w, 0.0, None))
    return hd, factor


def _complex_normal(gen: np.random.Generator, shape) -> np.ndarray:
    # Box-Muller: |z|^2 = -log(U1) ~ Exp(1), phase uniform
    u1 = gen.random(shape)
    u2 = gen.random(shape)
    return np.sqrt(-np.log1p(-u1)) * np.exp(2j * np.pi * u2)


def _generator(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(int(seed) ^ int(index)) & (2**64 - 1)))


def draw_channels(cfg: ScenarioConfig, rt: CorrelationMatrix, n: int, seed: int,
                  index: int = 0) -> np.ndarray:
    """``n`` channel matrices, shape ``(n, N_R, N_T)``, from stream ``seed ^ index``."""
    hd, factor = channel_factors(cfg, rt)
    z = _complex_normal(_generator(seed, index), (n, cfg.n_rx, cfg.n_tx))
    # rows h^T with h ~ CN(0, L L^H)  ->  row = z_row @ L^T
    return hd + z @ factor.T


def draw_channel(cfg: ScenarioConfig, rt: CorrelationMatrix, seed: int) -> ChannelSample:
    return ChannelSample(draw_channels(cfg, rt, 1, seed)[0])


def zf_snr_batch(h: np.ndarray, gamma_s: float, stream: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """``Gamma_s / [(H^H H)^{-1}]_{kk}`` per matrix, and a mask of accepted samples."""
    gram = np.conj(np.swapaxes(h, -1, -2)) @ h
    ev = np.linalg.eigvalsh(gram)
    ok = (ev[:, 0] > SINGULAR_RATIO * ev[:, -1]) & np.isfinite(ev).all(axis=1)
    snr = np.zeros(h.shape[0])
    if np.any(ok):
        inv = np.linalg.inv(gram[ok])
        snr[ok] = gamma_s / inv[:, stream, stream].real
    return snr, ok


def zf_snr(sample: ChannelSample, gamma_s: float, stream: int = 0) -> float:
    """ZF SNR of one stream (0-based index).

    Raises
    ------
    np.linalg.LinAlgError
        ``H^H H`` is numerically singular.
    """
    if not 0 <= stream < sample.h.shape[1]:
        raise ValueError(f"stream {stream} out of range")
    snr, ok = zf_snr_batch(sample.h[None], gamma_s, stream)
    if not ok[0]:
        raise np.linalg.LinAlgError("H^H H is numerically singular")
    return float(snr[0])


def _chunk(cfg, rt, seed, index, n, gamma_s):
    snr, ok = zf_snr_batch(draw_channels(cfg, rt, n, seed, index), gamma_s)
    return snr[ok], int(n - ok.sum())


def _workers(workers):
    if workers is None:
        workers = int(os.environ.get("HGM_MIMO_THREADS", "0")) or (os.cpu_count() or 1)
    return max(1, int(workers))


def simulate(cfg: ScenarioConfig, rt: CorrelationMatrix, n_samples: int = 1_000_000,
             bins: int = 200, seed: int = 0, workers: int | None = None) -> SimulationResult:
    """Draw ``n_samples`` channels and collect the stream-1 ZF SNR.

    Chunks of ``CHUNK`` channels are drawn independently, possibly in
    parallel, and concatenated in chunk order.
    """
    if n_samples < MIN_SAMPLES:
        raise ValueError(f"n_samples must be at least {MIN_SAMPLES}")
    if bins < 1:
        raise ValueError("bins must be positive")
    gamma_s = db_to_linear(cfg.gamma_s_db)
    sizes = [min(CHUNK, n_samples - i * CHUNK) for i in range(-(-n_samples // CHUNK))]
    jobs = [(cfg, rt, seed, i, n, gamma_s) for i, n in enumerate(sizes)]
    nw = _workers(workers)
    if nw == 1:
        parts = [_chunk(*j) for j in jobs]
    else:
        with ThreadPoolExecutor(nw) as ex:
            parts = list(ex.map(lambda j: _chunk(*j), jobs))
    samples = np.sort(np.concatenate([p[0] for p in parts]))
    rejected = sum(p[1] for p in parts)
    if rejected > MAX_REJECT_FRACTION * n_samples + 1:
        raise ArithmeticError(f"{rejected} of {n_samples} channel draws had singular Gram matrices")

    top = float(np.quantile(samples, 0.9999))
    edges = np.linspace(0.0, top, bins + 1)
    if samples[-1] > top:
        edges = np.append(edges, samples[-1])
    counts, _ = np.histogram(samples, edges)
    hist = EmpiricalDistribution(edges, counts, samples.size)
    return SimulationResult(samples, hist, gamma_s, rejected, seed)


def ks_distance(sorted_samples: np.ndarray, cdf) -> float:
    """Kolmogorov-Smirnov distance between the samples and a vectorised c.d.f."""
    x = np.asarray(sorted_samples)
    n = x.size
    f = np.asarray(cdf(x))
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))
