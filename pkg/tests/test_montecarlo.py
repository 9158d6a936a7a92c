import math

import numpy as np
import pytest
from scipy import stats

from hgmzf.montecarlo import (
    ChannelSample,
    EmpiricalDistribution,
    _generator,
    draw_channel,
    draw_channels,
    ks_distance,
    simulate,
    zf_snr,
    zf_snr_batch,
)
from hgmzf.scenario import ScenarioConfig, build_correlation, db_to_linear, linear_to_db

from .conftest import scenario_params


def test_deterministic_limit():
    cfg = ScenarioConfig(k_factor_db=60.0)
    rt = build_correlation(cfg.correlation, cfg.n_tx)
    h = draw_channels(cfg, rt, 1000, seed=3)
    norms = np.sum(np.abs(h) ** 2, axis=(1, 2))
    assert np.var(h[:, :, 0]) < 1e-4
    assert np.mean(norms) == pytest.approx(cfg.n_rx * cfg.n_tx, rel=0.01)


def test_rayleigh_energy():
    cfg = ScenarioConfig(k_factor_db=-math.inf)
    rt = build_correlation(cfg.correlation, cfg.n_tx)
    h = draw_channels(cfg, rt, 100_000, seed=11)
    assert np.mean(np.sum(np.abs(h) ** 2, axis=(1, 2))) == pytest.approx(12.0, rel=0.01)


def test_rayleigh_column_covariance():
    cfg = ScenarioConfig(k_factor_db=-math.inf)
    rt = build_correlation(cfg.correlation, cfg.n_tx)
    rows = draw_channels(cfg, rt, 50_000, seed=5).reshape(-1, cfg.n_tx)
    cov = rows.conj().T @ rows / rows.shape[0]
    assert np.max(np.abs(cov - np.eye(2))) <= 0.02


def test_correlated_rows():
    cfg, rt, _ = scenario_params(-math.inf, "laplacian")
    rows = draw_channels(cfg, rt, 50_000, seed=5).reshape(-1, cfg.n_tx)
    cov = rows.T @ rows.conj() / rows.shape[0]
    assert np.max(np.abs(cov - rt.entries)) <= 0.02


def test_mean_column():
    cfg = ScenarioConfig(k_factor_db=7.0)
    rt = build_correlation(cfg.correlation, cfg.n_tx)
    h = draw_channels(cfg, rt, 50_000, seed=2)
    k = db_to_linear(7.0)
    mean = h.mean(axis=0)
    assert np.sum(np.abs(mean[:, 0]) ** 2) == pytest.approx(k / (k + 1) * 12, rel=0.01)
    assert np.max(np.abs(mean[:, 1])) < 0.02


def test_draw_channel_deterministic():
    cfg = ScenarioConfig()
    rt = build_correlation(cfg.correlation, 2)
    assert np.array_equal(draw_channel(cfg, rt, 7).h, draw_channel(cfg, rt, 7).h)
    assert not np.array_equal(draw_channel(cfg, rt, 7).h, draw_channel(cfg, rt, 8).h)


def test_streams_independent_of_chunking():
    assert _generator(5, 2).random() != _generator(5, 3).random()
    assert _generator(5, 2).random() == _generator(7, 0).random()  # 5 ^ 2 == 7 ^ 0


def test_zf_snr_examples():
    assert zf_snr(ChannelSample(np.eye(2, dtype=complex)), 3.162) == pytest.approx(3.162)
    h = np.zeros((3, 2), dtype=complex)
    h[0, 0], h[1, 1] = 2.0, 3.0
    assert zf_snr(ChannelSample(h), 1.0) == pytest.approx(4.0)
    assert zf_snr(ChannelSample(h), 1.0, stream=1) == pytest.approx(9.0)
    v = np.array([[1 + 1j], [2.0], [-0.5j]])
    assert zf_snr(ChannelSample(v), 2.0) == pytest.approx(2.0 * np.sum(np.abs(v) ** 2))


def test_zf_snr_singular():
    with pytest.raises(np.linalg.LinAlgError):
        zf_snr(ChannelSample(np.ones((3, 2), dtype=complex)), 1.0)
    snr, ok = zf_snr_batch(np.stack([np.ones((3, 2)), np.eye(3, 2)]).astype(complex), 1.0)
    assert ok.tolist() == [False, True]


def test_zf_snr_bad_stream():
    with pytest.raises(ValueError):
        zf_snr(ChannelSample(np.eye(2, dtype=complex)), 1.0, stream=2)


def test_empirical_distribution():
    a = EmpiricalDistribution(np.array([0.0, 1.0, 2.0]), np.array([3, 1]), 4)
    assert a.pdf.tolist() == [0.75, 0.25]
    assert a.cdf.tolist() == [0.75, 1.0]
    m = a.merge(EmpiricalDistribution(np.array([0.0, 1.0, 2.0]), np.array([0, 2]), 2))
    assert m.counts.tolist() == [3, 3] and m.n_samples == 6
    with pytest.raises(ValueError):
        EmpiricalDistribution(np.array([0.0, 1.0]), np.array([3]), 4)


def test_simulate_minimum_samples():
    cfg = ScenarioConfig()
    with pytest.raises(ValueError):
        simulate(cfg, build_correlation(cfg.correlation, 2), 100)


def test_simulate_reproducible():
    cfg = ScenarioConfig()
    rt = build_correlation(cfg.correlation, 2)
    a = simulate(cfg, rt, 100_000, seed=4, workers=1)
    b = simulate(cfg, rt, 100_000, seed=4, workers=3)
    assert np.array_equal(a.samples, b.samples)
    assert np.array_equal(a.histogram.counts, b.histogram.counts)
    assert a.histogram.counts.sum() == a.n_samples


@pytest.mark.slow
def test_rayleigh_gamma_law():
    cfg = ScenarioConfig(k_factor_db=-math.inf)
    rt = build_correlation(cfg.correlation, 2)
    sim = simulate(cfg, rt, 1_000_000, seed=1)
    gs = db_to_linear(cfg.gamma_s_db)
    assert ks_distance(sim.samples, lambda x: stats.gamma.cdf(x, 5, scale=gs)) <= 0.005


def test_mean_snr(default_scenario):
    cfg, rt, p = default_scenario
    sim = simulate(cfg, rt, 200_000, seed=9)
    expected = p.gamma1 * (p.dof + p.noncentrality * p.dof / p.n_rx)
    assert np.mean(sim.samples) == pytest.approx(expected, rel=0.01)


def test_rescaled_samples(default_scenario):
    cfg, rt, _ = default_scenario
    sim = simulate(cfg, rt, 20_000, seed=1)
    other = simulate(cfg.replace(gamma_s_db=cfg.gamma_s_db + 3), rt, 20_000, seed=1)
    target = db_to_linear(cfg.gamma_s_db + 3)
    assert sim.rescaled(target) == pytest.approx(other.samples, rel=1e-12)
    assert linear_to_db(target) == pytest.approx(cfg.gamma_s_db + 3)


def test_column_permutation_invariance():
    cfg = ScenarioConfig(n_rx=5, n_tx=3, k_factor_db=5.0)
    rt = build_correlation(cfg.correlation, 3)
    h = draw_channels(cfg, rt, 40_000, seed=21)
    snr, _ = zf_snr_batch(h, 1.0)
    swapped, _ = zf_snr_batch(h[:, :, [0, 2, 1]], 1.0)
    other = draw_channels(cfg, rt, 40_000, seed=22)
    snr2, _ = zf_snr_batch(other[:, :, [0, 2, 1]], 1.0)
    assert np.allclose(snr, swapped, rtol=1e-10)
    assert stats.ks_2samp(snr, snr2).pvalue > 0.01


def test_ks_distance_exact():
    x = np.array([0.25, 0.75])
    assert ks_distance(x, lambda v: v) == pytest.approx(0.25)
