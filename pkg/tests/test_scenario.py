import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hgmzf.scenario import (
    ConfigError,
    CorrelationMatrix,
    CorrelationSpec,
    ScenarioConfig,
    build_correlation,
    db_to_linear,
    derive_params,
    write_correlation_file,
)


def test_identity_correlation():
    rt = build_correlation(CorrelationSpec("identity"), 2)
    assert np.array_equal(rt.entries, np.eye(2))


def test_laplacian_single_antenna():
    rt = build_correlation(CorrelationSpec("laplacian_ula", spacing=0.5), 1, 51.0)
    assert rt.entries.shape == (1, 1)
    assert rt.entries[0, 0] == 1


def test_laplacian_two_antennas():
    r = build_correlation(CorrelationSpec("laplacian_ula", spacing=0.5), 2, 51.0).entries
    assert np.allclose(np.diag(r), 1.0)
    assert np.allclose(r, r.conj().T)
    assert np.all(np.linalg.eigvalsh(r) >= 0)
    assert 0 < abs(r[0, 1]) < 1


def test_laplacian_narrow_spread_is_strongly_correlated():
    narrow = build_correlation(CorrelationSpec("laplacian_ula"), 2, 2.0).entries
    wide = build_correlation(CorrelationSpec("laplacian_ula"), 2, 51.0).entries
    assert abs(narrow[0, 1]) > abs(wide[0, 1])
    assert abs(narrow[0, 1]) > 0.95


def test_file_roundtrip(tmp_path):
    r = np.array([[1.0, 0.3 + 0.2j], [0.3 - 0.2j, 1.0]])
    path = tmp_path / "rt.txt"
    write_correlation_file(path, r)
    rt = build_correlation(CorrelationSpec("file", path=str(path)), 2)
    assert np.array_equal(rt.entries, r)


@pytest.mark.parametrize("entries", [
    [[1.0, 0.5], [0.2, 1.0]],           # not Hermitian
    [[1.0, 2.0], [2.0, 1.0]],           # indefinite
    [[1.5, 0.0], [0.0, 1.0]],           # trace 2.5
])
def test_invalid_correlation_rejected(entries):
    with pytest.raises(ConfigError):
        CorrelationMatrix(np.array(entries))


def test_file_with_wrong_order(tmp_path):
    path = tmp_path / "rt.txt"
    write_correlation_file(path, np.eye(3))
    with pytest.raises(ConfigError):
        build_correlation(CorrelationSpec("file", path=str(path)), 2)


def test_derive_params_dof():
    cfg = ScenarioConfig(n_rx=6, n_tx=2)
    assert derive_params(cfg, build_correlation(cfg.correlation, 2)).dof == 5


def test_derive_params_rayleigh():
    cfg = ScenarioConfig(k_factor_db=-math.inf)
    p = derive_params(cfg, build_correlation(cfg.correlation, 2))
    assert p.k_linear == 0 and p.noncentrality == 0


def test_derive_params_default_scenario():
    cfg = ScenarioConfig(n_rx=6, n_tx=2, k_factor_db=7.0, gamma_s_db=5.0)
    p = derive_params(cfg, build_correlation(cfg.correlation, 2))
    k = 10 ** 0.7
    assert p.k_linear == pytest.approx(5.011872, rel=1e-6)
    # the scattered part has covariance R_T / (K + 1)
    assert p.noncentrality == pytest.approx(k * 12, rel=1e-14)
    assert p.gamma1 == pytest.approx(10 ** 0.5 / (k + 1), rel=1e-14)
    assert p.gamma_b_db == pytest.approx(5 - 10 * math.log10(2))


def test_singular_correlation_rejected():
    cfg = ScenarioConfig()
    rt = CorrelationMatrix(np.ones((2, 2)))
    with pytest.raises(ConfigError):
        derive_params(cfg, rt)


@pytest.mark.parametrize("kw", [dict(n_tx=3, n_rx=2), dict(constellation_size=6),
                                dict(k_factor_db=math.nan), dict(k_factor_db=math.inf)])
def test_invalid_config(kw):
    with pytest.raises(ConfigError):
        ScenarioConfig(**kw)


def test_gamma_b_conversion():
    cfg = ScenarioConfig(constellation_size=16).with_gamma_b_db(0.0)
    assert db_to_linear(cfg.gamma_s_db) == pytest.approx(4.0)


def test_dict_roundtrip(tmp_path):
    cfg = ScenarioConfig(n_rx=4, k_factor_db=3.0, correlation=CorrelationSpec("laplacian_ula", spacing=0.4))
    path = tmp_path / "s.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ScenarioConfig.from_json(path) == cfg


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"n_rx": 6, "bogus": 1})


@given(st.floats(-20, 30), st.floats(-20, 30))
def test_noncentrality_monotone_in_k(k1, k2):
    cfg = ScenarioConfig()
    rt = build_correlation(cfg.correlation, 2)
    lo, hi = sorted((k1, k2))
    a_lo = derive_params(cfg.replace(k_factor_db=lo), rt).noncentrality
    a_hi = derive_params(cfg.replace(k_factor_db=hi), rt).noncentrality
    assert a_lo <= a_hi


@given(st.floats(0, 2 * math.pi), st.floats(0, 0.9))
def test_unitary_similarity_preserving_corner(phase, rho):
    # a diagonal phase rotation keeps [R^-1]_11
    r = np.array([[1.0, rho], [rho, 1.0]], dtype=complex)
    u = np.diag([1.0, np.exp(1j * phase)])
    cfg = ScenarioConfig()
    p1 = derive_params(cfg, CorrelationMatrix(r))
    p2 = derive_params(cfg, CorrelationMatrix(u @ r @ u.conj().T))
    assert p2.gamma1 == pytest.approx(p1.gamma1, rel=1e-12)
    assert p2.noncentrality == pytest.approx(p1.noncentrality, rel=1e-12)


@given(st.integers(1, 8), st.integers(0, 6), st.floats(-10, 20))
def test_identity_noncentrality(n_tx, extra, k_db):
    cfg = ScenarioConfig(n_rx=n_tx + extra, n_tx=n_tx, k_factor_db=k_db)
    p = derive_params(cfg, build_correlation(cfg.correlation, n_tx))
    k = db_to_linear(k_db)
    assert p.noncentrality == pytest.approx(k * cfg.n_rx * n_tx, rel=1e-12)
