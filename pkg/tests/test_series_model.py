import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from hgmzf.hgm_engine import companion_p
from hgmzf.series_model import (
    StateVector,
    TruncationPolicy,
    initial_state,
    mgf_closed,
    pdf_boundary,
    pdf_derivatives,
    pdf_derivatives_series,
    pdf_series,
)
from hgmzf.special_fn import hyp1f1_series

from .conftest import scenario_params


def test_mgf_at_zero():
    assert mgf_closed(0.0, 3.0, 5, 6) == 1.0


def test_mgf_rayleigh():
    assert mgf_closed(0.5, 0.0, 5, 6) == pytest.approx(32.0)


def test_mgf_noncentral():
    x = 10 * 0.2 / 0.8
    ref = 0.8 ** -5 * hyp1f1_series(5, 6, x).value
    assert mgf_closed(0.2, 10.0, 5, 6) == pytest.approx(ref, rel=1e-13)


def test_mgf_domain():
    with pytest.raises(ValueError):
        mgf_closed(1.0, 1.0, 5, 6)


def test_pdf_gamma_case():
    r = pdf_series(1.0, 0.0, 5, 6)
    assert r.converged
    assert r.value == pytest.approx(math.exp(-1) / 24, rel=1e-15)


def test_pdf_near_origin():
    assert pdf_series(1e-12, 0.0, 5, 6).value < 1e-45


def test_pdf_against_oracle(oracle):
    for t, a, N, NR, ref in oracle["pdf_series"]:
        r = pdf_series(t, a, N, NR)
        assert r.converged
        assert r.value == pytest.approx(ref, rel=1e-9, abs=1e-15), (t, a, N, NR)


def test_breakdown_detected_at_k7():
    _, _, p = scenario_params(7.0)
    flags = [pdf_series(t / p.gamma1, p.noncentrality, 5, 6).converged for t in np.linspace(1, 30, 10)]
    assert not all(flags)


def test_boundary():
    assert pdf_boundary(0.0, 1, 4) == 1.0
    assert pdf_boundary(3.0, 5, 6) == 0.0
    assert pdf_boundary(2.0, 1, 4) == pytest.approx(hyp1f1_series(1, 4, -2.0).value, rel=1e-13)


def test_boundary_is_limit_of_density():
    assert pdf_series(1e-9, 2.0, 1, 4).value == pytest.approx(pdf_boundary(2.0, 1, 4), rel=1e-7)


def test_derivatives_gamma_case():
    s = pdf_derivatives_series(1.0, 0.0, 5, 6)
    assert s.p1 == pytest.approx(math.exp(-1) * (1 / 6 - 1 / 24), rel=1e-14)


def test_derivatives_exponential_case():
    s = pdf_derivatives_series(1.0, 0.0, 1, 1)
    e = math.exp(-1)
    assert (s.p, s.p1, s.p2) == pytest.approx((e, -e, e), rel=1e-14)


def test_derivatives_by_finite_differences():
    h = 1e-4
    f = lambda t: pdf_series(t, 0.01, 2, 3).value
    s = pdf_derivatives_series(0.5, 0.01, 2, 3)
    assert s.p1 == pytest.approx((f(0.5 + h) - f(0.5 - h)) / (2 * h), abs=1e-6)
    assert s.p2 == pytest.approx((f(0.5 + h) - 2 * f(0.5) + f(0.5 - h)) / h ** 2, abs=1e-6)


def test_derivatives_against_oracle(oracle):
    for t, a, N, NR, *ref in oracle["pdf_derivs"]:
        got = [r.value for r in pdf_derivatives(t, a, N, NR, order=3)]
        assert got == pytest.approx(ref, rel=1e-9), (t, a)


def test_initial_state():
    s = initial_state(1e-3, 0.0, 5, 6)
    assert s.p == pytest.approx(1e-12 / 24, rel=1e-3)
    s = initial_state(1e-3, 7.0, 1, 4)
    assert s.p == pytest.approx(1.0, abs=1e-2)
    assert isinstance(s, StateVector) and s.a == pytest.approx(7e-3)
    comps = pdf_derivatives(1e-3, 1e-2, 5, 6, order=2)
    assert all(r.converged and r.terms_used < 20 for r in comps)


def test_policy_validation():
    with pytest.raises(ValueError):
        TruncationPolicy(rel_tol=0.1)
    with pytest.raises(ValueError):
        TruncationPolicy(n_max=10)


@given(st.floats(0.05, 20), st.floats(0, 3), st.integers(1, 5), st.integers(0, 3))
def test_nonnegative(t, a, N, extra):
    r = pdf_series(t, a, N, N + extra)
    if r.converged:
        assert r.value >= -1e-12


@given(st.floats(0.01, 40), st.integers(1, 8))
def test_rayleigh_reduction(t, N):
    ref = math.exp((N - 1) * math.log(t) - t - math.lgamma(N))
    assert pdf_series(t, 0.0, N, N + 1).value == pytest.approx(ref, rel=1e-13)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0, 5.0])
@pytest.mark.parametrize("a", [0.0, 0.1, 0.5, 1.0])
def test_t_ode_residual(t, a):
    d = [r.value for r in pdf_derivatives(t, a, 5, 6, order=3)]
    terms = companion_p(t, a, 5, 6)[2] * np.array(d[:3])
    scale = max(abs(d[3]), *np.abs(terms))
    assert abs(d[3] - terms.sum()) <= 1e-8 * scale


def central_difference(f, x, h=1e-4):
    # fourth-order stencil
    return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h)


@pytest.mark.parametrize("s", [-1.0, -0.3, 0.2, 0.4])
@pytest.mark.parametrize("a", [0.2, 1.0, 3.0])
def test_mgf_a_relation(s, a):
    M = lambda s_, a_: mgf_closed(s_, a_, 5, 6)
    da = central_difference(lambda x: M(s, x), a)
    ds = central_difference(lambda x: M(x, a), s)
    assert a * da - (s * (1 - s) * ds - 5 * s * M(s, a)) == pytest.approx(0, abs=1e-6)


@pytest.mark.parametrize("s", [-2.0, -0.5, 0.0])
def test_mgf_matches_density(s):
    a = 0.5
    f = lambda t: math.exp(s * t) * pdf_series(t, a, 5, 6).value
    val, _ = integrate.quad(f, 0, 80, limit=200, epsabs=1e-13)
    assert val == pytest.approx(mgf_closed(s, a, 5, 6), abs=1e-6)
