import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kam_spectra import constants as K
from kam_spectra.band import q_factor
from kam_spectra.errors import ConstantOverflowError, DomainError

# closed forms evaluated at (c, gamma, d, sigma) = (1, 1, 1, 1)
PHI_CLOSED_1111 = 12 * (4 / math.e**2) * 4**6      # 26607.99...
PHI_LIMIT_1111 = 12 * (4 / math.e**2) * 8**6       # true limit of the partial products


def mp_phi_partial(ell, c, gamma, d, sigma, dps=40):
    """Independent high-precision partial product prod_{nu<ell} Phi(sigma_nu)^(1/2^(nu+1))."""
    with mpmath.workdps(dps):
        c, gamma, sigma = mpmath.mpf(c), mpmath.mpf(gamma), mpmath.mpf(sigma)
        pref = 12 * c**2 * (2 * gamma / mpmath.e) ** (2 * gamma)
        out = mpmath.mpf(1)
        for nu in range(ell):
            s_nu = sigma / 2 ** (nu + 2)
            out *= (pref * s_nu ** (-(4 * d + 2 * gamma))) ** (mpmath.mpf(1) / 2 ** (nu + 1))
        return float(out)


def test_schedule_examples():
    assert K.schedule(2.0, 0) == (2.0, 0.25)
    assert K.schedule(2.0, 2)[0] == pytest.approx(1.25)
    assert K.schedule(2.0, 60)[0] == pytest.approx(1.0)
    alphas = [K.schedule(1.3, ell)[0] for ell in range(10)]
    assert all(a > b for a, b in zip(alphas, alphas[1:]))
    with pytest.raises(DomainError):
        K.schedule(1.0, -1)


def test_sigma():
    assert K.sigma_of(0.5) == 0.25 and K.sigma_of(2.0) == 1.0 and K.sigma_of(7.0) == 1.0
    with pytest.raises(DomainError):
        K.sigma_of(0.0)


def test_big_phi():
    assert K.big_phi(1.0, 1, 1, 1) == pytest.approx(12 * (2 / math.e) ** 2, rel=1e-14)
    assert K.big_phi(1.0, 1, 1, 1) == pytest.approx(6.49609, abs=1e-5)
    for x in (0.1, 0.7, 3.0):
        assert K.big_phi(x / 2, 2.0, 0.5, 2) / K.big_phi(x, 2.0, 0.5, 2) == pytest.approx(2 ** 9)
    vals = [K.big_phi(K.schedule(2.0, nu)[1], 1, 1, 1) for nu in range(12)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    with pytest.raises(DomainError):
        K.big_phi(0.0, 1, 1, 1)


def test_phi_closed_form_value():
    assert K.phi_sequence(0, 1, 1, 1, 1) == 1.0
    assert K.phi_infinity(1, 1, 1, 1) == pytest.approx(PHI_CLOSED_1111, rel=1e-14)
    assert K.phi_infinity(1, 1, 1, 1) == pytest.approx(26608.0, abs=0.01)


@pytest.mark.parametrize("params", [(1, 1, 1, 1), (2.5, 0.5, 2, 0.3), (1, 2, 3, 1)])
def test_partial_products_against_high_precision(params):
    for ell in (1, 2, 5, 30):
        assert K.phi_sequence(ell, *params) == pytest.approx(mp_phi_partial(ell, *params), rel=1e-12)


@pytest.mark.parametrize("params", [(1, 1, 1, 1), (2.5, 0.5, 2, 0.3), (1, 2, 3, 1)])
def test_partial_products_increase_to_the_true_limit(params):
    seq = [K.phi_sequence(ell, *params) for ell in range(40)]
    assert all(a <= b for a, b in zip(seq, seq[1:]))
    assert seq[-1] == pytest.approx(K.phi_limit(*params), rel=1e-9)
    c, gamma, d, sigma = params
    assert K.phi_limit(*params) / K.phi_infinity(*params) == pytest.approx(2 ** (4 * d + 2 * gamma))


def test_true_limit_value():
    assert K.phi_limit(1, 1, 1, 1) == pytest.approx(PHI_LIMIT_1111, rel=1e-14)
    assert K.phi_sequence(30, 1, 1, 1, 1) == pytest.approx(PHI_LIMIT_1111, rel=1e-6)


def test_closed_form_is_not_the_limit():
    # the stated closed form undershoots the partial products by 2^(4d + 2 gamma) = 64 here
    ratio = K.phi_sequence(30, 1, 1, 1, 1) / K.phi_infinity(1, 1, 1, 1)
    assert ratio == pytest.approx(64.0, rel=1e-6)


def test_product_inequality_with_true_limit():
    for params in [(1, 1, 1, 1), (3, 0.7, 2, 0.5)]:
        logl = K.log_phi_limit(*params)
        for ell in range(21):
            lhs = K.log_big_phi(K.schedule(2 * params[3], ell)[1], *params[:3]) \
                + 2**ell * K.log_phi_sequence(ell, *params)
            assert lhs <= 2**ell * logl + 1e-10 * max(1.0, abs(lhs))


def test_product_inequality_fails_with_closed_form():
    logc = K.log_phi_infinity(1, 1, 1, 1)
    lhs = K.log_big_phi(K.schedule(2.0, 1)[1], 1, 1, 1) + 2 * K.log_phi_sequence(1, 1, 1, 1, 1)
    assert lhs > 2 * logc


def test_xi_and_eps_star_values():
    xi = K.xi_value(1, 1, 1, 1)
    assert xi == pytest.approx(1.3624e-4, rel=1e-4)
    assert K.A_value(1, 1, 1) == pytest.approx(3.4059e-5, rel=1e-4)
    assert all(K.verify_xi_system(xi, 1, 1, 1, 1))
    assert not all(K.verify_xi_system(xi * (1 + 1e-9), 1, 1, 1, 1))
    for v in (0.5, math.e, 10.0):
        a = K.eps_star(1, 1, 1, 2.0, v)
        b = K.eps_star_closed(1, 1, 1, 2.0, v)
        assert abs(a - b) <= 1e-12 * b
    with pytest.raises(DomainError):
        K.eps_star(1, 1, 1, 2.0, 0.0)


def test_laplacian_threshold_peaks_at_alpha_two():
    alphas = np.linspace(0.1, 6, 591)
    vals = [K.laplacian_eps_star(1, 1, 1, a) for a in alphas]
    assert alphas[int(np.argmax(vals))] == pytest.approx(2.0)
    assert max(vals) == pytest.approx(K.A_value(1, 1, 1) * math.exp(-2.0), rel=1e-12)
    assert K.laplacian_eps_star(1, 1, 1, 2.0) == pytest.approx(4.6094e-6, rel=1e-4)


def test_sup_poly_exp():
    assert K.sup_poly_exp(1.0, 2.0) == pytest.approx(math.exp(-2.0))
    rng = np.random.default_rng(5)
    r = np.arange(0, 201, dtype=float)
    for _ in range(50):
        g, dl = rng.uniform(0.1, 3.0), rng.uniform(0.05, 3.0)
        assert np.max(r ** (2 * g) * np.exp(-dl * r)) <= K.sup_poly_exp(g, dl) * (1 + 1e-12)


def test_overflow_is_reported():
    with pytest.raises(ConstantOverflowError):
        K.phi_infinity(1, 1, 200, 1e-3)
    assert math.isfinite(K.log_phi_infinity(1, 1, 200, 1e-3))


def test_constants_bundle():
    kc = K.KamConstants.compute(1.0, 1.0, 1, 2.0, math.e**2)
    assert kc.sigma == 1.0
    assert kc.eps_star == pytest.approx(K.laplacian_eps_star(1, 1, 1, 2.0), rel=1e-12)
    d = kc.to_dict()
    assert set(d) >= {"c", "gamma", "d", "alpha", "sigma", "phi_inf", "xi", "A_const", "eps_star",
                      "V_alpha_norm"}


@settings(max_examples=100, deadline=None)
@given(c=st.floats(1.0, 10.0), gamma=st.floats(0.01, 3.0), d=st.integers(1, 3),
       sigma=st.floats(1e-3, 1.0))
def test_xi_solves_the_system(c, gamma, d, sigma):
    xi = K.xi_value(c, gamma, d, sigma)
    assert xi < 1
    assert all(K.verify_xi_system(xi, c, gamma, d, sigma))


@settings(max_examples=50, deadline=None)
@given(d1=st.floats(0.01, 5.0), d2=st.floats(0.01, 5.0), d=st.integers(1, 3))
def test_q_factor_decreasing(d1, d2, d):
    lo, hi = sorted((d1, d2))
    assert q_factor(hi, d) <= q_factor(lo, d)
    assert q_factor(hi, d) > 1
    if lo < 1:
        assert q_factor(lo, d) < (3 / lo) ** d
