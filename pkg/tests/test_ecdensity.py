import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special, stats

from rftstat.ecdensity import (StatDescriptor, StatKind, ec_density, hermite_prob, rho_chi2, rho_corr,
                               rho_f, rho_gaussian, rho_gaussian_scaled, rho_hotelling, rho_multilinear,
                               rho_roy, rho_scale_space, rho_t)

TWO_PI = 2 * math.pi


# Gaussian -------------------------------------------------------------------

def _rho_gaussian_closed(i, t):
    e = math.exp(-t * t / 2)
    return [stats.norm.sf(t), e / TWO_PI, t * e / TWO_PI ** 1.5, (t * t - 1) * e / TWO_PI ** 2][i]


def test_gaussian_low_order_values():
    assert rho_gaussian(1, 0.0) == pytest.approx(1 / TWO_PI, rel=1e-15)
    assert rho_gaussian(3, 1.0) == pytest.approx(0.0, abs=1e-16)
    assert rho_gaussian(2, 0.0) == 0.0


@given(st.integers(0, 3), st.floats(-6, 8))
def test_gaussian_matches_closed_forms(i, t):
    assert rho_gaussian(i, t) == pytest.approx(_rho_gaussian_closed(i, t), rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("i", range(0, 7))
@pytest.mark.parametrize("t", [-1.3, 0.4, 2.2, 3.7])
def test_gaussian_derivative_structure(i, t):
    # rho_{i+1} = -(2 pi)^{-1/2} d rho_i / dt, by central differences
    h = 1e-4
    deriv = (rho_gaussian(i, t + h) - rho_gaussian(i, t - h)) / (2 * h)
    assert rho_gaussian(i + 1, t) == pytest.approx(-deriv / math.sqrt(TWO_PI), rel=1e-6, abs=1e-11)


@given(st.integers(0, 8), st.floats(-5, 5))
def test_hermite_vs_scipy(k, t):
    assert hermite_prob(k, t) == pytest.approx(special.eval_hermitenorm(k, t), rel=1e-12, abs=1e-10)


@given(st.integers(0, 4), st.floats(-4, 6), st.floats(0.01, 10))
def test_gaussian_scaled(i, t, c):
    assert rho_gaussian_scaled(i, t, c) == pytest.approx(c ** (i / 2) * rho_gaussian(i, t), rel=1e-13, abs=1e-300)
    assert rho_gaussian_scaled(0, t, c) == rho_gaussian(0, t)
    assert rho_gaussian_scaled(i, t, 1.0) == pytest.approx(rho_gaussian(i, t), rel=1e-15, abs=1e-300)


# correlation field -----------------------------------------------------------

@pytest.mark.parametrize("n", [3, 10, 36, 200])
def test_corr_00_at_zero(n):
    assert rho_corr(0, 0, 0.0, n) == pytest.approx(0.5, abs=1e-14)


@given(st.floats(0, 0.99), st.integers(3, 80))
def test_corr_00_is_one_sided_correlation_tail(t, n):
    ref = 0.5 * stats.beta.sf(t * t, 0.5, (n - 1) / 2)
    assert rho_corr(0, 0, t, n) == pytest.approx(ref, rel=1e-9, abs=1e-15)


@given(st.integers(0, 4), st.integers(0, 4), st.floats(0, 0.98), st.integers(0, 40))
def test_corr_symmetric(i, j, t, extra):
    n = max(i + j + 1 + extra, 2)
    assert rho_corr(i, j, t, n) == rho_corr(j, i, t, n)


def test_corr_domain():
    with pytest.raises(ValueError):
        rho_corr(2, 2, 0.5, 4)
    with pytest.raises(ValueError):
        rho_corr(0, 1, 1.0, 10)


# t field ----------------------------------------------------------------------

def _rho_t_closed(i, t, nu):
    """Standard closed forms for the Student t field (independent of the correlation route)."""
    base = (1 + t * t / nu) ** (-(nu - 1) / 2)
    if i == 0:
        return stats.t.sf(t, nu)
    if i == 1:
        return base / TWO_PI
    if i == 2:
        g = math.exp(special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2))
        return g / math.sqrt(nu / 2) * t * base / TWO_PI ** 1.5
    if i == 3:
        return ((nu - 1) / nu * t * t - 1) * base / TWO_PI ** 2
    raise ValueError


@pytest.mark.parametrize("nu", [4, 10, 20, 34, 100])
@pytest.mark.parametrize("i", range(4))
@pytest.mark.parametrize("t", [0.0, 0.7, 2.0, 3.5, 6.0])
def test_t_matches_closed_forms(nu, i, t):
    assert rho_t(i, t, nu) == pytest.approx(_rho_t_closed(i, t, nu), rel=1e-9, abs=1e-14)


@given(st.floats(-8, 8), st.integers(1, 200))
def test_t_order0_is_student_tail(t, nu):
    assert rho_t(0, t, nu) == pytest.approx(stats.t.sf(t, nu), rel=1e-9, abs=1e-15)


@pytest.mark.parametrize("i", range(4))
@pytest.mark.parametrize("t", [2.0, 3.0, 4.0])
def test_t_gaussian_limit(i, t):
    assert rho_t(i, t, 10 ** 6) == pytest.approx(rho_gaussian(i, t), rel=1e-3)


def test_t_domain():
    assert rho_t(0, 0.0, 7) == pytest.approx(0.5, abs=1e-14)
    with pytest.raises(ValueError):
        rho_t(3, 1.0, 2)


# chi-squared ------------------------------------------------------------------

def _rho_chi2_closed(i, t, d):
    """Closed forms for the chi-squared field, orders 0-2."""
    if i == 0:
        return stats.chi2.sf(t, d)
    lead = t ** ((d - i) / 2) * math.exp(-t / 2) / (math.exp(special.gammaln(d / 2)) * 2 ** ((d - 2) / 2))
    if i == 1:
        return lead / math.sqrt(TWO_PI)
    if i == 2:
        return lead / TWO_PI * (t - (d - 1))
    raise ValueError


@pytest.mark.parametrize("d", [1, 2, 3, 5])
@pytest.mark.parametrize("i", range(3))
@pytest.mark.parametrize("t", [0.5, 2.0, 9.0, 25.0])
def test_chi2_matches_closed_forms(d, i, t):
    assert rho_chi2(i, t, d) == pytest.approx(_rho_chi2_closed(i, t, d), rel=1e-10, abs=1e-15)


def test_chi2_examples():
    assert rho_chi2(0, 2.0, 2) == pytest.approx(math.exp(-1), rel=1e-12)
    assert rho_chi2(0, 4.0, 1) == pytest.approx(2 * stats.norm.sf(2.0), rel=1e-12)
    for t in (0.3, 4.0, 11.0):
        assert rho_chi2(0, t, 3) == pytest.approx(special.gammaincc(1.5, t / 2), rel=1e-10)
    with pytest.raises(ValueError):
        rho_chi2(0, -1.0, 2)


# F, Hotelling, Roy ------------------------------------------------------------

@pytest.mark.parametrize("eta", [1, 2, 3, 4])
@pytest.mark.parametrize("nu", [5, 20, 60])
@pytest.mark.parametrize("t", [0.0, 0.5, 1.0, 3.0, 10.0])
def test_f_order0_is_exact_tail(eta, nu, t):
    assert rho_f(0, t, eta, nu) == pytest.approx(stats.f.sf(t, eta, nu), rel=1e-9, abs=1e-15)


@given(st.integers(0, 3), st.floats(0.01, 40), st.integers(4, 60))
def test_f_eta1_is_two_sided_t(i, t, nu):
    assert rho_f(i, t, 1, nu) == pytest.approx(2 * rho_t(i, math.sqrt(t), nu), rel=1e-8, abs=1e-15)


@pytest.mark.parametrize("d, nu", [(1, 10), (2, 10), (3, 34), (3, 8)])
@pytest.mark.parametrize("t", [0.5, 5.0, 20.0, 54.0])
def test_hotelling_order0_is_exact_tail(d, nu, t):
    scale = nu * d / (nu - d + 1)
    ref = stats.f.sf(t / scale, d, nu - d + 1)
    assert rho_hotelling(0, t, d, nu) == pytest.approx(ref, rel=1e-8, abs=1e-15)


@given(st.integers(0, 3), st.floats(0.01, 40), st.integers(4, 60))
def test_hotelling_d1_is_two_sided_t(i, t, nu):
    assert rho_hotelling(i, t, 1, nu) == pytest.approx(2 * rho_t(i, math.sqrt(t), nu), rel=1e-8, abs=1e-15)


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("i", range(4))
@pytest.mark.parametrize("t", [8.0, 15.0, 30.0])
def test_hotelling_chi2_limit(d, i, t):
    assert rho_hotelling(i, t, d, 10 ** 6) == pytest.approx(rho_chi2(i, t, d), rel=1e-3)


@given(st.integers(0, 3), st.floats(0.01, 60), st.integers(1, 3), st.integers(6, 50))
def test_roy_eta1_is_twice_hotelling(i, t, d, nu):
    assert 0.5 * rho_roy(i, t, d, 1, nu) == pytest.approx(rho_hotelling(i, t, d, nu), rel=1e-8, abs=1e-14)


@given(st.integers(0, 3), st.floats(0.01, 60), st.integers(1, 4), st.integers(6, 50))
def test_roy_d1_is_twice_f(i, t, eta, nu):
    assert rho_roy(i, t, 1, eta, nu) == pytest.approx(2 * rho_f(i, t, eta, nu), rel=1e-8, abs=1e-14)


def test_negative_thresholds_rejected():
    for f in (lambda: rho_f(0, -1, 2, 5), lambda: rho_hotelling(0, -1, 2, 5),
              lambda: rho_roy(0, -1, 2, 2, 5)):
        with pytest.raises(ValueError):
            f()
    assert rho_gaussian(0, -1.0) > 0.5
    assert rho_t(0, -1.0, 5) > 0.5


# multilinear -------------------------------------------------------------------

@given(st.integers(0, 3), st.floats(0.05, 6), st.integers(1, 4))
def test_multilinear_single_factor_is_chi2(i, t, d):
    assert rho_multilinear(i, t, (d,)) == pytest.approx(rho_chi2(i, t * t, d), rel=1e-10, abs=1e-15)


@given(st.integers(0, 3), st.floats(-4, 6))
def test_multilinear_single_scalar_is_two_sided_gaussian(i, t):
    assert rho_multilinear(i, t, (1,)) == pytest.approx(2 * rho_gaussian(i, t), rel=1e-12, abs=1e-300)


def test_multilinear_largest_singular_value_tail():
    rng = np.random.default_rng(7)
    sv = np.linalg.svd(rng.standard_normal((2_000_000, 2, 2)), compute_uv=False)[:, 0]
    for t in (2.5, 3.0, 3.5):
        p = np.mean(sv >= t)
        se = math.sqrt(p * (1 - p) / sv.size)
        assert abs(0.5 * rho_multilinear(0, t, (2, 2)) - p) < 4 * se


# scale space ---------------------------------------------------------------------

@given(st.integers(0, 3), st.floats(-4, 8), st.floats(0.2, 5), st.floats(0.1, 3))
def test_scale_space_fixed_scale(i, t, w, kappa):
    ref = rho_gaussian_scaled(i, t, w ** -2)
    assert rho_scale_space(i, t, w, w, kappa) == pytest.approx(ref, rel=1e-12, abs=1e-300)


@given(st.floats(-4, 8), st.floats(0.2, 2), st.floats(1, 5), st.floats(0.1, 3))
def test_scale_space_order0_log_rule(t, w1, ratio, kappa):
    w2 = w1 * ratio
    ref = rho_gaussian(0, t) + math.log(w2 / w1) * math.sqrt(kappa) * rho_gaussian(1, t)
    assert rho_scale_space(0, t, w1, w2, kappa) == pytest.approx(ref, rel=1e-12, abs=1e-300)


def test_scale_space_domain():
    with pytest.raises(ValueError):
        rho_scale_space(0, 1.0, 2.0, 1.0, 1.0)


# decay and descriptors -----------------------------------------------------------

@pytest.mark.parametrize("stat", [
    StatDescriptor(kind="gaussian"), StatDescriptor(kind="t", nu=12), StatDescriptor(kind="chi2", d=3),
    StatDescriptor(kind="f", eta=2, nu=15), StatDescriptor(kind="hotelling", d=3, nu=34),
    StatDescriptor(kind="roy", d=2, eta=3, nu=20), StatDescriptor(kind="multilinear", dims=(2, 3)),
])
def test_densities_vanish_in_far_tail(stat):
    big = {"gaussian": 40.0, "t": 1e8, "multilinear": 40.0}.get(stat.kind.value, 1e5)
    for i in range(4):
        assert abs(ec_density(stat, i, big)) < 1e-12


def test_order0_in_unit_interval():
    for stat in (StatDescriptor(kind="t", nu=5), StatDescriptor(kind="f", eta=3, nu=9),
                 StatDescriptor(kind="hotelling", d=2, nu=9), StatDescriptor(kind="chi2", d=4)):
        for t in np.linspace(0, 30, 31):
            assert 0 <= ec_density(stat, 0, float(t)) <= 1


def test_descriptor_validation_and_json():
    s = StatDescriptor(kind=StatKind.ROY, d=3, eta=3, nu=28)
    assert StatDescriptor.from_json(s.to_json()) == s
    assert json.loads(s.to_json()) == {"kind": "roy", "d": 3, "eta": 3, "nu": 28}
    m = StatDescriptor(kind="multilinear", dims=[2, 3])
    assert StatDescriptor.from_dict(m.to_dict()) == m
    with pytest.raises(ValueError):
        StatDescriptor(kind="hotelling", d=3)
    with pytest.raises(ValueError):
        StatDescriptor(kind="gaussian", nu=3)
    with pytest.raises(ValueError):
        StatDescriptor(kind="t", nu=0)
    with pytest.raises(ValueError):
        StatDescriptor(kind="maxcorr", d=3, eta=3, n=3)
    with pytest.raises(ValueError):
        ec_density(StatDescriptor(kind="maxcorr", d=3, eta=3, n=34), 0, 0.5)


def _corr_reference(i, j, t, n):
    # the same finite sum in 50-digit arithmetic
    mpmath.mp.dps = 50
    t = mpmath.mpf(t)
    h = i + j
    if i < j:
        i, j = j, i
    fact = mpmath.factorial
    pre = mpmath.mpf(2) ** (n - 2 - h) * fact(i - 1) * fact(j) / mpmath.pi ** (mpmath.mpf(h) / 2 + 1)
    total = 0
    for k in range((h - 1) // 2 + 1):
        inner = 0
        for l in range(k + 1):
            for m in range(k + 1):
                args = (l, m, k - l - m, n - 1 - h + l + m + k, i - 1 - k - l + m, j - k - m + l)
                if min(args) < 0:
                    continue
                g = mpmath.gamma(mpmath.mpf(n - i) / 2 + l) * mpmath.gamma(mpmath.mpf(n - j) / 2 + m)
                for a in args:
                    g /= fact(a)
                inner += g
        total += (-1) ** k * inner * t ** (h - 1 - 2 * k) * (1 - t * t) ** (mpmath.mpf(n - 1 - h) / 2 + k)
    return float(pre * total)


@pytest.mark.parametrize("n", [10, 100, 1000, 10_000])
def test_corr_matches_high_precision(n):
    for i, j in [(1, 0), (0, 2), (2, 1), (3, 3)]:
        for t in (0.02, 0.3, 0.9):
            ref = _corr_reference(i, j, t, n)
            if abs(ref) < 1e-290:
                continue
            assert rho_corr(i, j, t, n) == pytest.approx(ref, rel=1e-10)
