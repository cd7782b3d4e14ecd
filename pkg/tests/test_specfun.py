"""Special-function tests against independent oracles.

Expected values marked as frozen were computed with the oracle implemented
next to the test (series, quadrature, bisection, or Monte Carlo), never with
the code under test.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ulrt import specfun
from ulrt.errors import DomainError, NumericError
from ulrt.specfun import (
    Tolerance,
    chi2_cdf,
    chi2_pdf,
    chi2_sf,
    chi2_upper_quantile,
    noncentral_chi2_cdf,
    std_normal_cdf,
)

# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------


def erf_series(z: float, terms: int = 60) -> float:
    """Maclaurin series for erf, plenty of terms for |z| <= 3."""
    total = 0.0
    for k in range(terms):
        total += (-1) ** k * z ** (2 * k + 1) / (math.factorial(k) * (2 * k + 1))
    return 2.0 / math.sqrt(math.pi) * total


def normal_cdf_oracle(x: float) -> float:
    return 0.5 + 0.5 * erf_series(x / math.sqrt(2.0))


def simpson(f, a: float, b: float, panels: int = 2000) -> float:
    xs = np.linspace(a, b, 2 * panels + 1)
    ys = np.array([f(x) for x in xs])
    h = (b - a) / (2 * panels)
    return h / 3.0 * (ys[0] + ys[-1] + 4.0 * ys[1:-1:2].sum() + 2.0 * ys[2:-1:2].sum())


def chi2_cdf_d1_oracle(x: float) -> float:
    """d=1 CDF by quadrature after the substitution t = sqrt(x), which
    removes the integrable singularity at zero."""
    return simpson(lambda t: 2.0 * math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi), 0.0, math.sqrt(x))


# ---------------------------------------------------------------------------
# standard normal CDF
# ---------------------------------------------------------------------------


def test_normal_cdf_at_zero():
    assert std_normal_cdf(0.0) == 0.5


def test_normal_cdf_frozen_value():
    # frozen from the 60-term erf series oracle: 0.9750021048517795
    assert normal_cdf_oracle(1.96) == pytest.approx(0.9750021048517795, abs=1e-14)
    assert std_normal_cdf(1.96) == pytest.approx(0.9750021048517795, abs=1e-12)


def test_normal_cdf_far_tail():
    value = std_normal_cdf(-10.0)
    tail_bound = math.exp(-50.0) / (10.0 * math.sqrt(2.0 * math.pi))
    assert 0.0 < value <= 1e-20
    assert value <= tail_bound * 1.01


@pytest.mark.parametrize("x", [-3.0, -0.7, 0.3, 1.5, 2.9])
def test_normal_cdf_matches_series(x):
    assert std_normal_cdf(x) == pytest.approx(normal_cdf_oracle(x), abs=1e-12)


@given(st.floats(-30.0, 30.0))
@settings(max_examples=200, deadline=None)
def test_normal_cdf_symmetry(x):
    assert std_normal_cdf(x) + std_normal_cdf(-x) == pytest.approx(1.0, abs=1e-12)


def test_normal_cdf_monotone():
    xs = np.linspace(-8.0, 8.0, 200)
    values = [std_normal_cdf(x) for x in xs]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_normal_cdf_rejects_nonfinite():
    with pytest.raises(DomainError):
        std_normal_cdf(math.nan)
    with pytest.raises(DomainError):
        std_normal_cdf(math.inf)


# ---------------------------------------------------------------------------
# chi-squared density
# ---------------------------------------------------------------------------


def test_chi2_pdf_two_df_at_zero():
    assert chi2_pdf(0.0, 2) == 0.5


def test_chi2_pdf_one_df_direct_formula():
    # (2 pi x)^(-1/2) exp(-x/2) at x = 1: 0.24197072451914337
    direct = math.exp(-0.5) / math.sqrt(2.0 * math.pi)
    assert chi2_pdf(1.0, 1) == pytest.approx(direct, rel=1e-13)


def test_chi2_pdf_mode_at_d_minus_2():
    xs = np.linspace(0.0, 40.0, 4001)
    values = np.array([chi2_pdf(float(x), 10) for x in xs])
    assert xs[int(values.argmax())] == pytest.approx(8.0, abs=0.02)


@pytest.mark.parametrize("d", [1, 2, 5, 10, 50])
def test_chi2_pdf_decreasing_past_mode(d):
    xs = np.linspace(max(d - 2, 0.0) + 1e-6, d + 50.0, 300)
    values = [chi2_pdf(float(x), d) for x in xs]
    assert all(b < a for a, b in zip(values, values[1:]))


def test_chi2_pdf_rejects_negative():
    with pytest.raises(DomainError):
        chi2_pdf(-1e-9, 3)


# ---------------------------------------------------------------------------
# chi-squared CDF
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("d", [1, 2, 7, 40])
def test_chi2_cdf_at_zero(d):
    assert chi2_cdf(0.0, d) == 0.0


def test_chi2_cdf_two_df_closed_form():
    for x in (0.1, 1.0, 4.60517, 20.0):
        assert chi2_cdf(x, 2) == pytest.approx(1.0 - math.exp(-0.5 * x), abs=1e-12)


def test_chi2_cdf_one_df_quadrature_oracle():
    assert chi2_cdf_d1_oracle(2.70554) == pytest.approx(0.9, abs=2e-6)
    assert chi2_cdf(2.70554, 1) == pytest.approx(0.9, abs=1e-6)


def test_chi2_cdf_monotone_and_limits():
    values = [chi2_cdf(x, 5) for x in np.linspace(0.0, 80.0, 300)]
    assert all(b >= a for a, b in zip(values, values[1:]))
    assert chi2_cdf(400.0, 5) == 1.0


def test_chi2_cdf_sf_complement():
    for d in (1, 3, 10):
        for x in (0.3, 2.0, 9.0, 31.0):
            assert chi2_cdf(x, d) + chi2_sf(x, d) == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# chi-squared upper quantile
# ---------------------------------------------------------------------------


def test_quantile_two_df_closed_form():
    assert chi2_upper_quantile(0.1, 2) == pytest.approx(-2.0 * math.log(0.1), rel=1e-9)


def test_quantile_one_df_bisection_oracle():
    # oracle: bisect 2 Phi(sqrt x) - 1 = 0.9 using math.erf; frozen value
    lo, hi = 0.0, 10.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if math.erf(math.sqrt(mid / 2.0)) < 0.9:
            lo = mid
        else:
            hi = mid
    oracle = 0.5 * (lo + hi)
    assert oracle == pytest.approx(2.705543454095404, abs=1e-9)
    assert chi2_upper_quantile(0.1, 1) == pytest.approx(oracle, rel=1e-9)


def test_quantile_strictly_decreasing_in_alpha():
    quantiles = [chi2_upper_quantile(a, 7) for a in (0.9, 0.5, 0.1, 0.01, 1e-5)]
    assert all(b > a for a, b in zip(quantiles, quantiles[1:]))


@pytest.mark.parametrize("d", [2, 5, 10, 100])
@pytest.mark.parametrize("alpha", [0.17, 0.1, 0.01, 1e-6])
def test_quantile_inglot_sandwich(alpha, d):
    L = math.log(1.0 / alpha)
    c = chi2_upper_quantile(alpha, d)
    assert d + 2.0 * L - 2.5 <= c <= d + 2.0 * L + 2.0 * math.sqrt(d * L)


@pytest.mark.parametrize("d", [1, 2, 5, 10, 50])
@pytest.mark.parametrize("alpha", [0.5, 0.1, 0.01, 1e-6])
def test_quantile_roundtrip(alpha, d):
    c = chi2_upper_quantile(alpha, d)
    assert chi2_cdf(c, d) == pytest.approx(1.0 - alpha, abs=1e-8)


def test_quantile_rejects_bad_alpha():
    for alpha in (0.0, 1.0, -0.2, 1.7):
        with pytest.raises(DomainError):
            chi2_upper_quantile(alpha, 3)


def test_quantile_refuses_extreme_alpha():
    with pytest.raises(NumericError):
        chi2_upper_quantile(1e-310, 2)


# ---------------------------------------------------------------------------
# noncentral chi-squared CDF
# ---------------------------------------------------------------------------


def test_noncentral_reduces_to_central():
    for x, d in ((0.5, 1), (4.0, 3), (25.0, 10)):
        assert noncentral_chi2_cdf(x, d, 0.0) == chi2_cdf(x, d)


def test_noncentral_monte_carlo_oracle():
    # || Z + mu ||^2 with ||mu||^2 = 10, d = 100, a million draws
    rng = np.random.default_rng(20240817)
    mu = np.zeros(100)
    mu[0] = math.sqrt(10.0)
    draws = ((rng.standard_normal((1_000_000, 100)) + mu) ** 2).sum(axis=1)
    p_hat = float((draws <= 110.0).mean())
    se = math.sqrt(p_hat * (1.0 - p_hat) / 1_000_000)
    assert noncentral_chi2_cdf(110.0, 100, 10.0) == pytest.approx(p_hat, abs=3 * se)


def test_noncentral_normal_approximation_regime():
    x, d, lam = 1002.0, 2, 1000.0
    approx = std_normal_cdf((x - d - lam) / math.sqrt(2.0 * (d + 2.0 * lam)))
    assert abs(noncentral_chi2_cdf(x, d, lam) - approx) <= 0.01


@pytest.mark.parametrize("x,d", [(1.0, 1), (5.0, 3), (30.0, 20)])
def test_noncentral_below_central(x, d):
    assert noncentral_chi2_cdf(x, d, 2.5) <= chi2_cdf(x, d)


def test_noncentral_monotone_in_x_and_lambda():
    values = [noncentral_chi2_cdf(x, 5, 7.0) for x in np.linspace(0.0, 60.0, 100)]
    assert all(b >= a for a, b in zip(values, values[1:]))
    lams = [noncentral_chi2_cdf(12.0, 5, lam) for lam in np.linspace(0.0, 50.0, 60)]
    assert all(b <= a for a, b in zip(lams, lams[1:]))


def test_noncentral_rejects_negative():
    with pytest.raises(DomainError):
        noncentral_chi2_cdf(-1.0, 2, 1.0)
    with pytest.raises(DomainError):
        noncentral_chi2_cdf(1.0, 2, -1.0)


# ---------------------------------------------------------------------------
# tolerance plumbing
# ---------------------------------------------------------------------------


def test_tolerance_validation():
    with pytest.raises(DomainError):
        Tolerance(abs_tol=0.0)
    with pytest.raises(DomainError):
        Tolerance(rel_tol=-1e-9)
    with pytest.raises(DomainError):
        Tolerance(max_iter=0)


def test_tolerance_budget_is_respected():
    tight = Tolerance(max_iter=3)
    with pytest.raises(NumericError):
        chi2_upper_quantile(0.1, 2, tol=tight)


def test_default_max_log_inv_alpha_exported():
    assert specfun.MAX_LOG_INV_ALPHA == 700.0
