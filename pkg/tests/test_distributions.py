import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from incomemix import _kernels
from incomemix import distributions as dist
from incomemix.distributions import DegenerateIntervalError, DomainError, Gb2Params, InvariantError, LognormalParams
from incomemix.model import MixtureParams

SIM1 = MixtureParams([0.2, 0.5, 0.3], [2.0, 3.0, 4.0], [0.3, 0.1, 0.2])
SIM2 = Gb2Params(2.0, 10.0, 2.5, 1.5)


# --- lognormal ------------------------------------------------------------

def test_ln_pdf_at_one_and_e():
    assert dist.ln_pdf(1.0, LognormalParams(0.0, 1.0)) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
    assert dist.ln_pdf(math.e, LognormalParams(1.0, 1.0)) == pytest.approx(
        1 / (math.e * math.sqrt(2 * math.pi)), rel=1e-15)


def test_ln_pdf_matches_cdf_derivative():
    p = LognormalParams(1.0, 0.5)
    h = 1e-5
    fd = (dist.ln_cdf(5 + h, p) - dist.ln_cdf(5 - h, p)) / (2 * h)
    assert dist.ln_pdf(5.0, p) == pytest.approx(fd, abs=1e-6)


def test_ln_cdf_values():
    assert dist.ln_cdf(math.exp(0.7), LognormalParams(0.7, 3.0)) == pytest.approx(0.5, abs=1e-15)
    # high-precision oracle: Phi(ln 2) from mpmath, 30 digits
    assert dist.ln_cdf(2.0, LognormalParams(0.0, 1.0)) == pytest.approx(0.755891404214417, rel=1e-13)


def test_ln_domain_errors():
    with pytest.raises(DomainError):
        dist.ln_pdf(0.0, LognormalParams(0.0, 1.0))
    with pytest.raises(DomainError):
        dist.ln_pdf(-1.0, LognormalParams(0.0, 1.0))
    with pytest.raises(DomainError):
        LognormalParams(0.0, 0.0)
    with pytest.raises(DomainError):
        LognormalParams(float("nan"), 1.0)


def test_ln_matches_scipy():
    x = np.geomspace(1e-3, 1e3, 50)
    p = LognormalParams(0.3, 0.8)
    ref = stats.lognorm(s=math.sqrt(0.8), scale=math.exp(0.3))
    np.testing.assert_allclose(dist.ln_pdf(x, p), ref.pdf(x), rtol=1e-12)
    np.testing.assert_allclose(dist.ln_cdf(x, p), ref.cdf(x), rtol=1e-12)
    np.testing.assert_allclose(dist.ln_sf(x, p), ref.sf(x), rtol=1e-12)


@given(st.floats(-5, 5), st.floats(0.01, 4), st.floats(-6, 6))
def test_ln_log_space_agrees_with_direct(mu, s2, z):
    p = LognormalParams(mu, s2)
    x = math.exp(mu + z * math.sqrt(s2))
    direct = math.exp(-0.5 * z * z) / (x * math.sqrt(2 * math.pi * s2))
    assert math.exp(dist.ln_logpdf(x, p)) == pytest.approx(direct, rel=1e-12)


# --- mixtures -------------------------------------------------------------

def test_mln_single_component_equals_lognormal():
    x = np.geomspace(0.1, 100, 30)
    m = MixtureParams.single(1.0, 0.4)
    p = LognormalParams(1.0, 0.4)
    np.testing.assert_allclose(dist.mln_pdf(x, m), dist.ln_pdf(x, p), rtol=1e-15)
    np.testing.assert_allclose(dist.mln_cdf(x, m), dist.ln_cdf(x, p), rtol=1e-15)


def test_mln_identical_components_collapse():
    x = np.geomspace(0.1, 100, 30)

    # MixtureParams forbids equal log-means, so use the duck-typed interface
    class Duck:
        weights = np.array([0.3, 0.7])
        mus = np.array([1.0, 1.0])
        sigma2s = np.array([0.4, 0.4])
    np.testing.assert_allclose(dist.mln_pdf(x, Duck), dist.ln_pdf(x, LognormalParams(1.0, 0.4)), rtol=1e-14)


def test_mln_sim1_term_by_term():
    brute = sum(w * dist.ln_pdf(20.0, LognormalParams(m, s)) for w, m, s in zip(SIM1.weights, SIM1.mus, SIM1.sigma2s))
    assert dist.mln_pdf(20.0, SIM1) == pytest.approx(brute, rel=1e-14)


def test_mln_cdf_is_integral_of_pdf():
    for x in (3.0, 20.0, 80.0):
        val, _ = integrate.quad(lambda y: dist.mln_pdf(y, SIM1), 0, x, epsabs=1e-13, limit=200)
        assert dist.mln_cdf(x, SIM1) == pytest.approx(val, abs=1e-8)


def test_mln_cdf_limits_and_monotone():
    x = np.geomspace(1e-6, 1e6, 400)
    F = dist.mln_cdf(x, SIM1)
    assert F[0] < 1e-12 and F[-1] == pytest.approx(1.0, abs=1e-15)
    assert np.all(np.diff(F) >= 0)


def test_mln_weight_violation():
    class Bad:
        weights = np.array([0.5, 0.6])
        mus = np.array([0.0, 1.0])
        sigma2s = np.array([1.0, 1.0])
    with pytest.raises(InvariantError):
        dist.mln_pdf(1.0, Bad)


def test_mln_pdf_integrates_to_one():
    val, _ = integrate.quad(lambda y: dist.mln_pdf(math.exp(y), SIM1) * math.exp(y), -10, 15, limit=200)
    assert val == pytest.approx(1.0, abs=1e-6)


# --- GB2 ------------------------------------------------------------------

def test_gb2_reduces_to_log_logistic():
    b = 7.0
    assert dist.gb2_pdf(b, Gb2Params(1.0, b, 1.0, 1.0)) == pytest.approx(1 / (4 * b), rel=1e-14)


@pytest.mark.parametrize("a,p", [(0.5, 0.7), (2.0, 2.0), (5.0, 3.3)])
def test_gb2_median_when_p_equals_q(a, p):
    assert dist.gb2_cdf(3.0, Gb2Params(a, 3.0, p, p)) == pytest.approx(0.5, abs=1e-14)


def test_gb2_pdf_matches_cdf_derivative():
    h = 1e-5
    fd = (dist.gb2_cdf(10 + h, SIM2) - dist.gb2_cdf(10 - h, SIM2)) / (2 * h)
    assert dist.gb2_pdf(10.0, SIM2) == pytest.approx(fd, abs=1e-6)


def test_gb2_against_scipy_betaprime():
    # (x/b)^a ~ BetaPrime(p, q), so F(x) = BetaPrimeCDF((x/b)^a)
    x = np.geomspace(0.1, 1000, 40)
    ref = stats.betaprime(SIM2.p, SIM2.q).cdf((x / SIM2.b) ** SIM2.a)
    np.testing.assert_allclose(dist.gb2_cdf(x, SIM2), ref, rtol=1e-10)
    np.testing.assert_allclose(dist.gb2_sf(x, SIM2), 1 - ref, rtol=1e-8, atol=1e-15)


def test_gb2_pdf_integrates_to_one_and_mean():
    val, _ = integrate.quad(lambda y: dist.gb2_pdf(math.exp(y), SIM2) * math.exp(y), -30, 60, limit=400)
    assert val == pytest.approx(1.0, abs=1e-6)
    m, _ = integrate.quad(lambda y: dist.gb2_pdf(math.exp(y), SIM2) * math.exp(2 * y), -30, 60, limit=400)
    assert dist.gb2_mean(SIM2) == pytest.approx(m, rel=1e-6)


def test_gb2_params_validation():
    with pytest.raises(DomainError):
        Gb2Params(0.0, 1.0, 1.0, 1.0)
    assert not Gb2Params(1.0, 1.0, 1.0, 0.9).has_finite_mean


# --- normal quantile kernel -----------------------------------------------

def test_kernel_ndtri_exp_matches_scipy():
    lp = np.concatenate([-np.geomspace(1e-300, 1e4, 2000), [-1e-20, -0.5, -0.6931471805599453]])
    mine = np.array([_kernels.ndtri_exp(v) for v in lp])
    ref = special.ndtri_exp(lp)
    np.testing.assert_allclose(mine, ref, rtol=1e-12, atol=1e-12)


# --- truncated sampling ---------------------------------------------------

def test_truncated_lognormal_containment_and_mean():
    rng = dist.make_rng(11)
    p = LognormalParams(0.0, 1.0)
    x = dist.sample_truncated_lognormal(p, 1.0, 2.0, rng, size=1_000_000)
    assert np.all((x > 1.0) & (x <= 2.0))
    num, _ = integrate.quad(lambda v: v * dist.ln_pdf(v, p), 1, 2)
    mass = dist.ln_cdf(2.0, p) - dist.ln_cdf(1.0, p)
    se = x.std() / math.sqrt(x.size)
    assert abs(x.mean() - num / mass) < 3 * se


def test_truncated_lognormal_ecdf():
    rng = dist.make_rng(12)
    p = LognormalParams(2.0, 0.3)
    lo, hi = 5.0, 12.0
    x = np.sort(dist.sample_truncated_lognormal(p, lo, hi, rng, size=100_000))
    F = (dist.ln_cdf(x, p) - dist.ln_cdf(lo, p)) / (dist.ln_cdf(hi, p) - dist.ln_cdf(lo, p))
    ecdf = np.arange(1, x.size + 1) / x.size
    assert np.max(np.abs(ecdf - F)) < 0.01


def test_truncated_lognormal_untruncated_matches_lognormal():
    rng = dist.make_rng(13)
    p = LognormalParams(1.0, 0.5)
    x = dist.sample_truncated_lognormal(p, 0.0, np.inf, rng, size=50_000)
    ks = stats.kstest(np.log(x), stats.norm(1.0, math.sqrt(0.5)).cdf)
    assert ks.pvalue > 0.001


@settings(max_examples=200, deadline=None)
@given(st.floats(-36, 36), st.floats(1e-6, 5), st.floats(0, 1, exclude_min=True, exclude_max=True))
def test_truncated_std_normal_far_tails(a, width, u):
    b = a + width
    z = float(dist.truncated_std_normal(a, b, u))
    assert a <= z <= b


@settings(max_examples=200, deadline=None)
@given(st.floats(-60, 60), st.floats(1e-3, 5), st.floats(0, 1, exclude_min=True, exclude_max=True))
def test_truncated_std_normal_lenient_beyond_floor(a, width, u):
    b = a + width
    z = float(dist.truncated_std_normal(a, b, u, strict=False))
    assert a <= z <= b


def test_truncated_tail_precision():
    # deep upper tail: (30, 31]; the conditional median is close to a + log 2 / a
    z = dist.truncated_std_normal(30.0, 31.0, 0.5)
    assert z == pytest.approx(30.0 + math.log(2) / 30.0, rel=1e-3)


def test_degenerate_interval_raises():
    with pytest.raises(DegenerateIntervalError) as err:
        dist.truncated_std_normal(50.0, 50.0 + 1e-300, 0.5)
    assert "50.0" in str(err.value)
    with pytest.raises(DomainError):
        dist.sample_truncated_normal(0.0, 1.0, 2.0, 1.0, dist.make_rng(0))


# --- elementary samplers --------------------------------------------------

def test_gamma_mean():
    rng = dist.make_rng(1)
    k = 2.5
    x = dist.sample_gamma(k, 1.0, rng, size=1_000_000)
    assert abs(x.mean() - k) < 3 * math.sqrt(k / 1e6)


def test_beta_uniform_ks():
    rng = dist.make_rng(2)
    x = dist.sample_beta(1.0, 1.0, rng, size=100_000)
    assert stats.kstest(x, "uniform").statistic < 1.63 / math.sqrt(x.size)


def test_dirichlet_exchangeable():
    rng = dist.make_rng(3)
    draws = np.array([dist.sample_dirichlet(np.full(4, 1.5), rng) for _ in range(20_000)])
    np.testing.assert_allclose(draws.mean(axis=0), 0.25, atol=0.01)
    with pytest.raises(DomainError):
        dist.sample_dirichlet([1.0, 0.0], rng)


def test_seeded_draws_reproducible():
    a = dist.sample_lognormal_mixture(SIM1, 100, dist.make_rng(5))
    b = dist.sample_lognormal_mixture(SIM1, 100, dist.make_rng(5))
    np.testing.assert_array_equal(a, b)
    s1, s2 = dist.spawn_seeds(7, 2)
    assert not np.array_equal(dist.make_rng(s1).random(3), dist.make_rng(s2).random(3))


def test_gb2_sampler_matches_cdf():
    x = dist.sample_gb2(SIM2, 50_000, dist.make_rng(4))
    assert stats.kstest(x, lambda v: dist.gb2_cdf(v, SIM2)).pvalue > 0.001
