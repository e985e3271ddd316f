import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy import stats as sps

from phylosmc import dists


def test_negbinom_examples():
    assert dists.negbinom_logpmf(1, 0.5, 0) == pytest.approx(math.log(0.5), abs=1e-15)
    assert dists.negbinom_logpmf(2, 0.5, 1) == pytest.approx(math.log(0.25), abs=1e-15)
    assert dists.negbinom_logpmf(3.0, 1.0, 0) == 0.0
    assert dists.negbinom_logpmf(3.0, 1.0, 2) == -math.inf


@pytest.mark.parametrize("r", [-1, 0.5, [0, -2]])
def test_negbinom_domain_errors(r):
    with pytest.raises(ValueError):
        dists.negbinom_logpmf(1, 0.5, r)


def test_lomax_examples():
    assert dists.lomax_logpdf(1, 1, 0) == pytest.approx(0.0, abs=1e-15)
    assert dists.lomax_logpdf(1, 1, 1) == pytest.approx(math.log(0.25), abs=1e-15)
    assert dists.lomax_logpdf(2, 3, 0) == pytest.approx(math.log(1.5), abs=1e-15)
    assert dists.lomax_logpdf(1, 1, -0.1) == -math.inf


@settings(max_examples=40, deadline=None)
@given(k=st.floats(0.3, 30.0), p=st.floats(0.05, 0.95))
def test_negbinom_sums_to_one(k, p):
    r = np.arange(0, 20000)
    total = np.exp(dists.negbinom_logpmf(k, p, r)).sum()
    assert total == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(scale=st.floats(0.05, 20.0), shape=st.floats(0.5, 20.0))
def test_lomax_integrates_to_one(scale, shape):
    total, _ = integrate.quad(lambda x: math.exp(dists.lomax_logpdf(scale, shape, x)), 0, np.inf,
                              epsabs=1e-12, epsrel=1e-10, limit=500)
    assert total == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize(
    "dist",
    [dists.Exponential(2.0), dists.Gamma(2.5, 0.7), dists.Uniform(-1.0, 3.0), dists.Normal(1.0, 2.0),
     dists.Lomax(1.5, 2.5)],
)
def test_continuous_densities_normalise(dist):
    total, _ = integrate.quad(lambda x: float(np.exp(dist.logpdf(x))), -np.inf, np.inf,
                              points=None, limit=500)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_discrete_densities_normalise():
    n = np.arange(0, 200)
    assert np.exp(dists.Poisson(7.5).logpmf(n)).sum() == pytest.approx(1.0, abs=1e-12)
    assert np.exp(dists.NegativeBinomial(2.5, 0.3).logpmf(n)).sum() == pytest.approx(1.0, abs=1e-9)
    cat = dists.Categorical((1.0, 3.0, 0.0))
    assert np.exp(cat.logpmf(np.arange(3))).tolist() == pytest.approx([0.25, 0.75, 0.0])


def test_densities_match_scipy():
    x = np.linspace(0.1, 5, 9)
    assert np.allclose(dists.Gamma(2.5, 0.7).logpdf(x), sps.gamma.logpdf(x, 2.5, scale=0.7))
    assert np.allclose(dists.Normal(1.0, 2.0).logpdf(x), sps.norm.logpdf(x, 1.0, math.sqrt(2.0)))
    assert np.allclose(dists.Lomax(1.5, 2.5).logpdf(x), sps.lomax.logpdf(x, 2.5, scale=1.5))
    r = np.arange(10)
    assert np.allclose(dists.negbinom_logpmf(3, 0.4, r), sps.nbinom.logpmf(r, 3, 0.4))


@pytest.mark.parametrize(
    "bad",
    [lambda: dists.Exponential(0.0), lambda: dists.Gamma(1.0, -1.0), lambda: dists.Poisson(-1.0),
     lambda: dists.Uniform(1.0, 1.0), lambda: dists.Categorical((0.0, 0.0)),
     lambda: dists.Categorical((1.0, -1.0)), lambda: dists.Normal(0.0, 0.0),
     lambda: dists.NegativeBinomial(1.0, 0.0), lambda: dists.Lomax(1.0, math.inf)],
)
def test_invalid_parameters_raise(bad):
    with pytest.raises(ValueError):
        bad()


def test_exponential_sample_mean():
    rng = np.random.default_rng(1)
    x = dists.sample(dists.Exponential(2.0), rng, 10**6)
    assert abs(x.mean() - 0.5) < 3 * x.std() / 1000


def test_degenerate_categorical():
    rng = np.random.default_rng(2)
    assert set(dists.Categorical((0, 1, 0)).sample(rng, 1000).tolist()) == {1}


def test_negbinom_sample_mean():
    rng = np.random.default_rng(3)
    x = dists.NegativeBinomial(1, 0.5).sample(rng, 10**5)
    assert abs(x.mean() - 1.0) < 3 * x.std() / math.sqrt(x.size)


def test_negbinom_pmf_vs_bernoulli_counting():
    """Failures before the k-th Bernoulli success, counted directly, fit the pmf."""
    k, p, draws = 3, 0.4, 10**5
    rng = np.random.default_rng(4)
    # geometric(p) counts trials to a success; minus one gives failures
    failures = (rng.geometric(p, size=(draws, k)) - 1).sum(axis=1)
    top = 15
    observed = np.bincount(np.minimum(failures, top), minlength=top + 1)
    pmf = np.exp(dists.negbinom_logpmf(k, p, np.arange(top)))
    expected = draws * np.append(pmf, 1 - pmf.sum())
    chi2 = sps.chisquare(observed, expected)
    assert chi2.pvalue > 1e-3


def test_lomax_matches_gamma_exponential_mixture():
    k, theta, draws = 2.5, 0.8, 10**5
    rng = np.random.default_rng(5)
    direct = dists.Lomax(1 / theta, k).sample(rng, draws)
    nu = rng.gamma(k, theta, draws)
    two_stage = rng.exponential(1 / nu)
    assert sps.ks_2samp(direct, two_stage).pvalue > 1e-3
    assert sps.kstest(direct, sps.lomax(k, scale=1 / theta).cdf).pvalue > 1e-3


def test_samplers_reproducible():
    for dist in (dists.Exponential(1.0), dists.Gamma(2.0, 1.0), dists.Lomax(1.0, 2.0),
                 dists.NegativeBinomial(2.0, 0.3), dists.Poisson(3.0)):
        a = dist.sample(np.random.default_rng(9), 5)
        b = dist.sample(np.random.default_rng(9), 5)
        assert np.array_equal(a, b)
