import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from phylosmc import delayed
from phylosmc.delayed import GammaNode
from phylosmc.dists import lomax_logpdf

from .oracles import gamma_exponential_pdf, gamma_poisson_pmf


# -- worked examples ---------------------------------------------------------------


def test_observe_count_examples():
    node = GammaNode(1.0, 1.0)
    assert node.observe_poisson_count(1.0, 0) == pytest.approx(math.log(0.5), abs=1e-15)
    assert (node.k, node.theta) == (1.0, 0.5)
    node = GammaNode(1.0, 1.0)
    assert node.observe_poisson_count(1.0, 2) == pytest.approx(math.log(0.125), abs=1e-15)
    assert (node.k, node.theta) == (3.0, 0.5)


def test_zero_exposure():
    node = GammaNode(2.0, 3.0)
    assert node.observe_poisson_count(0.0, 0) == 0.0
    assert (node.k, node.theta) == (2.0, 3.0)
    assert GammaNode(2.0, 3.0).observe_poisson_count(0.0, 1) == -math.inf
    rng = np.random.default_rng(0)
    node = GammaNode(2.0, 3.0)
    assert all(node.sample_poisson_count(0.0, rng) == 0 for _ in range(100))
    assert (node.k, node.theta) == (2.0, 3.0)


@pytest.mark.parametrize("exposure, n", [(1.0, -1), (1.0, 1.5), (-1.0, 0)])
def test_observe_count_domain_errors(exposure, n):
    with pytest.raises(ValueError):
        GammaNode(1.0, 1.0).observe_poisson_count(exposure, n)


def test_observe_exponential_zero_examples():
    node = GammaNode(1.0, 1.0)
    assert node.observe_exponential_zero() == 0.0
    assert (node.k, node.theta) == (2.0, 1.0)
    assert node.observe_exponential_zero() == pytest.approx(math.log(2))
    assert (node.k, node.theta) == (3.0, 1.0)
    assert GammaNode(3.0, 2.0).observe_exponential_zero() == pytest.approx(math.log(6))


def test_waiting_time_updates_shape_by_one():
    rng = np.random.default_rng(1)
    for _ in range(50):
        node = GammaNode(1.0, 1.0)
        d = node.sample_waiting_time(rng)
        assert node.k == 2.0
        assert node.theta == pytest.approx(1.0 / (1.0 + d))


def test_invalid_node():
    with pytest.raises(ValueError):
        GammaNode(0.0, 1.0)
    with pytest.raises(ValueError):
        GammaNode(1.0, -1.0)


def test_copy_is_independent():
    a = GammaNode(1.0, 1.0)
    b = a.copy()
    b.observe_poisson_count(1.0, 3)
    assert (a.k, a.theta) == (1.0, 1.0)
    assert a.as_gamma().mean == a.mean == 1.0


# -- marginals against numerical integration ------------------------------------------


COUNT_GRID = [(k, th, d, n) for k, th in ((1.0, 1.0), (2.5, 0.4), (7.0, 0.15), (1.3, 3.0))
              for d, n in ((0.3, 0), (1.0, 2), (2.5, 1), (0.05, 4), (4.0, 7))]
WAIT_GRID = [(k, th, d) for k, th in ((1.0, 1.0), (2.5, 0.4), (7.0, 0.15), (1.3, 3.0))
             for d in (0.0, 0.2, 1.0, 3.0, 9.0)]


def test_grids_have_twenty_points():
    assert len(COUNT_GRID) == len(WAIT_GRID) == 20


@pytest.mark.parametrize("k, theta, delta, n", COUNT_GRID)
def test_count_marginal_matches_integration(k, theta, delta, n):
    got = math.exp(GammaNode(k, theta).observe_poisson_count(delta, n))
    assert abs(got - gamma_poisson_pmf(k, theta, delta, n)) < 1e-9


@pytest.mark.parametrize("k, theta, delta", WAIT_GRID)
def test_waiting_marginal_matches_integration(k, theta, delta):
    got = math.exp(lomax_logpdf(1.0 / theta, k, delta))
    assert abs(got - gamma_exponential_pdf(k, theta, delta)) < 1e-9


# -- sampling laws ----------------------------------------------------------------------


def test_count_mean_over_fresh_nodes():
    rng = np.random.default_rng(2)
    n = delayed.draw_count(np.ones(10**5), np.ones(10**5), 1.0, rng)
    assert abs(n.mean() - 1.0) < 3 * n.std() / math.sqrt(n.size)


def test_waiting_time_median():
    rng = np.random.default_rng(3)
    size = 10**5
    d = delayed.draw_waiting_time(np.ones(size), np.ones(size), rng)
    # median of Lomax(1, 1) is 1; order-statistic SE = 1 / (2 f(m) sqrt(n)), f(1) = 1/4
    se = 1.0 / (2 * 0.25 * math.sqrt(size))
    assert abs(np.median(d) - 1.0) < 3 * se


def test_chained_counts_match_two_stage():
    draws = 40000
    rng = np.random.default_rng(4)
    chained = np.empty((draws, 2), dtype=int)
    for i in range(draws):
        node = GammaNode(1.0, 1.0)
        chained[i] = node.sample_poisson_count(1.0, rng), node.sample_poisson_count(1.0, rng)
    nu = rng.gamma(1.0, 1.0, draws)
    direct = np.stack([rng.poisson(nu), rng.poisson(nu)], axis=1)
    top = 5

    def table(x):
        x = np.minimum(x, top)
        return np.bincount(x[:, 0] * (top + 1) + x[:, 1], minlength=(top + 1) ** 2)

    a, b = table(chained), table(direct)
    keep = (a + b) > 0
    assert sps.chi2_contingency(np.stack([a[keep], b[keep]])).pvalue > 1e-3


def test_chained_waits_match_two_stage():
    draws = 40000
    rng = np.random.default_rng(5)
    chained = np.empty(draws)
    for i in range(draws):
        node = GammaNode(1.0, 1.0)
        chained[i] = node.sample_waiting_time(rng) + node.sample_waiting_time(rng)
    nu = rng.gamma(1.0, 1.0, draws)
    direct = rng.exponential(1 / nu) + rng.exponential(1 / nu)
    assert sps.ks_2samp(chained, direct).pvalue > 1e-3


def test_vector_kernels_match_scalar_node():
    k = np.array([1.0, 2.5, 4.0])
    theta = np.array([1.0, 0.3, 2.0])
    lp = delayed.count_logpmf(k, theta, 0.7, np.array([0, 3, 1]))
    for i, n in enumerate((0, 3, 1)):
        assert lp[i] == pytest.approx(GammaNode(k[i], theta[i]).observe_poisson_count(0.7, n))
    assert np.allclose(delayed.shrink_scale(theta, 0.7), theta / (1 + 0.7 * theta))
    assert np.allclose(1 / delayed.shrink_scale(theta, 0.7), 1 / theta + 0.7)


# -- marginalisation identity ---------------------------------------------------------------

OPS = st.sampled_from(["observe_count", "sample_count", "wait", "zero", "censor"])


def _apply(node, op, arg, rng):
    """Run one operation; return (log marginal of its outcome, log likelihood as a function of nu)."""
    k, theta = node.k, node.theta
    if op == "observe_count":
        delta, n = arg
        logw = node.observe_poisson_count(delta, n)
        return logw, lambda nu: sps.poisson.logpmf(n, nu * delta)
    if op == "sample_count":
        delta = arg[0]
        n = node.sample_poisson_count(delta, rng)
        return (delayed.count_logpmf(k, theta, delta, n),
                lambda nu: sps.poisson.logpmf(n, nu * delta))
    if op == "wait":
        d = node.sample_waiting_time(rng)
        return lomax_logpdf(1 / theta, k, d), lambda nu: math.log(nu) - nu * d
    if op == "zero":
        return node.observe_exponential_zero(), lambda nu: math.log(nu)
    delta = arg[0]
    node.censor(delta)
    # the censored fact "no event during delta" has marginal probability (1 + delta theta)^-k
    return -k * math.log1p(delta * theta), lambda nu: -nu * delta


@settings(max_examples=150, deadline=None)
@given(
    ops=st.lists(st.tuples(OPS, st.floats(0.01, 3.0), st.integers(0, 5)), min_size=3, max_size=3),
    k=st.floats(0.5, 5.0),
    theta=st.floats(0.1, 3.0),
    seed=st.integers(0, 2**32 - 1),
)
def test_marginalisation_identity(ops, k, theta, seed):
    rng = np.random.default_rng(seed)
    node = GammaNode(k, theta)
    total_w = 0.0
    liks = []
    for op, delta, n in ops:
        w, lik = _apply(node, op, (delta, n), rng)
        total_w += w
        liks.append(lik)
    for nu in (0.05, 0.5, 1.0, 2.7):
        lhs = total_w + sps.gamma.logpdf(nu, node.k, scale=node.theta)
        rhs = sps.gamma.logpdf(nu, k, scale=theta) + sum(f(nu) for f in liks)
        assert abs(lhs - rhs) < 1e-9 * max(1.0, abs(rhs))
