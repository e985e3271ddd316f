"""Reference computations that share no code with the package."""

import math

import numpy as np
from scipy import integrate
from scipy import stats as sps


def gamma_poisson_pmf(k, theta, delta, n):
    """P(n) for n ~ Poisson(nu * delta), nu ~ Gamma(k, theta), by quadrature over nu."""
    if delta == 0:
        return 1.0 if n == 0 else 0.0

    def f(nu):
        return sps.gamma.pdf(nu, k, scale=theta) * sps.poisson.pmf(n, nu * delta)

    hi = sps.gamma.ppf(1 - 1e-16, k, scale=theta)
    val, _ = integrate.quad(f, 0, hi, epsabs=1e-14, epsrel=1e-12, limit=400)
    return val


def gamma_exponential_pdf(k, theta, delta):
    """Density of d ~ Exponential(nu), nu ~ Gamma(k, theta), by quadrature over nu."""

    def f(nu):
        return sps.gamma.pdf(nu, k, scale=theta) * nu * math.exp(-nu * delta)

    hi = sps.gamma.ppf(1 - 1e-16, k, scale=theta)
    val, _ = integrate.quad(f, 0, hi, epsabs=1e-14, epsrel=1e-12, limit=400)
    return val


def lgss_log_evidence_dense(y, a, trans_var, c, obs_var, prior_var):
    """log p(y) from the joint Gaussian of (y_1..y_T), built as one covariance matrix."""
    T = len(y)
    # x_t = a^t x_0 + sum_{s<=t} a^(t-s) e_s
    var = np.empty(T)
    cov = np.empty((T, T))
    v = prior_var
    for t in range(T):
        v = a * a * v + trans_var
        var[t] = v
    for i in range(T):
        for j in range(i, T):
            cov[i, j] = cov[j, i] = a ** (j - i) * var[i]
    sigma = c * c * cov + obs_var * np.eye(T)
    return float(sps.multivariate_normal(np.zeros(T), sigma).logpdf(np.asarray(y)))


def recursive_crbd_loglik(tree, lam, mu):
    """Complete-tree CRBD log-likelihood by walking branches one at a time.

    Every branch contributes its survival ``exp(-(lam + mu) * length)`` and
    the event at its lower end; the ordering factor counts binary nodes and
    extant tips along the way.
    """
    speciations = extant = 0
    total = 0.0
    stack = [tree.root]
    while stack:
        node = stack.pop()
        for child in node.children:
            total -= (lam + mu) * (node.age - child.age)
            if child.children:
                speciations += 1
                total += math.log(lam)
                stack.append(child)
            elif child.age == 0.0:
                extant += 1
            else:
                total += math.log(mu)
    binary = speciations + (len(tree.root.children) == 2)
    return total + binary * math.log(2) - math.lgamma(extant + 1)


def _log_p1(t, lam, mu):
    """log of the probability (density) that a lineage at age t leaves one reconstructed lineage."""
    r = lam - mu
    if abs(r) < 1e-12:
        return -2.0 * math.log1p(lam * t)
    return 2 * math.log(abs(r)) - r * t - 2 * math.log(abs(lam - mu * math.exp(-r * t)))


def reconstructed_log_evidence(tree, lam, mu):
    """Exact expected evidence of the CRBD program at fixed rates.

    Product over internal nodes of the one-lineage factors: the root (MRCA)
    starts two lineages, each further speciation contributes ``lam`` and
    one more lineage. Ordering constants are excluded, as in the program.
    """
    total = 2 * _log_p1(tree.root.age, lam, mu)
    for node in tree.nodes[1:]:
        if node.children:
            total += math.log(lam) + _log_p1(node.age, lam, mu)
    return total


def prior_averaged_log_evidence(tree, prior_lambda, prior_mu):
    """Evidence with Gamma(shape, scale) priors on both rates, by 2-D quadrature."""
    ka, ta = prior_lambda
    km, tm = prior_mu
    peak = reconstructed_log_evidence(tree, ka * ta, km * tm)

    def f(mu, lam):
        return math.exp(reconstructed_log_evidence(tree, lam, mu) - peak
                        + sps.gamma.logpdf(lam, ka, scale=ta) + sps.gamma.logpdf(mu, km, scale=tm))

    val, _ = integrate.dblquad(f, 0, sps.gamma.ppf(1 - 1e-12, ka, scale=ta),
                               0, sps.gamma.ppf(1 - 1e-12, km, scale=tm), epsabs=1e-12, epsrel=1e-9)
    return math.log(val) + peak
