"""Samplers and log-densities for the distributions used by the models.

All densities are returned in natural-log space. Parameters follow the
conventions used throughout the package: Gamma is (shape, scale), the
negative binomial counts failures before the ``k``-th success with success
probability ``p``, and Lomax is (scale, shape).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

__all__ = [
    "Exponential",
    "Poisson",
    "Gamma",
    "Uniform",
    "Categorical",
    "Normal",
    "NegativeBinomial",
    "Lomax",
    "negbinom_logpmf",
    "lomax_logpdf",
    "sample",
]


def _positive(name, value):
    if not (np.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")


def negbinom_logpmf(k, p, r):
    """Log pmf of the number of failures ``r`` before the ``k``-th success.

    ``log C(r + k - 1, k - 1) + k log p + r log(1 - p)``, with the binomial
    coefficient written through the gamma function so ``k`` may be real.
    ``p == 1`` puts all mass on ``r == 0``.

    Raises
    ------
    ValueError
        If ``r`` is negative or not an integer.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(r != np.floor(r)):
        raise ValueError("negative binomial support is the non-negative integers")
    k = np.asarray(k, dtype=float)
    p = np.asarray(p, dtype=float)
    out = gammaln(r + k) - gammaln(k) - gammaln(r + 1.0) + xlogy(k, p) + xlog1py(r, -p)
    return out if out.ndim else float(out)


def lomax_logpdf(scale, shape, delta):
    """Log density of a Lomax (Pareto type II) variable; ``-inf`` for ``delta < 0``."""
    delta = np.asarray(delta, dtype=float)
    with np.errstate(invalid="ignore"):
        out = np.where(
            delta >= 0,
            np.log(shape) - np.log(scale) - (shape + 1.0) * np.log1p(np.maximum(delta, 0) / scale),
            -np.inf,
        )
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self):
        _positive("rate", self.rate)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, math.log(self.rate) - self.rate * x, -np.inf)

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size)


@dataclass(frozen=True)
class Poisson:
    mean: float

    def __post_init__(self):
        if not (np.isfinite(self.mean) and self.mean >= 0):
            raise ValueError(f"Poisson mean must be >= 0, got {self.mean!r}")

    def logpmf(self, n):
        n = np.asarray(n, dtype=float)
        return xlogy(n, self.mean) - self.mean - gammaln(n + 1.0)

    def sample(self, rng, size=None):
        return rng.poisson(self.mean, size)


@dataclass(frozen=True)
class Gamma:
    """Gamma(shape, scale); mean ``shape * scale``."""

    shape: float
    scale: float

    def __post_init__(self):
        _positive("shape", self.shape)
        _positive("scale", self.scale)

    @property
    def mean(self):
        return self.shape * self.scale

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(
                x > 0,
                xlogy(self.shape - 1.0, x) - x / self.scale
                - gammaln(self.shape) - self.shape * math.log(self.scale),
                -np.inf,
            )

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, self.scale, size)


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("Uniform needs hi > lo")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        return np.where(inside, -math.log(self.hi - self.lo), -np.inf)

    def sample(self, rng, size=None):
        return rng.uniform(self.lo, self.hi, size)


@dataclass(frozen=True)
class Categorical:
    probs: tuple

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0 or np.any(p < 0) or not np.isfinite(p.sum()) or p.sum() <= 0:
            raise ValueError("probabilities must be non-negative with a finite positive sum")
        object.__setattr__(self, "probs", tuple(p))

    def logpmf(self, i):
        p = np.asarray(self.probs)
        with np.errstate(divide="ignore"):
            return np.log(p[i] / p.sum())

    def sample(self, rng, size=None):
        p = np.asarray(self.probs)
        return rng.choice(p.size, size=size, p=p / p.sum())


@dataclass(frozen=True)
class Normal:
    """Normal(mean, variance)."""

    mean: float
    var: float

    def __post_init__(self):
        _positive("variance", self.var)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return -0.5 * (math.log(2 * math.pi * self.var) + (x - self.mean) ** 2 / self.var)

    def sample(self, rng, size=None):
        return rng.normal(self.mean, math.sqrt(self.var), size)


@dataclass(frozen=True)
class NegativeBinomial:
    """Failures before the ``k``-th success, success probability ``p``."""

    k: float
    p: float

    def __post_init__(self):
        _positive("k", self.k)
        if not 0 < self.p <= 1:
            raise ValueError(f"p must lie in (0, 1], got {self.p!r}")

    @property
    def mean(self):
        return self.k * (1 - self.p) / self.p

    def logpmf(self, r):
        return negbinom_logpmf(self.k, self.p, r)

    def sample(self, rng, size=None):
        return rng.negative_binomial(self.k, self.p, size)


@dataclass(frozen=True)
class Lomax:
    """Lomax(scale, shape): density ``shape/scale * (1 + x/scale)^-(shape+1)``."""

    scale: float
    shape: float

    def __post_init__(self):
        _positive("scale", self.scale)
        _positive("shape", self.shape)

    def logpdf(self, x):
        return lomax_logpdf(self.scale, self.shape, x)

    def sample(self, rng, size=None):
        # inverse CDF; 1 - U keeps the base in (0, 1]
        u = 1.0 - rng.random(size)
        return self.scale * (u ** (-1.0 / self.shape) - 1.0)


def sample(dist, rng, size=None):
    """Draw from any distribution in this module."""
    return dist.sample(rng, size)
