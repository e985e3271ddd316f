"""Conjugate gamma rates for delayed sampling.

A rate ``nu ~ Gamma(k, theta)`` is never drawn. Poisson counts and
exponential waiting times that depend on it are drawn from (or scored
against) their marginals, the negative binomial and the Lomax, and the
gamma parameters are replaced by the posterior after each operation:

* count ``n`` over exposure ``d``: ``k += n``, ``theta /= 1 + d * theta``
* waiting time ``d``:              ``k += 1``, ``theta /= 1 + d * theta``
* no event over exposure ``d``:    ``theta /= 1 + d * theta``

The module-level functions are the array kernels used by the models (one
entry per particle); :class:`GammaNode` is the scalar object interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dists import Gamma, negbinom_logpmf

__all__ = [
    "GammaNode",
    "count_success_prob",
    "draw_count",
    "draw_waiting_time",
    "count_logpmf",
    "shrink_scale",
]


def shrink_scale(theta, exposure):
    """Posterior scale after ``exposure`` time units: ``theta / (1 + exposure*theta)``."""
    return theta / (1.0 + exposure * theta)


def count_success_prob(theta, exposure):
    """Success probability of the negative-binomial count marginal."""
    return 1.0 / (1.0 + exposure * theta)


def count_logpmf(k, theta, exposure, n):
    """Marginal log pmf of a Poisson(nu * exposure) count with nu integrated out."""
    return negbinom_logpmf(k, count_success_prob(theta, exposure), n)


def draw_count(k, theta, exposure, rng):
    """Negative-binomial draw(s) for the count marginal. Does not update."""
    return rng.negative_binomial(k, count_success_prob(theta, exposure))


def draw_waiting_time(k, theta, rng, size=None):
    """Lomax(1/theta, k) draw(s) by inverse CDF. Does not update."""
    if size is None:
        size = np.shape(k)
    u = 1.0 - rng.random(size)
    return (u ** (-1.0 / np.asarray(k)) - 1.0) / theta


@dataclass
class GammaNode:
    """A gamma-distributed rate held in marginalised form.

    Mutated in place by every operation; use :meth:`copy` when duplicating
    a particle.
    """

    k: float
    theta: float

    def __post_init__(self):
        if not (self.k > 0 and self.theta > 0):
            raise ValueError("GammaNode needs k > 0 and theta > 0")

    def copy(self):
        return GammaNode(self.k, self.theta)

    @property
    def mean(self):
        return self.k * self.theta

    def as_gamma(self):
        return Gamma(self.k, self.theta)

    def observe_poisson_count(self, exposure, n):
        """Score an observed count ``n`` over ``exposure``; returns the log weight."""
        if n < 0 or n != int(n):
            raise ValueError("count must be a non-negative integer")
        if exposure < 0:
            raise ValueError("exposure must be non-negative")
        logw = count_logpmf(self.k, self.theta, exposure, n)
        self.k += n
        self.theta = shrink_scale(self.theta, exposure)
        return logw

    def sample_poisson_count(self, exposure, rng):
        if exposure < 0:
            raise ValueError("exposure must be non-negative")
        n = int(draw_count(self.k, self.theta, exposure, rng))
        self.k += n
        self.theta = shrink_scale(self.theta, exposure)
        return n

    def sample_waiting_time(self, rng):
        d = float(draw_waiting_time(self.k, self.theta, rng))
        self.k += 1
        self.theta = shrink_scale(self.theta, d)
        return d

    def observe_exponential_zero(self):
        """Score a zero waiting time; the Lomax density at 0 is ``k * theta``."""
        logw = math.log(self.k * self.theta)
        self.k += 1
        return logw

    def censor(self, exposure):
        """Condition on no event during ``exposure`` without returning a weight."""
        self.theta = shrink_scale(self.theta, exposure)

    def sample_rate(self, rng):
        """Draw a concrete rate from the current posterior (never needed by the filters)."""
        return float(rng.gamma(self.k, self.theta))
