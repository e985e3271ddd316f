"""Per-particle rate parameters in fixed, immediate or delayed form.

A :class:`Rate` owns one or two columns of a :class:`~phylosmc.smc.Particles`
population and implements the handful of operations the birth-death
programs need. ``idx`` arguments select particles; in delayed mode they must
not contain duplicates, because each entry updates that particle's gamma
parameters.
"""

from __future__ import annotations

import numpy as np

from .. import delayed

SAMPLING_MODES = ("immediate", "delayed", "fixed")


class Rate:
    """One rate across a population.

    ``fixed``
        every particle uses ``value``.
    ``immediate``
        each particle draws its rate from ``Gamma(*prior)`` at init.
    ``delayed``
        each particle carries ``(k, theta)`` of the marginalised rate.
    """

    def __init__(self, name, mode, prior=None, value=None):
        if mode not in SAMPLING_MODES:
            raise ValueError(f"unknown sampling mode {mode!r}")
        if mode == "fixed":
            if value is None or value < 0:
                raise ValueError(f"fixed rate {name} needs a non-negative value")
        else:
            k, theta = prior
            if not (k > 0 and theta > 0):
                raise ValueError(f"prior for {name} needs positive shape and scale")
        self.name = name
        self.mode = mode
        self.prior = prior
        self.value = value
        self._k = f"{name}_k"
        self._theta = f"{name}_theta"

    @property
    def is_delayed(self):
        return self.mode == "delayed"

    def init(self, particles, n, rng):
        if self.mode == "delayed":
            particles[self._k] = np.full(n, float(self.prior[0]))
            particles[self._theta] = np.full(n, float(self.prior[1]))
        elif self.mode == "immediate":
            particles[self.name] = rng.gamma(self.prior[0], self.prior[1], n)
        else:
            particles[self.name] = np.full(n, float(self.value))

    def params(self, particles):
        """Gamma ``(k, theta)`` columns of a delayed rate."""
        return particles[self._k], particles[self._theta]

    def values(self, particles, idx=slice(None)):
        return particles[self.name][idx]

    # -- draws ---------------------------------------------------------------

    def draw_count(self, particles, idx, exposure, rng):
        """Poisson(rate * exposure) counts; delayed rates are updated."""
        if self.mode == "delayed":
            k, theta = particles[self._k], particles[self._theta]
            n = delayed.draw_count(k[idx], theta[idx], exposure, rng)
            k[idx] += n
            theta[idx] = delayed.shrink_scale(theta[idx], exposure)
            return n
        return rng.poisson(particles[self.name][idx] * exposure)

    def draw_wait(self, particles, idx, rng):
        """Exponential(rate) waiting times, without any update.

        A zero rate gives an infinite wait. Follow with :meth:`note_event` or
        :meth:`note_censor`.
        """
        if self.mode == "delayed":
            return delayed.draw_waiting_time(particles[self._k][idx], particles[self._theta][idx], rng)
        v = particles[self.name][idx]
        e = rng.standard_exponential(np.shape(v))
        with np.errstate(divide="ignore"):
            return e / v

    def note_event(self, particles, idx, at):
        """Condition on an event after waiting ``at``."""
        if self.mode == "delayed":
            particles[self._k][idx] += 1.0
            theta = particles[self._theta]
            theta[idx] = delayed.shrink_scale(theta[idx], at)

    def note_censor(self, particles, idx, exposure):
        """Condition on no event during ``exposure`` (no weight)."""
        if self.mode == "delayed":
            theta = particles[self._theta]
            theta[idx] = delayed.shrink_scale(theta[idx], exposure)

    def draw_event_time(self, particles, idx, rng):
        d = self.draw_wait(particles, idx, rng)
        self.note_event(particles, idx, d)
        return d

    # -- observations --------------------------------------------------------

    def observe_zero_count(self, particles, idx, exposure):
        """Log weight of observing no event over ``exposure``."""
        if self.mode == "delayed":
            k, theta = particles[self._k], particles[self._theta]
            logw = -k[idx] * np.log1p(exposure * theta[idx])
            theta[idx] = delayed.shrink_scale(theta[idx], exposure)
            return logw
        return -particles[self.name][idx] * exposure

    def observe_zero_wait(self, particles, idx):
        """Log weight of observing a waiting time of zero (density at 0)."""
        if self.mode == "delayed":
            k, theta = particles[self._k], particles[self._theta]
            logw = np.log(k[idx] * theta[idx])
            k[idx] += 1.0
            return logw
        with np.errstate(divide="ignore"):
            return np.log(particles[self.name][idx])
