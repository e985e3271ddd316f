"""Gamma-mixture posteriors for delayed-sampling runs.

Every run of a delayed program ends with particles that hold gamma
parameters for each rate. Drawing one particle per run (proportionally to
its final weight) and weighting the runs by their evidence estimates gives
a mixture-of-gammas posterior for each rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from ..smc import resample_index

__all__ = ["GammaMixture", "posterior_mixture"]


@dataclass
class GammaMixture:
    weights: np.ndarray
    shapes: np.ndarray
    scales: np.ndarray

    def __len__(self):
        return self.weights.size

    def mean(self):
        return float(np.sum(self.weights * self.shapes * self.scales))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum(self.weights * stats.gamma.cdf(x[..., None], self.shapes, scale=self.scales), axis=-1)

    def quantile(self, q):
        """Invert the mixture CDF numerically."""
        if not 0 < q < 1:
            raise ValueError("q must lie in (0, 1)")
        lo = float(np.min(stats.gamma.ppf(q, self.shapes, scale=self.scales)))
        hi = float(np.max(stats.gamma.ppf(q, self.shapes, scale=self.scales)))
        if hi <= lo:
            return lo
        return optimize.brentq(lambda x: float(self.cdf(x)) - q, lo, hi, xtol=1e-12)

    def sample(self, rng, size):
        comp = rng.choice(self.weights.size, size=size, p=self.weights)
        return rng.gamma(self.shapes[comp], self.scales[comp])


def posterior_mixture(result, program, rng):
    """Per-rate gamma mixtures from a batch of delayed runs.

    ``result`` is a :class:`~phylosmc.smc.BatchResult` produced with
    ``keep_particles=True``. Runs with zero evidence get zero mixture weight.

    Raises
    ------
    ValueError
        If the program is not in delayed mode or no run has positive evidence.
    """
    rates = program.rates
    if not all(r.is_delayed for r in rates.values()):
        raise ValueError("posterior mixtures need a delayed-sampling program")
    lz = np.array([r.log_z for r in result.runs])
    good = np.flatnonzero(np.isfinite(lz))
    if good.size == 0:
        raise ValueError("all runs degenerate; no posterior available")
    w = np.exp(lz[good] - lz[good].max())
    w /= w.sum()
    picks = []
    for m in good:
        run = result.runs[m]
        if run.particles is None:
            raise ValueError("runs were not kept with their particles")
        picks.append((run.particles, resample_index(run.log_weights, rng)))
    out = {}
    for name, rate in rates.items():
        shapes = np.array([rate.params(p)[0][i] for p, i in picks])
        scales = np.array([rate.params(p)[1][i] for p, i in picks])
        out[name] = GammaMixture(w.copy(), shapes, scales)
    return out
