"""Small state-space models with known answers, for checking the filters."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..smc import Particles

__all__ = [
    "DEFAULT_LGSS_Y",
    "LgssConfig",
    "LgssProgram",
    "lgss_program",
    "kalman_log_evidence",
    "simulate_lgss",
    "IndicatorConfig",
    "IndicatorProgram",
    "indicator_program",
    "indicator_acceptance",
]

#: Ten observations drawn once from the default model (seed 2019) and frozen.
DEFAULT_LGSS_Y = (
    0.28052403373611456, -0.7839250784573244, -1.650902092109608,
    -0.4182351354997103, -1.217580138765184, -1.2069122618004156,
    0.24396326580593003, 0.4415344017945866, 0.4269700590634351,
    0.3786620013749693,
)


@dataclass(frozen=True)
class LgssConfig:
    """Scalar linear-Gaussian model.

    ``x_0 ~ N(0, prior_var)``, ``x_t = a x_{t-1} + N(0, trans_var)``,
    ``y_t = c x_t + N(0, obs_var)`` for ``t = 1..T``.
    """

    y: tuple[float, ...] = DEFAULT_LGSS_Y
    a: float = 0.9
    trans_var: float = 1.0
    c: float = 1.0
    obs_var: float = 1.0
    prior_var: float = 1.0

    def __post_init__(self):
        if min(self.trans_var, self.obs_var, self.prior_var) <= 0:
            raise ValueError("variances must be positive")
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))


class LgssProgram:
    def __init__(self, cfg: LgssConfig):
        self.cfg = cfg
        self.T = len(cfg.y)
        self._y = np.asarray(cfg.y)
        self._sd = math.sqrt(cfg.trans_var)
        self._norm = -0.5 * math.log(2 * math.pi * cfg.obs_var)

    def init(self, n, rng):
        return Particles(x=rng.normal(0.0, math.sqrt(self.cfg.prior_var), n))

    def step(self, p, t, rng):
        cfg = self.cfg
        x = cfg.a * p["x"] + self._sd * rng.standard_normal(len(p))
        p["x"] = x
        resid = self._y[t - 1] - cfg.c * x
        return self._norm - 0.5 * resid * resid / cfg.obs_var


def lgss_program(cfg: LgssConfig) -> LgssProgram:
    return LgssProgram(cfg)


def kalman_log_evidence(cfg: LgssConfig) -> float:
    """Exact ``log p(y_1:T)`` by the Kalman prediction/update recursion."""
    m, P = 0.0, cfg.prior_var
    total = 0.0
    for y in cfg.y:
        m, P = cfg.a * m, cfg.a * cfg.a * P + cfg.trans_var
        S = cfg.c * cfg.c * P + cfg.obs_var
        r = y - cfg.c * m
        total += -0.5 * (math.log(2 * math.pi * S) + r * r / S)
        gain = P * cfg.c / S
        m, P = m + gain * r, (1.0 - gain * cfg.c) * P
    return total


def simulate_lgss(T, rng, a=0.9, trans_var=1.0, c=1.0, obs_var=1.0, prior_var=1.0):
    """Draw observations from the model; returns a :class:`LgssConfig`."""
    x = rng.normal(0.0, math.sqrt(prior_var))
    ys = []
    for _ in range(T):
        x = a * x + rng.normal(0.0, math.sqrt(trans_var))
        ys.append(c * x + rng.normal(0.0, math.sqrt(obs_var)))
    return LgssConfig(tuple(ys), a, trans_var, c, obs_var, prior_var)


@dataclass(frozen=True)
class IndicatorConfig:
    """Indicator-potential model: weight 1 if ``|x_t| <= b`` else 0.

    ``x_0 = 0`` and ``x_t = persistence * x_{t-1} + N(0, step_var)``.
    ``persistence = 1`` is a Gaussian random walk; the default ``0`` makes
    every checkpoint accept with the same probability
    ``P(|N(0, step_var)| <= b)``.
    """

    b: float = 1.0
    step_var: float = 1.0
    T: int = 1
    persistence: float = 0.0

    def __post_init__(self):
        if self.step_var <= 0 or self.b < 0 or self.T < 1:
            raise ValueError("need step_var > 0, b >= 0 and T >= 1")


class IndicatorProgram:
    def __init__(self, cfg: IndicatorConfig):
        self.cfg = cfg
        self.T = cfg.T
        self._sd = math.sqrt(cfg.step_var)

    def init(self, n, rng):
        return Particles(x=np.zeros(n))

    def step(self, p, t, rng):
        x = self.cfg.persistence * p["x"] + self._sd * rng.standard_normal(len(p))
        p["x"] = x
        return np.where(np.abs(x) <= self.cfg.b, 0.0, -np.inf)


def indicator_program(cfg: IndicatorConfig) -> IndicatorProgram:
    return IndicatorProgram(cfg)


def indicator_acceptance(cfg: IndicatorConfig) -> float:
    """Acceptance probability of a checkpoint started from ``x = 0``."""
    return math.erf(cfg.b / math.sqrt(2.0 * cfg.step_var))
