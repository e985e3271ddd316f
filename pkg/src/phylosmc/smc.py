"""Bootstrap and alive particle filters over checkpoint programs.

A checkpoint program describes a model as a sequence of ``T`` observation
points. It exposes

``init(n, rng) -> Particles``
    ``n`` fresh particle states drawn from the prior.
``step(particles, t, rng) -> ndarray``
    Run every particle forward to checkpoint ``t`` (1-based) in place and
    return one log-weight per particle; ``-inf`` means zero weight.

Programs work on a whole population at once so the per-particle work can
be vectorised. :class:`Particles` is a dict of equally long arrays, and
resampling is fancy indexing, which copies; duplicated particles never
share mutable state.

Both filters resample multinomially before every checkpoint. All weight
arithmetic is done in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "Particles",
    "CheckpointProgram",
    "RunResult",
    "BatchSummary",
    "BatchResult",
    "CheckpointStarvation",
    "resample_index",
    "resample_indices",
    "run_bpf",
    "run_apf",
    "run",
    "batch",
    "derive_seed",
    "ress",
    "car",
    "rho",
    "var_log_z",
    "scaled_mean_se",
    "summarize",
]

DEFAULT_MAX_ATTEMPTS = 10**6


class CheckpointStarvation(RuntimeError):
    """The alive filter could not collect ``N + 1`` live particles."""

    def __init__(self, checkpoint, attempts, accepted):
        super().__init__(
            f"checkpoint {checkpoint}: only {accepted} particle(s) with positive "
            f"weight after {attempts} propagations"
        )
        self.checkpoint = checkpoint
        self.attempts = attempts
        self.accepted = accepted


class Particles(dict):
    """Population of particle states stored column-wise.

    Every value is a numpy array whose first axis indexes particles.
    """

    def __len__(self):
        for v in self.values():
            return v.shape[0]
        return 0

    def take(self, idx):
        """Independent copy of the particles at ``idx`` (duplicates allowed)."""
        return Particles({k: v[idx] for k, v in self.items()})

    @classmethod
    def concat(cls, parts):
        parts = list(parts)
        if len(parts) == 1:
            return parts[0]
        return cls({k: np.concatenate([p[k] for p in parts]) for k in parts[0]})

    def copy(self):
        return Particles({k: v.copy() for k, v in self.items()})


class CheckpointProgram(Protocol):
    T: int

    def init(self, n: int, rng: np.random.Generator) -> Particles: ...

    def step(self, particles: Particles, t: int, rng: np.random.Generator) -> np.ndarray: ...


@dataclass
class RunResult:
    """Outcome of one filter run.

    ``propagations[t-1]`` is the number of propagations at checkpoint ``t``
    (always ``N`` for the bootstrap filter, 0 for checkpoints never reached).
    ``particles`` and ``log_weights`` are the final population and its
    weights at the last checkpoint reached.
    """

    log_z: float
    propagations: np.ndarray
    degenerate: bool
    particles: Particles | None = None
    log_weights: np.ndarray | None = None
    error: str | None = None

    @property
    def total_propagations(self):
        return int(self.propagations.sum())


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def resample_indices(log_weights, size, rng):
    """Multinomial ancestor draws with probabilities proportional to ``exp(log_weights)``.

    Uses cumulative sums of max-shifted weights and inverse-CDF lookup, so
    zero-weight entries are never selected.
    """
    lw = np.asarray(log_weights, dtype=float)
    top = lw.max(initial=-np.inf)
    if not np.isfinite(top):
        raise ValueError("cannot resample: no particle has positive finite weight")
    cdf = np.cumsum(np.exp(lw - top))
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(size), side="right")
    return np.minimum(idx, lw.size - 1)


def resample_index(log_weights, rng):
    return int(resample_indices(log_weights, 1, rng)[0])


def run_bpf(model, n, seed=None, keep_particles=True):
    """Bootstrap particle filter.

    ``log_z`` accumulates ``logsumexp(w_t) - log N`` over checkpoints. If all
    weights vanish at some checkpoint the run stops there and reports
    ``log_z = -inf`` with ``degenerate = True``.
    """
    if n < 1:
        raise ValueError("need at least one particle")
    rng = _as_rng(seed)
    T = model.T
    prop = np.zeros(T, dtype=np.int64)
    particles = model.init(n, rng)
    lw = np.zeros(n)
    log_z = 0.0
    log_n = math.log(n)
    for t in range(1, T + 1):
        particles = particles.take(resample_indices(lw, n, rng))
        lw = np.asarray(model.step(particles, t, rng), dtype=float)
        prop[t - 1] = n
        top = lw.max()
        if top == -np.inf:
            return RunResult(-np.inf, prop, True,
                             particles if keep_particles else None,
                             lw if keep_particles else None)
        log_z += float(logsumexp(lw)) - log_n
    return RunResult(log_z, prop, False,
                     particles if keep_particles else None,
                     lw if keep_particles else None)


def run_apf(model, n, seed=None, max_attempts=DEFAULT_MAX_ATTEMPTS, keep_particles=True):
    """Alive particle filter with importance weights.

    At every checkpoint candidates are drawn (resample from the previous
    ``N`` weights, then propagate) until ``N + 1`` of them have positive
    weight. ``P_t`` counts every candidate up to and including the
    ``(N+1)``-th acceptance; the ``(N+1)``-th particle itself is dropped and
    ``log_z`` accumulates ``logsumexp(w_t[:N]) - log(P_t - 1)``.

    Candidates are i.i.d. given the previous population, so they are
    propagated in vectorised blocks; candidates after the ``(N+1)``-th
    acceptance in a block are discarded uncounted.

    Raises
    ------
    CheckpointStarvation
        If ``max_attempts`` propagations at one checkpoint do not produce
        ``N + 1`` acceptances.
    """
    if n < 1:
        raise ValueError("need at least one particle")
    rng = _as_rng(seed)
    T = model.T
    need = n + 1
    prop = np.zeros(T, dtype=np.int64)
    particles = model.init(n, rng)
    lw = np.zeros(n)
    log_z = 0.0
    for t in range(1, T + 1):
        kept, kept_w = [], []
        accepted = attempts = 0
        block = need
        while True:
            block = min(block, max_attempts - attempts)
            if block <= 0:
                raise CheckpointStarvation(t, attempts, accepted)
            cand = particles.take(resample_indices(lw, block, rng))
            cw = np.asarray(model.step(cand, t, rng), dtype=float)
            if np.isnan(cw).any():
                raise ValueError(f"checkpoint {t}: model returned NaN log-weight")
            live = np.flatnonzero(cw > -np.inf)
            if accepted + live.size >= need:
                last = live[need - accepted - 1]
                attempts += last + 1
                live = live[: need - accepted]
                kept.append(cand.take(live))
                kept_w.append(cw[live])
                break
            attempts += block
            if live.size:
                kept.append(cand.take(live))
                kept_w.append(cw[live])
                accepted += live.size
            remaining = need - accepted
            if accepted:
                block = int(math.ceil(1.2 * remaining * attempts / accepted)) + 8
            else:
                block = min(2 * block, 1 << 16)
        prop[t - 1] = attempts
        particles = Particles.concat(kept).take(slice(0, n))
        lw = np.concatenate(kept_w)[:n]
        log_z += float(logsumexp(lw)) - math.log(attempts - 1)
    return RunResult(log_z, prop, False,
                     particles if keep_particles else None,
                     lw if keep_particles else None)


def run(model, method, n, seed=None, **kwargs):
    if method == "bpf":
        return run_bpf(model, n, seed, **kwargs)
    if method == "apf":
        return run_apf(model, n, seed, **kwargs)
    raise ValueError(f"unknown method {method!r}; expected 'bpf' or 'apf'")


# ---------------------------------------------------------------------------
# Batches and metrics


def derive_seed(seed, run_index):
    """64-bit seed of run ``run_index`` in a batch with master ``seed``.

    The first 64-bit word of ``numpy.random.SeedSequence(seed,
    spawn_key=(run_index,))``; identical to the seed of the
    ``run_index``-th child of ``SeedSequence(seed).spawn``.
    """
    ss = np.random.SeedSequence(seed, spawn_key=(run_index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _finite(log_z):
    lz = np.asarray(log_z, dtype=float)
    return lz[np.isfinite(lz)]


def ress(log_z):
    """Relative effective sample size ``(sum Z)^2 / (M sum Z^2)`` from log estimates."""
    lz = np.asarray(log_z, dtype=float)
    fin = _finite(lz)
    if fin.size == 0:
        return math.nan
    w = np.exp(lz - fin.max())
    return float(w.sum() ** 2 / (lz.size * np.sum(w * w)))


def car(log_z):
    """Conditional acceptance ratio ``(2 sum_i c_i - 1) / M``.

    ``c_i`` is the sum of the ``i`` smallest estimates after normalising the
    batch to sum to one.
    """
    lz = np.asarray(log_z, dtype=float)
    fin = _finite(lz)
    if fin.size == 0:
        return math.nan
    w = np.exp(lz - fin.max())
    c = np.cumsum(np.sort(w / w.sum()))
    return float((2.0 * c.sum() - 1.0) / lz.size)


def rho(propagations, n, T):
    """Total propagations over the bootstrap budget ``M N T``."""
    p = np.asarray(propagations, dtype=float)
    return float(p.sum() / (p.size * n * T))


def var_log_z(log_z):
    """Sample variance of the finite log estimates (degenerate runs excluded)."""
    fin = _finite(log_z)
    return float(np.var(fin, ddof=1)) if fin.size >= 2 else math.nan


def scaled_mean_se(log_z, shift=None):
    """Mean and standard error of ``exp(log_z - shift)``.

    ``shift`` defaults to the largest finite value. Returns
    ``(mean, se, shift)``.
    """
    lz = np.asarray(log_z, dtype=float)
    if shift is None:
        fin = _finite(lz)
        shift = float(fin.max()) if fin.size else 0.0
    z = np.exp(lz - shift)
    se = float(z.std(ddof=1) / math.sqrt(z.size)) if z.size > 1 else math.nan
    return float(z.mean()), se, shift


@dataclass
class BatchSummary:
    M: int
    N: int
    ress: float
    car: float
    var_log_z: float
    rho: float
    degenerate_runs: int
    failed_runs: int = 0
    log_mean_z: float = math.nan

    @property
    def all_degenerate(self):
        return self.degenerate_runs + self.failed_runs == self.M

    def to_dict(self):
        out = {
            "M": self.M,
            "N": self.N,
            "ress": self.ress,
            "car": self.car,
            "var_log_z": self.var_log_z,
            "rho": self.rho,
            "degenerate_runs": self.degenerate_runs,
            "failed_runs": self.failed_runs,
            "all_degenerate": self.all_degenerate,
            "log_mean_z": self.log_mean_z,
        }
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in out.items()}


@dataclass
class BatchResult:
    method: str
    summary: BatchSummary
    runs: list[RunResult] = field(repr=False)
    seeds: list[int] = field(repr=False)

    @property
    def log_z(self):
        return np.array([r.log_z for r in self.runs])

    @property
    def propagations(self):
        return np.array([r.total_propagations for r in self.runs])


def summarize(runs, n, T):
    lz = np.array([r.log_z for r in runs])
    failed = sum(r.error is not None for r in runs)
    degenerate = sum(r.degenerate and r.error is None for r in runs)
    ok = [r for r in runs if r.error is None]
    fin = _finite(lz)
    log_mean = float(np.log(np.mean(np.exp(lz - fin.max()))) + fin.max()) if fin.size else -math.inf
    return BatchSummary(
        M=len(runs),
        N=n,
        ress=ress(lz),
        car=car(lz),
        var_log_z=var_log_z(lz),
        rho=rho([r.total_propagations for r in ok], n, T) if ok else math.nan,
        degenerate_runs=degenerate,
        failed_runs=failed,
        log_mean_z=log_mean,
    )


def batch(model, method, n, m, seed=0, keep_particles=False, fail_fast=False, **kwargs):
    """Run ``m`` independent filters with seeds from :func:`derive_seed`.

    A run that starves is recorded with ``error`` set, ``log_z = -inf`` and
    ``degenerate = True``; it counts as a failed run, not a degenerate one.
    With ``fail_fast`` the :class:`CheckpointStarvation` propagates instead.
    """
    if m < 1:
        raise ValueError("need at least one run")
    runs, seeds = [], []
    for i in range(m):
        s = derive_seed(seed, i)
        seeds.append(s)
        try:
            res = run(model, method, n, s, keep_particles=keep_particles, **kwargs)
        except CheckpointStarvation as exc:
            if fail_fast:
                raise
            res = RunResult(-math.inf, np.zeros(model.T, dtype=np.int64), True, error=str(exc))
        runs.append(res)
    return BatchResult(method, summarize(runs, n, model.T), runs, seeds)
