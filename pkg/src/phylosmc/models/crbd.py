"""Constant-rate birth-death (CRBD) model as a checkpoint program.

The observed (reconstructed) tree is augmented branch by branch, in
pre-order, with hidden speciation events. Each hidden event spawns a
subtree that must go extinct before the present; if any lineage of it
survives, the particle gets zero weight, otherwise its weight is doubled.
Each branch then contributes ``observe 0 ~ Exponential(lam)`` if it ends in
a speciation and ``observe 0 ~ Poisson(mu * length)``. The constant
``2^(S_obs + 1) / C!`` is left out of the weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..delayed import GammaNode
from ..phylo import Tree, TreeNode, log_orderings, stats
from ..smc import Particles
from .rates import Rate

LOG2 = math.log(2.0)

#: Upper bound on hidden lineages simulated for one particle in one step.
MAX_HIDDEN_LINEAGES = 10**6

__all__ = [
    "HiddenTreeExplosion",
    "CrbdConfig",
    "CrbdProgram",
    "crbd_program",
    "branch_survives",
    "AugmentationStats",
    "Augmentation",
    "propose_complete_tree",
    "lifo_pick",
]


class HiddenTreeExplosion(RuntimeError):
    """A hidden subtree grew beyond :data:`MAX_HIDDEN_LINEAGES` lineages."""


@dataclass(frozen=True)
class CrbdConfig:
    """Inputs of the CRBD program.

    ``sampling`` is ``"immediate"`` (rates drawn from the gamma priors at
    init), ``"delayed"`` (rates marginalised) or ``"fixed"`` (``lam`` and
    ``mu`` given).
    """

    tree: Tree
    prior_lambda: tuple[float, float] = (1.0, 1.0)
    prior_mu: tuple[float, float] = (1.0, 1.0)
    sampling: str = "delayed"
    lam: float | None = None
    mu: float | None = None


def lifo_pick(pid):
    """Index of the most recently queued entry for each distinct particle id."""
    if pid.size == 1:
        return np.zeros(1, dtype=np.intp)
    _, first = np.unique(pid[::-1], return_index=True)
    return pid.size - 1 - first


class CrbdProgram:
    """Vectorised CRBD checkpoint program; one checkpoint per observed branch."""

    def __init__(self, cfg: CrbdConfig):
        tree = cfg.tree
        if tree.n_branches < 1:
            raise ValueError("tree has no branches")
        if cfg.sampling == "fixed":
            if cfg.lam is None or cfg.mu is None:
                raise ValueError("fixed sampling needs lam and mu")
            if not cfg.lam > 0 or cfg.mu < 0:
                raise ValueError("fixed sampling needs lam > 0 and mu >= 0")
        self.cfg = cfg
        self.tree = tree
        self.T = tree.n_branches
        self.lam = Rate("lam", cfg.sampling, cfg.prior_lambda, cfg.lam)
        self.mu = Rate("mu", cfg.sampling, cfg.prior_mu, cfg.mu)
        self.rates = {"lambda": self.lam, "mu": self.mu}
        # delayed rates change with every draw, so a particle's hidden lineages
        # must then be simulated one at a time
        self._sequential = any(r.is_delayed for r in self.rates.values())
        self._age = tree.ages[1:]
        self._length = tree.branch_lengths
        self._internal = np.array([not node.is_leaf for node in tree.preorder])
        st = stats(tree)
        self.S_obs = st.S
        self.L_obs = st.L
        self.log_constant = log_orderings(tree)

    def init(self, n, rng):
        p = Particles()
        self.lam.init(p, n, rng)
        self.mu.init(p, n, rng)
        # augmentation bookkeeping: hidden speciations on observed branches,
        # speciations / extinctions / length inside hidden subtrees
        p["hidden_H"] = np.zeros(n, dtype=np.int64)
        p["hidden_S"] = np.zeros(n, dtype=np.int64)
        p["hidden_X"] = np.zeros(n, dtype=np.int64)
        p["hidden_L"] = np.zeros(n)
        p["log_w"] = np.zeros(n)
        return p

    def step(self, p, t, rng):
        n = len(p)
        age = self._age[t - 1]
        length = self._length[t - 1]
        every = slice(None)
        c = self.lam.draw_count(p, every, length, rng)
        p["hidden_H"] += c
        logw = c * LOG2
        if c.any():
            pid = np.repeat(np.arange(n), c)
            tau = age + length * rng.random(pid.size)
            dead = self._hidden_survives(p, pid, tau, rng)
        else:
            dead = None
        if self._internal[t - 1]:
            logw += self.lam.observe_zero_wait(p, every)
        logw += self.mu.observe_zero_count(p, every, length)
        if dead is not None:
            logw[dead] = -np.inf
        p["log_w"] += logw
        return logw

    def _hidden_survives(self, p, pid, tau, rng):
        """Simulate hidden subtrees rooted at ``(pid, tau)``.

        Returns a mask of particles for which some hidden lineage reached the
        present. Each particle's lineages are processed depth-first, one per
        pass, so delayed updates stay sequential within a particle.
        """
        n = len(p)
        dead = np.zeros(n, dtype=bool)
        work = np.zeros(n, dtype=np.int64)
        lam, mu = self.lam, self.mu
        while pid.size:
            keep = ~dead[pid]
            if not keep.all():
                pid, tau = pid[keep], tau[keep]
                if not pid.size:
                    break
            if self._sequential:
                sel = lifo_pick(pid)
                rest = np.ones(pid.size, dtype=bool)
                rest[sel] = False
            else:
                sel = slice(None)
                rest = np.zeros(pid.size, dtype=bool)
            cp, ctau = pid[sel], tau[sel]
            pid, tau = pid[rest], tau[rest]

            np.add.at(work, cp, 1)
            if work[cp].max() > MAX_HIDDEN_LINEAGES:
                raise HiddenTreeExplosion(
                    f"more than {MAX_HIDDEN_LINEAGES} hidden lineages in one step"
                )
            life = mu.draw_event_time(p, cp, rng)
            survived = life >= ctau
            if survived.any():
                dead[cp[survived]] = True
                ok = ~survived
                cp, ctau, life = cp[ok], ctau[ok], life[ok]
                if not cp.size:
                    continue
            kids = lam.draw_count(p, cp, life, rng)
            np.add.at(p["hidden_X"], cp, 1)
            np.add.at(p["hidden_L"], cp, life)
            np.add.at(p["hidden_S"], cp, kids)
            total = int(kids.sum())
            if total:
                kp = np.repeat(cp, kids)
                kt = np.repeat(ctau, kids) - np.repeat(life, kids) * rng.random(total)
                pid = np.concatenate([pid, kp])
                tau = np.concatenate([tau, kt])
        return dead

    def augmentation_log_q(self, p):
        """``log q`` of each particle's augmentation, from its bookkeeping columns.

        Only meaningful for fixed rates.
        """
        lam, mu = self.cfg.lam, self.cfg.mu
        H, S, X, L = p["hidden_H"], p["hidden_S"], p["hidden_X"], p["hidden_L"]
        with np.errstate(divide="ignore", invalid="ignore"):
            return (H * math.log(lam) - lam * self.L_obs + S * LOG2 + S * math.log(lam)
                    + np.where(X > 0, X * np.log(mu) if mu > 0 else -np.inf, 0.0)
                    - (lam + mu) * L)


def crbd_program(cfg: CrbdConfig) -> CrbdProgram:
    return CrbdProgram(cfg)


# ---------------------------------------------------------------------------
# Scalar reference path


def _waiting(rate, rng):
    if isinstance(rate, GammaNode):
        return rate.sample_waiting_time(rng)
    return rng.exponential(1.0 / rate) if rate > 0 else math.inf


def _count(rate, exposure, rng):
    if isinstance(rate, GammaNode):
        return rate.sample_poisson_count(exposure, rng)
    return int(rng.poisson(rate * exposure))


def branch_survives(tau, lam, mu, rng, max_lineages=MAX_HIDDEN_LINEAGES):
    """Whether a hidden lineage born at age ``tau`` leaves a descendant at the present.

    ``lam`` and ``mu`` are floats or :class:`~phylosmc.delayed.GammaNode`
    objects; nodes are updated by every draw. Lineages are explored
    depth-first and the search stops at the first survivor.
    """
    stack = [float(tau)]
    seen = 0
    while stack:
        t = stack.pop()
        seen += 1
        if seen > max_lineages:
            raise HiddenTreeExplosion(f"more than {max_lineages} hidden lineages")
        life = _waiting(mu, rng)
        if life >= t:
            return True
        for _ in range(_count(lam, life, rng)):
            stack.append(t - life * rng.random())
    return False


@dataclass
class AugmentationStats:
    """Counts describing one augmentation of an observed tree.

    ``H`` hidden speciations on observed branches; ``S``, ``X``, ``L``
    speciations, extinctions and branch length inside hidden subtrees;
    ``S_obs``, ``L_obs`` the observed tree's speciations and length.
    """

    H: int = 0
    S: int = 0
    X: int = 0
    L: float = 0.0
    S_obs: int = 0
    L_obs: float = 0.0


@dataclass
class Augmentation:
    accepted: bool
    stats: AugmentationStats
    log_w: float
    log_q: float
    complete: Tree | None = None


def _grow_hidden(tau, lam, mu, rng, st):
    """Grow one hidden lineage born at ``tau``; returns ``(survived, subtree root)``."""
    life = rng.exponential(1.0 / mu) if mu > 0 else math.inf
    if life >= tau:
        return True, None
    st.X += 1
    st.L += life
    events = []
    for _ in range(int(rng.poisson(lam * life))):
        at = tau - life * rng.random()
        survived, sub = _grow_hidden(at, lam, mu, rng, st)
        if survived:
            return True, None
        events.append((at, sub))
        st.S += 1
    node = TreeNode(tau - life)
    for at, sub in sorted(events, key=lambda e: e[0]):
        node = TreeNode(at, [node, sub])
    return False, node


def propose_complete_tree(tree: Tree, lam: float, mu: float, rng) -> Augmentation:
    """One augmentation of ``tree`` at fixed rates, keeping the complete tree.

    Follows the same generative steps as :class:`CrbdProgram` but builds
    the hidden structure explicitly. For accepted proposals, ``log_q`` is
    the proposal density of the hidden part and ``log_w`` the (constant-free)
    weight, so ``log_q + log_w + log_orderings(tree)`` should equal
    ``crbd_complete_loglik(complete, lam, mu)``.
    """
    obs = stats(tree)
    st = AugmentationStats(S_obs=obs.S, L_obs=obs.L)
    hidden = {}
    for node, age, length in zip(tree.preorder, tree.ages[1:], tree.branch_lengths):
        events = []
        for _ in range(int(rng.poisson(lam * length))):
            at = age + length * rng.random()
            st.H += 1
            survived, sub = _grow_hidden(at, lam, mu, rng, st)
            if survived:
                return Augmentation(False, st, -math.inf, math.nan)
            events.append((at, sub))
        hidden[id(node)] = sorted(events, key=lambda e: e[0])

    built = {}
    for node in reversed(tree.nodes):
        cur = TreeNode(node.age, [built.pop(id(c)) for c in node.children], node.label,
                       node.tip_state)
        for at, sub in hidden.get(id(node), ()):
            cur = TreeNode(at, [cur, sub])
        built[id(node)] = cur
    complete = Tree(built[id(tree.root)])

    log_w = st.H * LOG2 + obs.S * math.log(lam) - mu * obs.L
    log_mu_x = st.X * math.log(mu) if st.X else 0.0
    log_q = (st.H * math.log(lam) - lam * obs.L
             + st.S * (LOG2 + math.log(lam)) + log_mu_x - (lam + mu) * st.L)
    return Augmentation(True, st, log_w, log_q, complete)
