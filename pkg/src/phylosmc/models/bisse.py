"""Binary-state speciation and extinction (BiSSE) as a checkpoint program.

Each lineage carries a state ``s`` in {0, 1} with its own speciation and
extinction rates ``lam_s`` and ``mu_s``; the state flips at rate ``sigma``
in both directions. The root state is uniform on {0, 1}.

An observed branch is walked in segments between state switches. Within a
segment of length ``l`` in state ``s`` the program draws
``Poisson(lam_s * l)`` hidden speciations, simulates each hidden subtree
under the full model (its lineages switch state too) and observes no
extinction, ``0 ~ Poisson(mu_s * l)``. A switch time that overshoots the end
of the branch (or, inside hidden subtrees, the lineage's extinction) is
kept only as the fact "no switch during the exposed time", which under
delayed sampling is the censored update of the ``sigma`` node. Observed
speciations score ``0 ~ Exponential(lam_s)`` in the state at the node;
extant tips with a known state require the simulated state to match.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..phylo import Tree, stats
from ..smc import Particles
from .crbd import LOG2, MAX_HIDDEN_LINEAGES, HiddenTreeExplosion, lifo_pick
from .rates import Rate

__all__ = ["BisseConfig", "BisseProgram", "bisse_program", "MAX_SEGMENTS"]

#: Upper bound on state-switch segments along one observed branch.
MAX_SEGMENTS = 10**6


@dataclass(frozen=True)
class BisseConfig:
    """Inputs of the BiSSE program.

    ``tip_states`` maps leaf labels to 0 or 1; leaves not in the table (or
    mapped to ``None``) are unknown. When it is ``None`` the leaves'
    ``tip_state`` attributes are used. ``prior_sigma`` defaults to
    ``Gamma(1, 10 / L)`` with ``L`` the total observed branch length.
    Fixed sampling takes ``lambdas = (lam_0, lam_1)``, ``mus = (mu_0, mu_1)``
    and ``sigma``.
    """

    tree: Tree
    tip_states: dict | None = None
    prior_lambda: tuple[float, float] = (1.0, 1.0)
    prior_mu: tuple[float, float] = (1.0, 1.0)
    prior_sigma: tuple[float, float] | None = None
    sampling: str = "delayed"
    lambdas: tuple[float, float] | None = None
    mus: tuple[float, float] | None = None
    sigma: float | None = None


class BisseProgram:
    def __init__(self, cfg: BisseConfig):
        tree = cfg.tree
        if tree.n_branches < 1:
            raise ValueError("tree has no branches")
        mode = cfg.sampling
        prior_sigma = cfg.prior_sigma
        if prior_sigma is None:
            prior_sigma = (1.0, 10.0 / stats(tree).L)
        if mode == "fixed":
            if cfg.lambdas is None or cfg.mus is None or cfg.sigma is None:
                raise ValueError("fixed sampling needs lambdas, mus and sigma")
            if min(cfg.lambdas) <= 0 or min(cfg.mus) < 0 or cfg.sigma < 0:
                raise ValueError("fixed sampling needs lam > 0, mu >= 0, sigma >= 0")
        lambdas = cfg.lambdas or (None, None)
        mus = cfg.mus or (None, None)
        self.cfg = cfg
        self.tree = tree
        self.T = tree.n_branches
        self.lam = (Rate("lam0", mode, cfg.prior_lambda, lambdas[0]),
                    Rate("lam1", mode, cfg.prior_lambda, lambdas[1]))
        self.mu = (Rate("mu0", mode, cfg.prior_mu, mus[0]),
                   Rate("mu1", mode, cfg.prior_mu, mus[1]))
        self.sigma = Rate("sigma", mode, prior_sigma, cfg.sigma)
        self.rates = {"lambda0": self.lam[0], "lambda1": self.lam[1],
                      "mu0": self.mu[0], "mu1": self.mu[1], "sigma": self.sigma}
        self._sequential = any(r.is_delayed for r in self.rates.values())
        self._ages = tree.ages
        self._length = tree.branch_lengths
        self._parent = tree.parent
        self._internal = np.array([not node.is_leaf for node in tree.nodes])
        self._tip = np.full(len(tree.nodes), -1, dtype=np.int8)
        for i, node in enumerate(tree.nodes):
            if not node.is_leaf:
                continue
            if cfg.tip_states is not None:
                state = cfg.tip_states.get(node.label)
            else:
                state = node.tip_state
            if state is not None:
                if state not in (0, 1):
                    raise ValueError(f"tip state of {node.label!r} must be 0 or 1")
                self._tip[i] = state

    def init(self, n, rng):
        p = Particles()
        for rate in self.rates.values():
            rate.init(p, n, rng)
        state = np.zeros((n, len(self.tree.nodes)), dtype=np.int8)
        state[:, 0] = rng.integers(0, 2, n)
        p["state"] = state
        return p

    # -- state-dependent helpers -------------------------------------------

    @staticmethod
    def _split(pair, s, idx, fn, *per_entry):
        out = np.empty(idx.size)
        for st in (0, 1):
            m = s == st
            if m.any():
                out[m] = fn(pair[st], idx[m], *(a[m] for a in per_entry))
        return out

    def _count(self, pair, p, s, idx, exposure, rng):
        out = np.zeros(idx.size, dtype=np.int64)
        for st in (0, 1):
            m = s == st
            if m.any():
                out[m] = pair[st].draw_count(p, idx[m], exposure[m], rng)
        return out

    # -- program -----------------------------------------------------------

    def step(self, p, t, rng):
        n = len(p)
        node_age = self._ages[t]
        state = p["state"]
        cur = state[:, self._parent[t]].copy()
        logw = np.zeros(n)
        dead = None
        rem = np.full(n, self._length[t - 1])
        active = np.arange(n)
        sigma = self.sigma
        segments = 0
        # hidden subtrees are simulated once the branch is walked; the order of
        # draws does not change their joint law, delayed or not
        spawn_p, spawn_t, spawn_s = [], [], []
        while active.size:
            segments += 1
            if segments > MAX_SEGMENTS:
                raise HiddenTreeExplosion(f"more than {MAX_SEGMENTS} state switches on one branch")
            r = rem[active]
            w = sigma.draw_wait(p, active, rng)
            switched = w < r
            seg = np.where(switched, w, r)
            sigma.note_event(p, active[switched], w[switched])
            sigma.note_censor(p, active[~switched], r[~switched])
            s = cur[active]

            c = self._count(self.lam, p, s, active, seg, rng)
            logw[active] += c * LOG2
            total = int(c.sum())
            if total:
                spawn_p.append(np.repeat(active, c))
                spawn_t.append(np.repeat(node_age + r, c) - np.repeat(seg, c) * rng.random(total))
                spawn_s.append(np.repeat(s, c))
            logw[active] += self._split(
                self.mu, s, active, lambda rate, i, e: rate.observe_zero_count(p, i, e), seg
            )
            rem[active] = r - seg
            flip = active[switched]
            cur[flip] ^= 1
            active = flip

        if spawn_p:
            dead = self._hidden_survives(p, np.concatenate(spawn_p), np.concatenate(spawn_t),
                                         np.concatenate(spawn_s), rng)
        if self._internal[t]:
            logw += self._split(
                self.lam, cur, np.arange(n), lambda rate, i: rate.observe_zero_wait(p, i)
            )
        elif self._tip[t] >= 0:
            logw[cur != self._tip[t]] = -np.inf
        state[:, t] = cur
        if dead is not None:
            logw[dead] = -np.inf
        return logw

    def _hidden_survives(self, p, pid, tau, st, rng):
        n = len(p)
        dead = np.zeros(n, dtype=bool)
        work = np.zeros(n, dtype=np.int64)
        sigma = self.sigma
        while pid.size:
            keep = ~dead[pid]
            if not keep.all():
                pid, tau, st = pid[keep], tau[keep], st[keep]
                if not pid.size:
                    break
            if self._sequential:
                sel = lifo_pick(pid)
                rest = np.ones(pid.size, dtype=bool)
                rest[sel] = False
            else:
                sel = slice(None)
                rest = np.zeros(pid.size, dtype=bool)
            cp, ctau, cs = pid[sel], tau[sel], st[sel]
            pid, tau, st = pid[rest], tau[rest], st[rest]

            np.add.at(work, cp, 1)
            if work[cp].max() > MAX_HIDDEN_LINEAGES:
                raise HiddenTreeExplosion(
                    f"more than {MAX_HIDDEN_LINEAGES} hidden lineages in one step"
                )
            sw = sigma.draw_wait(p, cp, rng)
            ext = self._split(self.mu, cs, cp, lambda rate, i: rate.draw_wait(p, i, rng))
            span = np.minimum(sw, ext)
            survived = span >= ctau
            if survived.any():
                dead[cp[survived]] = True
                ok = ~survived
                cp, ctau, cs, sw, ext, span = cp[ok], ctau[ok], cs[ok], sw[ok], ext[ok], span[ok]
                if not cp.size:
                    continue
            extinct = ext <= sw
            # the competing waiting time that did not fire is censored at span
            sigma.note_event(p, cp[~extinct], sw[~extinct])
            sigma.note_censor(p, cp[extinct], span[extinct])
            for s_ in (0, 1):
                m = cs == s_
                if m.any():
                    mu = self.mu[s_]
                    mu.note_event(p, cp[m & extinct], ext[m & extinct])
                    mu.note_censor(p, cp[m & ~extinct], span[m & ~extinct])

            kids = self._count(self.lam, p, cs, cp, span, rng)
            total = int(kids.sum())
            cont = ~extinct
            parts_p = [pid, cp[cont]]
            parts_t = [tau, ctau[cont] - span[cont]]
            parts_s = [st, 1 - cs[cont]]
            if total:
                parts_p.append(np.repeat(cp, kids))
                parts_t.append(np.repeat(ctau, kids) - np.repeat(span, kids) * rng.random(total))
                parts_s.append(np.repeat(cs, kids))
            pid = np.concatenate(parts_p)
            tau = np.concatenate(parts_t)
            st = np.concatenate(parts_s).astype(np.int8)
        return dead


def bisse_program(cfg: BisseConfig) -> BisseProgram:
    return BisseProgram(cfg)
