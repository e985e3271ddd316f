"""Alive particle filtering with delayed sampling for birth-death models."""

from . import delayed, dists, models, phylo, smc
from .smc import batch, run_apf, run_bpf

__version__ = "0.1.0"
