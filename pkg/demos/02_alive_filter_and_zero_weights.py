"""What the alive filter buys when particles can get weight zero.

The indicator model weights a particle 1 if its Gaussian step lands inside
[-b, b] and 0 otherwise. The bootstrap filter can lose every particle; the
alive filter keeps drawing until N + 1 particles survive.
"""

import numpy as np

from phylosmc import smc
from phylosmc.models import IndicatorConfig, indicator_acceptance, indicator_program

for b in (1.0, 0.1, 0.02):
    cfg = IndicatorConfig(b=b, T=5)
    p = indicator_acceptance(cfg)
    program = indicator_program(cfg)
    n, m = 32, 400
    bpf = smc.batch(program, "bpf", n, m, seed=1)
    apf = smc.batch(program, "apf", n, m, seed=1)
    mean_p = np.stack([r.propagations for r in apf.runs]).mean()
    print(f"b={b:<5} p={p:.4f}  exact log Z={cfg.T * np.log(p):8.3f}")
    print(f"   bpf: {bpf.summary.degenerate_runs:3d}/{m} runs died")
    print(f"   apf: mean P_t = {mean_p:8.1f} (theory {(n + 1) / p:8.1f}), rho = {apf.summary.rho:.1f}")

# With b = 0 nothing is ever accepted. The alive filter gives up after max_attempts.
try:
    smc.run_apf(indicator_program(IndicatorConfig(b=0.0)), 8, seed=0, max_attempts=10**4)
except smc.CheckpointStarvation as exc:
    print(f"\nb=0: {exc}")
