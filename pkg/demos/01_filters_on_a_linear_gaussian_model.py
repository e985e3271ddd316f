"""Both filters on a model whose evidence we know exactly.

The linear-Gaussian state-space model has a Kalman-filter evidence, so we can
watch the two estimators scatter around the truth.
"""

import math

import numpy as np

from phylosmc import smc
from phylosmc.models import LgssConfig, kalman_log_evidence, lgss_program

cfg = LgssConfig()
exact = kalman_log_evidence(cfg)
print(f"observations: {np.round(cfg.y, 3)}")
print(f"Kalman log evidence: {exact:.6f}\n")

program = lgss_program(cfg)

# One run gives a noisy estimate. Its log is biased low (Jensen); the estimate itself is not.
one = smc.run_bpf(program, 64, seed=1)
print(f"single bootstrap run: log Z = {one.log_z:.4f}")

for method in ("bpf", "apf"):
    res = smc.batch(program, method, 64, 2000, seed=7)
    mean, se, shift = smc.scaled_mean_se(res.log_z)
    z = (mean - math.exp(exact - shift)) / se
    print(f"{method}: log mean Z = {math.log(mean) + shift:.4f}  z vs Kalman = {z:+.2f}"
          f"  var log Z = {res.summary.var_log_z:.4f}")

# Every weight here is positive, so the alive filter never rejects: P_t = N + 1.
res = smc.run_apf(program, 64, seed=3)
print(f"\nalive filter propagations per checkpoint: {res.propagations.tolist()}")
