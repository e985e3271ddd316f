"""Delayed sampling of a gamma-distributed rate.

A rate nu ~ Gamma(k, theta) drives Poisson counts and exponential waits. A
GammaNode keeps (k, theta) and answers each question with the marginal law,
updating itself as if it had seen the data. nu is never drawn.
"""

import numpy as np
from scipy import stats

from phylosmc.delayed import GammaNode

node = GammaNode(1.0, 1.0)
print(f"prior                      k={node.k:.3f} theta={node.theta:.3f}")
lw = node.observe_poisson_count(2.0, 3)
print(f"saw 3 events in time 2     k={node.k:.3f} theta={node.theta:.3f}  log p = {lw:.4f}")
node.censor(1.5)
print(f"no event for 1.5 more      k={node.k:.3f} theta={node.theta:.3f}")
lw = node.observe_exponential_zero()
print(f"an event happens now       k={node.k:.3f} theta={node.theta:.3f}  log density = {lw:.4f}")

# Check the first marginal against brute force: average the Poisson pmf over gamma draws.
rng = np.random.default_rng(0)
nu = rng.gamma(1.0, 1.0, 10**6)
mc = stats.poisson.pmf(3, 2.0 * nu).mean()
print(f"\nP(3 events) closed form {np.exp(GammaNode(1, 1).observe_poisson_count(2.0, 3)):.5f}"
      f"  Monte Carlo {mc:.5f}")

# The waiting time to the first event is Lomax; its median for k = 1, theta = 1 is 1.
waits = [GammaNode(1.0, 1.0).sample_waiting_time(rng) for _ in range(20000)]
print(f"median waiting time {np.median(waits):.3f} (exact 1)")
