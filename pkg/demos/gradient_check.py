"""
Exact online gradients without storing history
===============================================

A two-stage network learns one stage at a time. The gradient each step
returns comes from forward-mode traces; here it is compared against a reverse
sweep over the whole recorded stream and against finite differences.
"""

import numpy as np

from ccnrtrl import oracle
from ccnrtrl.verify import random_instance

# A network in its second stage: two frozen columns, two learning columns.
net = random_instance("ccn", seed=4)
print("stage", net.stage, "| live features", net.n_live, "| parameters", net.n_params,
      "| frozen", int(net.frozen_mask().sum()))

rng = np.random.default_rng(0)
xs = rng.uniform(-1, 1, (200, net.n_obs))
snapshot = net.clone()

# Online: one gradient per step, computed as the stream goes by.
online = np.array([net.step(x)[1] for x in xs])

# Offline: all 200 gradients from one reverse pass over the recorded stream.
_, reverse = oracle.bptt_jacobian(snapshot, xs)
print("max |online - reverse| over 200 steps:", np.abs(online - reverse).max())

# Finite differences at the last step, in extended precision.
fd = oracle.finite_diff(snapshot, xs, 199)
g = reverse[199]
mask = np.abs(g) > 1e-8
print("max relative |fd - reverse| at t=199:", (np.abs(fd - g)[mask] / np.abs(g[mask])).max())

# Frozen parameters get exactly zero gradient.
print("gradient mass on frozen parameters:", np.abs(online[:, snapshot.frozen_mask()]).sum())
