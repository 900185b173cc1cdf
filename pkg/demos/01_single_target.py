"""
One target: phase-type laws
===========================

A single hitting time of a finite chain is phase-type distributed. We build
a three-state chain by hand and look at its density, survival function and
the taboo distribution of the chain before it hits the target.
"""

import numpy as np

import phasehit as ph

# a small repair model: 0 = working, 1 = degraded, 2 = failed
Q = np.array([[-1.0, 0.8, 0.2],
              [0.5, -1.5, 1.0],
              [0.0, 0.0, 0.0]])
model = ph.IntensityModel(Q, {1: [2]}, np.array([1.0, 0.0, 0.0]))

# density and survival of the failure time
for u in (0.5, 1.0, 2.0, 4.0):
    f = ph.density_single(model, [2], u=u)
    S = ph.survival_single(model, [2], u).value
    print(f"u = {u:3.1f}   density {f:.6f}   survival {S:.6f}")

# the survival function integrates the density
grid = np.linspace(0.0, 3.0, 301)
f = np.array([ph.density_single(model, [2], u=u) for u in grid])
print("1 - S(3) =", 1 - ph.survival_single(model, [2], 3.0).value,
      " trapezoid of f on [0, 3] =", np.trapezoid(f, grid))

# where the chain sits at time 1 on paths that have not failed yet
print("taboo distribution at u = 1:", ph.taboo_distribution(model, [2], 1.0))

# a Monte Carlo look at the same survival value
sample = ph.simulate(model, 100_000, horizon=200.0, seed=1)
print("simulated P(tau > 2):", float(np.mean(sample.tau[:, 0] > 2.0)))
