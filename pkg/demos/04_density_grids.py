"""
Density surfaces on tied regions
================================

On the region where tau_2 = tau_3 < tau_1 the joint law has a density in
two coordinates; on the diagonal tau_1 = tau_2 = tau_3 it has one in a
single coordinate. We tabulate both and compare box masses with a
histogram of simulated hitting times.
"""

import numpy as np
from scipy.integrate import simpson

import phasehit as ph

model = ph.load_model("example_s5")
s = ph.parse("{2,3}<{1}")

# a coarse table of the two-dimensional density
xs = np.linspace(0.2, 1.0, 5)
ys = np.linspace(1.2, 2.8, 5)
print("t23 \\ t1 " + " ".join(f"{y:9.2f}" for y in ys))
for x in xs:
    row = [ph.joint_density(model, {1: y, 2: x, 3: x}, s).value for y in ys]
    print(f"{x:8.2f} " + " ".join(f"{v:9.5f}" for v in row))

# the diagonal density against a histogram of simulated ties
sample = ph.simulate(model, 10 ** 6, horizon=400.0, seed=0)
diag = ph.parse("{1,2,3}")
boxes = ph.grid_boxes([0.1], [3.1], [6])
est = ph.binned_density(model, diag, boxes, 0, sample=sample)
for (lo, hi), e in zip(boxes, est):
    t = np.linspace(lo[0], hi[0], 9)
    f = [ph.joint_density(model, {1: u, 2: u, 3: u}, diag).value for u in t]
    print(f"[{lo[0]:.1f}, {hi[0]:.1f})  exact mass {simpson(f, x=t):.6f}   "
          f"simulated {e.mass.value:.6f} +- {e.mass.stderr:.6f}")
