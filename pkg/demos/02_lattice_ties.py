"""
Simultaneous hits on a lattice walk
===================================

The bundled ``example_s5`` model is a walk on {0,1,2}^3 whose joint steps
can freeze several coordinates at once. The three hitting times of the
faces z_k = 0 are then tied with positive probability, and the joint law
splits over the 13 orderings of {1, 2, 3} with ties.
"""

import phasehit as ph

model = ph.load_model("example_s5")
print(ph.dump_model(model).splitlines()[0], "...", model.n, "states")

# probability of every ordering, exact
for s in ph.enumerate_partitions(model.keys):
    print(f"{ph.render(s):>14}   {ph.region_probability(model, s):.10f}")

# the chance that all three faces are reached at different instants,
# by inclusion and exclusion over the tie events
a = model.alpha
p12, p13, p23 = (float(a @ ph.equality_prob(model, j, k)) for j, k in ((1, 2), (1, 3), (2, 3)))
p123 = float(a @ ph.equality_prob(model, 1, 2, 3))
print("P(all distinct) =", 1 - (p12 + p13 + p23 - 2 * p123))

# the same from a million simulated paths
sample = ph.simulate(model, 10 ** 6, horizon=400.0, seed=0)
distinct = sum(sample.frequency(sample.region_indicator(s)).value
               for s in ph.enumerate_partitions(model.keys) if len(s) == 3)
print("simulated       =", distinct)
