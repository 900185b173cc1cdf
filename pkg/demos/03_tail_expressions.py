"""
Tail probabilities with ties
============================

Conditions such as ``tau_1 > 0.5`` together with ``tau_2 == tau_3`` are
split into events with an explicit tie pattern. Each event is a tail
probability computed by a recursion over the first block to be completed.
"""

import phasehit as ph
from phasehit.cli import parse_constraints

model = ph.load_model("example_s5")

expr = "tau(1) > 0.5 && tau(2) == tau(3)"
cons = parse_constraints(expr)
dec = ph.canonicalize(cons)
for event in dec:
    print(f"{str(event):45s} {event.probability(model):.10f}")
print(f"{expr:45s} {dec.probability(model):.10f}")

# the two representations of a tail vector agree
q = ph.TailQuery(ph.SubPartition([[1]]), ph.SubPartition([[2, 3]]), (0.5,))
print("recursion        ", ph.tail_p(model, q).value)
print("subpermutations  ", ph.tail_p_alt(model, q).value)
print("absorbing targets", ph.tail_p_absorbing(model, q).value)

# and a simulation of the raw constraints
sample = ph.simulate(model, 200_000, horizon=400.0, seed=3)
est = sample.frequency(sample.constraint_indicator(cons))
print(f"simulated {est.value:.5f} +- {est.stderr:.5f}")
