"""
The height is a shortest-path problem in disguise
=================================================

The column height at (t, x) equals the minimum number of rings any
backwards lattice path must step on, and a single inserted ring can
raise the height only if it sits on a minimizing path.
"""

from rsoslab.lattice import LatticeBox, SpaceTimePoint, generate
from rsoslab.minpath import argmin_path, min_weight, perturb_height
from rsoslab.surface import InitialCondition, evolve

box = LatticeBox(dimension=1, radius=6, horizon=5.0)
events = generate(box, rate=1.0, seed=7)
init = InitialCondition.zero()

# two independent routes to the same number
field, _ = evolve(events, init, until=5.0)
grown = field.height_at((0,))
walked = min_weight(events, 5.0, (0,), init)
print(f"evolved height {grown}, minimal path weight {walked}")
assert grown == walked

# one concrete minimizing path, printed step by step
trace = argmin_path(events, 5.0, (0,), init)
print(f"a minimizing path with {trace.weight} rings:")
for event, move in trace.steps:
    step = "stays" if not any(move) else f"moves {move}"
    print(f"  t={event.time:.3f} site {event.site} {step}")

# inserting a ring far from that path leaves the height alone
far = SpaceTimePoint(2.5, (5,))
print("insert at", far.site, "-> height change", perturb_height(events, far, 5.0, (0,), init))

# inserting right on the path can raise it by one, never more
if trace.steps:
    on = trace.steps[0]
    probe = SpaceTimePoint(on[0].time + 1e-4, on[0].site)
    print("insert next to the path ->", perturb_height(events, probe, 5.0, (0,), init))
