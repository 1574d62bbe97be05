"""
The ring scaffolding under a tall column
========================================

Every column of height h stands on a pyramid of accepted rings: layer
k is a full ball of sites around the column, each holding one ring,
every ring strictly later than the layer below it near that site.
"""

from rsoslab.lattice import LatticeBox, generate, reverse
from rsoslab.pyramid import (extract_pyramid, max_pyramid_height, pushdown,
                             reverse_pyramid, validate_pyramid)
from rsoslab.surface import InitialCondition, evolve

box = LatticeBox(dimension=1, radius=6, horizon=4.0)
events = generate(box, rate=1.0, seed=41)
_, log = evolve(events, InitialCondition.zero(), until=4.0)

# pull the scaffolding out of the accepted log at the origin
p = extract_pyramid(log, (0,), t=4.0)
print(f"origin column height {p.height}; its pyramid, base to tip:")
for k, layer in enumerate(p.layers, start=1):
    spread = [point.site[0] for point in layer]
    print(f"  layer {k}: sites {min(spread)}..{max(spread)}, "
          f"{len(layer)} rings")
assert validate_pyramid(p)

# pushing every layer down to the earliest admissible rings changes
# nothing: the extracted pyramid is already the eager one
assert pushdown(events, p) == p
print("pushdown is a fixed point")

# the tallest pyramid in the raw ring set matches the grown height
tallest = max_pyramid_height(events, (0,), t=4.0)
print(f"tallest pyramid buildable from the raw rings: {tallest}")
assert tallest == p.height

# time reversal flips it into a widening (dual) pyramid of equal height
q = reverse_pyramid(p, events)
print(f"reversed: kind {q.kind!r}, height {q.height}")
assert max_pyramid_height(reverse(events), (0,), t=4.0,
                          kind="dual") == q.height
print("reversal preserves the height on the reversed rings")
