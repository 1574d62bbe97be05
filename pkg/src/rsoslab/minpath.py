"""Height values through path-weight optimization over the event set.

A backwards path from (t, x) down to time s is piecewise constant and
jumps only at events at its own current site, read from the later-time
side; at such an event it may stay or move one unit step. An event at
the start instant itself admits an immediate step. The path's weight is
the number of events it meets in the window (s, t]; charging lateral
steps k instead of 1 gives weight_k.

The growth dynamics compute exactly the minimum (rsos, krsos) or
maximum (bd) over paths of weight plus the starting surface value at
the path's endpoint, so the event-driven kernel doubles as the weight
DP; enumerate_paths provides the independent brute-force route.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .lattice import EventSet, LatticeBox, SpaceTimePoint, insert_event
from .surface import InitialCondition, evolve

DEFAULT_ENUMERATION_CAP = 14


@lru_cache(maxsize=32)
def move_order(d: int) -> tuple:
    """Fixed total order on the allowed per-event moves: 0, +e1, -e1, +e2, ..."""
    out = [tuple([0] * d)]
    for axis in range(d):
        for sign in (1, -1):
            e = [0] * d
            e[axis] = sign
            out.append(tuple(e))
    return tuple(out)


def _step_down(box: LatticeBox, site: tuple, m: tuple):
    """Site below a move m (move = upper site minus lower site), or None."""
    if not any(m):
        return site
    low = tuple(s - dm for s, dm in zip(site, m))
    if box.boundary == "periodic":
        return tuple((c + box.radius) % box.width - box.radius for c in low)
    return low if box.contains_site(low) else None


@dataclass
class PathTrace:
    """A backwards path: start point, end time, and the events it meets.

    steps are ((event, move), ...) in decreasing time order; move is the
    upper-minus-lower site offset, the zero vector for a stay.
    """

    start: SpaceTimePoint
    end_time: float
    steps: tuple

    @property
    def weight(self) -> int:
        return len(self.steps)

    @property
    def n_horizontal(self) -> int:
        return sum(1 for _, m in self.steps if any(m))

    def weight_k(self, k: int) -> int:
        return self.weight + (k - 1) * self.n_horizontal

    @property
    def end_site(self) -> tuple:
        site = self.start.site
        for _, m in self.steps:
            site = tuple(s - dm for s, dm in zip(site, m))
        return site

    def site_at(self, box: LatticeBox) -> tuple:
        """End site with periodic wrapping applied stepwise."""
        site = self.start.site
        for _, m in self.steps:
            site = _step_down(box, site, m)
        return site


def path_is_valid(events: EventSet, trace: PathTrace) -> bool:
    """Check the path contract against the event set.

    Times must strictly decrease, each listed event must exist at the
    path's then-current site, moves must stay in the box, and the path
    may not skip an event at its own site inside any occupancy interval.
    """
    box = events.box
    cur = trace.start.site
    if not box.contains_site(cur):
        return False
    upper = trace.start.time
    inclusive = True
    for ev, m in trace.steps:
        r = ev.time
        if r <= trace.end_time or r > upper or (r == upper and not inclusive):
            return False
        if tuple(ev.site) != tuple(cur):
            return False
        if not events.has_event(r, cur):
            return False
        times = events.events_at(cur)
        skipped = times[(times > r) & (times < upper)] if not inclusive \
            else times[(times > r) & (times <= upper)]
        if len(skipped) > 0:
            return False
        if m not in move_order(box.dimension):
            return False
        cur = _step_down(box, cur, m)
        if cur is None:
            return False
        upper, inclusive = r, False
    times = events.events_at(cur)
    if inclusive:
        tail = times[(times > trace.end_time) & (times <= upper)]
    else:
        tail = times[(times > trace.end_time) & (times < upper)]
    return len(tail) == 0


def min_weight(events: EventSet, t: float, x, init: InitialCondition,
               s: float = 0.0, model: str = "rsos", k: int = 1) -> int:
    """Optimal path value at (t, x): min (max for bd) over paths down to
    time s of weight plus the surface value at the path's endpoint.

    Computed by the forward event-driven recursion, one pass over the
    events. By the restart identity the result does not depend on s;
    the argument is validated and kept for the contract's sake.
    """
    box = events.box
    if not box.contains_site(x):
        raise ValueError(f"site {tuple(x)} outside box of radius {box.radius}")
    if not (0.0 <= s <= t):
        raise ValueError(f"need 0 <= s <= t, got s={s}, t={t}")
    field, _ = evolve(events, init, model=model, until=t, k=k)
    return field.height_at(x)


def exactness_certificate(events: EventSet, t: float, x,
                          init: InitialCondition, value: int = None) -> dict:
    """Certify that the boxed value at (t, x) equals the free-space value.

    sharp: the computed value is at most the lateral distance from x to
    the boundary, so any path leaving the box costs at least as much.
    conservative: starting value plus the ring count at x already stays
    under that distance. Both require a nonnegative starting surface.
    """
    box = events.box
    margin = box.radius - max(abs(int(c)) for c in x)
    base = init.build(box)
    nonneg = bool(base.min() >= 0)
    times = events.events_at(x)
    count = int(np.searchsorted(times, t, side="right"))
    if value is None:
        value = min_weight(events, t, x, init)
    start = init.value_at(x)
    return {
        "sharp": nonneg and value <= margin,
        "conservative": nonneg and start + count <= margin,
        "margin": margin,
        "value": int(value),
    }


class _HeightClock:
    """Height lookups at arbitrary instants from init plus the accepted log."""

    def __init__(self, box, base, log):
        self.box = box
        self.base = base
        self.log = log

    def before(self, r: float, site) -> int:
        flat = int(self.box.flat_index(np.asarray([site]))[0])
        times = self.log.times_at(site)
        return int(self.base[flat]) + int(np.searchsorted(times, r, side="left"))


def argmin_path(events: EventSet, t: float, x,
                init: InitialCondition) -> PathTrace:
    """One minimizing path for the rsos value at (t, x), end time 0.

    Ties are broken by the fixed move order (stay first, then +e1, -e1,
    +e2, ...), so the result is deterministic.
    """
    box = events.box
    if not box.contains_site(x):
        raise ValueError(f"site {tuple(x)} outside box of radius {box.radius}")
    field, log = evolve(events, init, model="rsos", until=t)
    clock = _HeightClock(box, init.build(box), log)
    cur = tuple(int(c) for c in x)
    v = field.height_at(cur)
    upper, inclusive = t, True
    steps = []
    while True:
        times = events.events_at(cur)
        side = "right" if inclusive else "left"
        idx = int(np.searchsorted(times, upper, side=side)) - 1
        if idx < 0:
            break
        r = float(times[idx])
        chosen = None
        for m in move_order(box.dimension):
            low = _step_down(box, cur, m)
            if low is not None and clock.before(r, low) == v - 1:
                chosen = (m, low)
                break
        if chosen is None:
            raise RuntimeError("no move consistent with the value recursion; "
                               "the recursion and dynamics disagree")
        steps.append((SpaceTimePoint(r, cur), chosen[0]))
        cur = chosen[1]
        v -= 1
        upper, inclusive = r, False
    if v != clock.before(0.0, cur):
        raise RuntimeError("reconstructed path value does not close on the "
                           "starting surface")
    return PathTrace(SpaceTimePoint(t, tuple(int(c) for c in x)), 0.0,
                     tuple(steps))


def enumerate_paths(events: EventSet, t: float, x, s: float = 0.0,
                    cap: int = DEFAULT_ENUMERATION_CAP):
    """Yield every backwards path from (t, x) to time s exactly once.

    Refuses outright when the window holds more than `cap` events; the
    path count grows like (2d + 2)^events.
    """
    box = events.box
    if not box.contains_site(x):
        raise ValueError(f"site {tuple(x)} outside box of radius {box.radius}")
    lo = int(np.searchsorted(events.times, s, side="right"))
    hi = int(np.searchsorted(events.times, t, side="right"))
    if hi - lo > cap:
        raise ValueError(
            f"enumeration refused: {hi - lo} events in the window exceed the "
            f"cap of {cap}"
        )
    start = SpaceTimePoint(t, tuple(int(c) for c in x))

    def walk(site, upper, inclusive, steps):
        times = events.events_at(site)
        side = "right" if inclusive else "left"
        idx = int(np.searchsorted(times, upper, side=side)) - 1
        r = float(times[idx]) if idx >= 0 else None
        if r is None or r <= s:
            yield PathTrace(start, s, tuple(steps))
            return
        ev = SpaceTimePoint(r, site)
        for m in move_order(box.dimension):
            low = _step_down(box, site, m)
            if low is None:
                continue
            steps.append((ev, m))
            yield from walk(low, r, False, steps)
            steps.pop()

    return walk(start.site, t, True, [])


def perturb_height(events: EventSet, p: SpaceTimePoint, t: float, x,
                   init: InitialCondition) -> int:
    """Height change at (t, x) from inserting one extra ring at p.

    Always 0 or 1: an extra ring can only help a path by one unit and
    never hurts.
    """
    before = min_weight(events, t, x, init)
    after = min_weight(insert_event(events, p), t, x, init)
    return after - before


# -- serialization -----------------------------------------------------


def path_to_json(trace: PathTrace) -> dict:
    return {
        "start": {"t": trace.start.time, "x": list(trace.start.site)},
        "end_time": trace.end_time,
        "steps": [
            {"t": ev.time, "x": list(ev.site), "move": list(m)}
            for ev, m in trace.steps
        ],
        "weight": trace.weight,
    }


def path_from_json(obj: dict) -> PathTrace:
    steps = tuple(
        (SpaceTimePoint(st["t"], tuple(st["x"])), tuple(st["move"]))
        for st in obj["steps"]
    )
    trace = PathTrace(
        SpaceTimePoint(obj["start"]["t"], tuple(obj["start"]["x"])),
        float(obj["end_time"]), steps,
    )
    if trace.weight != obj["weight"]:
        raise ValueError("stored weight does not match the step list")
    return trace


def write_path_json(trace: PathTrace, path) -> None:
    with open(path, "w") as fh:
        json.dump(path_to_json(trace), fh)


def read_path_json(path) -> PathTrace:
    with open(path) as fh:
        return path_from_json(json.load(fh))
