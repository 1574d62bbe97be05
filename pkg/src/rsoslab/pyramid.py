"""Layered witnesses for surface height.

A height-h witness centered at x stacks layers L_1 ... L_h: layer k
occupies the l1 ball of radius h - k around the center with exactly
one event per site, and each layer-k event must come strictly after
every layer-(k-1) event at its own site or a neighboring one.  The
flat-start height at (t, x) equals the tallest such stack assembled
from events before t.  Under time reversal a stack maps to an
inverted stack (layer k on the ball of radius k - 1) of the same
height, which plays the matching role for the well-started minimum;
that characterization is anchored at the origin.

Two radius laws are kept: the default 'foundation_consistent' (layer
k has radius h - k, the law satisfied by accepted logs) and the
wider 'paper_literal' variant (radius h - k + 1) behind a flag so
the discrepancy can be reported rather than silently resolved.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .lattice import SpaceTimePoint
from .minpath import move_order
from .surface import InitialCondition, evolve

__all__ = [
    "SEARCH_CAP",
    "Pyramid",
    "ball",
    "validate_pyramid",
    "extract_pyramid",
    "reverse_pyramid",
    "pushdown",
    "max_pyramid_height",
    "pyramid_to_json",
    "pyramid_from_json",
    "write_pyramid_json",
    "read_pyramid_json",
]

SEARCH_CAP = 12

MODES = ("foundation_consistent", "paper_literal")
KINDS = ("standard", "dual")


def ball(center, radius, dimension=None):
    """Sites within l1 distance `radius` of `center`, sorted."""
    if dimension is None:
        dimension = len(center)
    if radius < 0:
        return ()
    out = []
    for off in itertools.product(range(-radius, radius + 1), repeat=dimension):
        if sum(abs(o) for o in off) <= radius:
            out.append(tuple(int(c) + o for c, o in zip(center, off)))
    return tuple(sorted(out))


def _layer_radius(kind, mode, height, k):
    if kind == "dual":
        return k - 1
    if mode == "paper_literal":
        return height - k + 1
    return height - k


@dataclass(frozen=True)
class Pyramid:
    """Layer k is `layers[k - 1]`, a tuple of events; all times must
    fall strictly inside (0, within)."""

    center: tuple
    height: int
    layers: tuple
    within: float
    kind: str = "standard"


def validate_pyramid(p, mode="foundation_consistent"):
    """True iff the stack is well-formed under the selected radius law:
    each layer covers its ball exactly once, all times sit in
    (0, within), no event repeats, and every event follows its
    same-or-adjacent-site events one layer below."""
    if mode not in MODES:
        raise ValueError("mode must be one of %r" % (MODES,))
    if p.kind not in KINDS:
        raise ValueError("kind must be one of %r" % (KINDS,))
    if p.height < 0 or len(p.layers) != p.height:
        return False
    d = len(p.center)
    moves = move_order(d)
    seen = set()
    below = {}
    for k in range(1, p.height + 1):
        layer = p.layers[k - 1]
        want = ball(p.center, _layer_radius(p.kind, mode, p.height, k), d)
        if tuple(sorted(ev.site for ev in layer)) != want:
            return False
        for ev in layer:
            if not 0.0 < ev.time < p.within:
                return False
            key = (ev.time, ev.site)
            if key in seen:
                return False
            seen.add(key)
        if k > 1:
            for ev in layer:
                for m in moves:
                    w = tuple(c + o for c, o in zip(ev.site, m))
                    tw = below.get(w)
                    if tw is not None and tw >= ev.time:
                        return False
        below = {ev.site: ev.time for ev in layer}
    return True


def extract_pyramid(log, x, t=None):
    """The stack a flat-start run actually built under (t, x).

    Layer k collects, for each site of its ball, the accepted update
    that raised the site to height k.  The result has height equal to
    the run's height at (t, x) and validates under the default law.
    """
    box = log.box
    x = tuple(int(c) for c in x)
    if not box.contains_site(x):
        raise ValueError("center outside the box")
    if t is None:
        t = box.horizon
    h = int(np.searchsorted(log.times_at(x), t, side="right"))
    layers = []
    top = 0.0
    for k in range(1, h + 1):
        layer = []
        for z in ball(x, h - k, box.dimension):
            hz = log.heights_at(z)
            pos = int(np.searchsorted(hz, k))
            if pos >= len(hz) or hz[pos] != k:
                raise ValueError("log lacks a height-%d update at %r; "
                                 "extraction needs a flat-start log" % (k, z))
            tm = float(log.times_at(z)[pos])
            top = max(top, tm)
            layer.append(SpaceTimePoint(tm, z))
        layers.append(tuple(layer))
    within = float(t)
    if top >= within:
        # an update landed exactly at t; keep the strict time bound
        within = float(np.nextafter(within, np.inf))
    return Pyramid(center=x, height=h, layers=tuple(layers),
                   within=within, kind="standard")


def reverse_pyramid(p, events):
    """The time-reversed twin: standard <-> dual, same center and
    height, layer order flipped, times mirrored on the grid of
    `events`.  Defined for stacks whose bound is the full horizon."""
    if p.within != events.box.horizon:
        raise ValueError("reversal needs within equal to the horizon")
    kind = "dual" if p.kind == "standard" else "standard"
    layers = []
    for k in range(p.height, 0, -1):
        layer = tuple(sorted(
            (SpaceTimePoint(
                math.ldexp(events.grid_ticks - events.snap_tick(ev.time),
                           events.grid_exp), ev.site)
             for ev in p.layers[k - 1]),
            key=lambda ev: ev.site))
        layers.append(layer)
    return Pyramid(center=p.center, height=p.height, layers=tuple(layers),
                   within=p.within, kind=kind)


def pushdown(events, p, mode="foundation_consistent"):
    """Rebuild the stack with the earliest usable events of `events`.

    Layer 1 takes the first event at each of its sites; layer k takes,
    at each site, the first event after all chosen layer-(k-1) events
    at the same or an adjacent site.  The input must validate and its
    events must belong to `events`; the output is eventwise no later,
    has the same shape, and still validates.
    """
    if not validate_pyramid(p, mode):
        raise ValueError("pyramid does not validate, nothing to push down")
    for layer in p.layers:
        for ev in layer:
            if not events.has_event(ev.time, ev.site):
                raise ValueError("pyramid event %r is not in the set" % (ev,))
    d = len(p.center)
    moves = move_order(d)
    below = {}
    new_layers = []
    for k in range(1, p.height + 1):
        cur = {}
        for ev in p.layers[k - 1]:
            z = ev.site
            t0 = 0.0
            for m in moves:
                w = tuple(c + o for c, o in zip(z, m))
                tw = below.get(w)
                if tw is not None and tw > t0:
                    t0 = tw
            ts = events.events_at(z)
            pos = int(np.searchsorted(ts, t0, side="right"))
            if pos >= len(ts) or ts[pos] > ev.time:
                raise RuntimeError("no event available under %r" % (ev,))
            cur[z] = float(ts[pos])
        new_layers.append(tuple(SpaceTimePoint(tm, z)
                                for z, tm in sorted(cur.items())))
        below = cur
    return Pyramid(center=p.center, height=p.height,
                   layers=tuple(new_layers), within=p.within, kind=p.kind)


def _assignment_exists(site_times, center, h, d, kind, mode):
    # exhaustive backtracking over per-slot event choices; no greedy
    # shortcut, so this is a genuine oracle for the evolved height
    if h == 0:
        return True
    moves = move_order(d)
    slots = []
    for k in range(1, h + 1):
        for z in ball(center, _layer_radius(kind, mode, h, k), d):
            slots.append((k, z))
    chosen = {}
    used = set()

    def rec(i):
        if i == len(slots):
            return True
        k, z = slots[i]
        ts = site_times.get(z)
        if not ts:
            return False
        t0 = 0.0
        for m in moves:
            w = tuple(c + o for c, o in zip(z, m))
            tw = chosen.get((k - 1, w))
            if tw is not None and tw > t0:
                t0 = tw
        for tm in ts:
            if tm <= t0 or (z, tm) in used:
                continue
            chosen[(k, z)] = tm
            used.add((z, tm))
            if rec(i + 1):
                return True
            del chosen[(k, z)]
            used.discard((z, tm))
        return False

    return rec(0)


def max_pyramid_height(events, x, t=None, method="via_rsos",
                       kind="standard", mode="foundation_consistent"):
    """Tallest stack centered at x within time t.

    'via_rsos' reads the height off the evolved surface (flat start
    for standard stacks; for dual stacks, the box minimum of the
    well-started surface, defined at the origin only).  'brute_force'
    searches every layer assignment and refuses sets with more than
    SEARCH_CAP events in the window.
    """
    box = events.box
    x = tuple(int(c) for c in x)
    if not box.contains_site(x):
        raise ValueError("center outside the box")
    if t is None:
        t = box.horizon
    if not 0 <= t <= box.horizon:
        raise ValueError("t must lie in [0, horizon]")
    if method == "via_rsos":
        if kind == "standard":
            field, _ = evolve(events, InitialCondition.zero(), until=t)
            return field.height_at(x)
        if any(c != 0 for c in x):
            raise ValueError("the well-started characterization is anchored "
                             "at the origin")
        field, _ = evolve(events, InitialCondition.well(), until=t)
        return int(field.heights.min())
    if method != "brute_force":
        raise ValueError("method must be 'via_rsos' or 'brute_force'")
    n = int(np.searchsorted(events.times, t, side="left"))
    if n > SEARCH_CAP:
        raise ValueError("brute force handles at most %d events in the "
                         "window, got %d" % (SEARCH_CAP, n))
    site_times = {}
    for i in range(n):
        site = tuple(int(c) for c in events.sites[i])
        site_times.setdefault(site, []).append(float(events.times[i]))
    best = 0
    h = 1
    while True:
        slot_count = sum(
            len(ball(x, _layer_radius(kind, mode, h, k), len(x)))
            for k in range(1, h + 1))
        if slot_count > n:
            break
        if _assignment_exists(site_times, x, h, len(x), kind, mode):
            best = h
        h += 1
    return best


def pyramid_to_json(p):
    return {
        "center": list(p.center),
        "height": p.height,
        "within": p.within,
        "kind": p.kind,
        "layers": [[{"t": ev.time, "x": list(ev.site)} for ev in layer]
                   for layer in p.layers],
    }


def pyramid_from_json(doc):
    layers = tuple(
        tuple(SpaceTimePoint(float(e["t"]), tuple(int(c) for c in e["x"]))
              for e in layer)
        for layer in doc["layers"])
    p = Pyramid(center=tuple(int(c) for c in doc["center"]),
                height=int(doc["height"]), layers=layers,
                within=float(doc["within"]), kind=doc["kind"])
    if len(p.layers) != p.height:
        raise ValueError("layer count %d does not match height %d"
                         % (len(p.layers), p.height))
    return p


def write_pyramid_json(p, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(pyramid_to_json(p), fh, indent=1)
        fh.write("\n")


def read_pyramid_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return pyramid_from_json(json.load(fh))
