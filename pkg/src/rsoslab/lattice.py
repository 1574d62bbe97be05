"""Random space-time event sets on finite lattice boxes.

Every site of the box [-L, L]^d carries an independent Poisson clock on the
time window (0, T); each ring is an event (t, x). Event times live on a
dyadic grid: with T = fr * 2**E (frexp decomposition) the grid tick is
g = 2**(E - 53) and every stored time is an exact integer multiple j * g
with 1 <= j <= ticks - 1. On that grid the time reversal t -> T - t maps
tick j to ticks - j and is therefore an exact involution in 64-bit floats,
which plain floating-point subtraction is not.

EventSets are immutable after construction; perturbation operations return
new values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

# Generation refuses boxes whose expected event count exceeds this budget.
MAX_EXPECTED_EVENTS = 5e7

_MANTISSA = 53


@dataclass(frozen=True)
class LatticeBox:
    """Finite space-time box: sites in [-L, L]^d, times in (0, T).

    boundary "free" gives boundary sites only their in-box neighbors;
    "periodic" wraps coordinates modulo the box width.
    """

    dimension: int
    radius: int
    horizon: float
    boundary: str = "free"

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")
        if self.radius < 1:
            raise ValueError(f"radius must be >= 1, got {self.radius}")
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon}")
        if self.boundary not in ("free", "periodic"):
            raise ValueError(f"boundary must be 'free' or 'periodic', got {self.boundary!r}")

    @property
    def width(self) -> int:
        return 2 * self.radius + 1

    @property
    def site_count(self) -> int:
        return self.width ** self.dimension

    def contains_site(self, site) -> bool:
        return len(site) == self.dimension and all(
            -self.radius <= c <= self.radius for c in site
        )

    def lateral_neighbors(self, site) -> list[tuple]:
        """In-box sites reachable by one unit step from `site`."""
        out = []
        for axis in range(self.dimension):
            for step in (1, -1):
                c = list(site)
                c[axis] += step
                if self.boundary == "periodic":
                    c[axis] = (c[axis] + self.radius) % self.width - self.radius
                elif not (-self.radius <= c[axis] <= self.radius):
                    continue
                out.append(tuple(c))
        return out

    def flat_index(self, sites: np.ndarray) -> np.ndarray:
        """Row-major flat index of site coordinate rows, in [0, site_count)."""
        sites = np.atleast_2d(np.asarray(sites, dtype=np.int64))
        idx = np.zeros(len(sites), dtype=np.int64)
        for axis in range(self.dimension):
            idx = idx * self.width + (sites[:, axis] + self.radius)
        return idx

    def unflatten(self, idx: int) -> tuple:
        coords = []
        for _ in range(self.dimension):
            coords.append(idx % self.width - self.radius)
            idx //= self.width
        return tuple(reversed(coords))

    def neighbor_table(self) -> np.ndarray:
        """(site_count, 2d) flat neighbor indices, -1 where a free boundary cuts one off.

        Column order is +e1, -e1, +e2, -e2, ...
        """
        n, d, w, L = self.site_count, self.dimension, self.width, self.radius
        table = np.empty((n, 2 * d), dtype=np.int64)
        idx = np.arange(n, dtype=np.int64)
        for axis in range(d):
            stride = w ** (d - 1 - axis)
            coord = (idx // stride) % w
            for col, step in ((2 * axis, 1), (2 * axis + 1, -1)):
                nb = idx + step * stride
                if self.boundary == "periodic":
                    nb = idx + ((coord + step) % w - coord) * stride
                    table[:, col] = nb
                else:
                    table[:, col] = np.where(
                        (coord + step >= 0) & (coord + step < w), nb, -1
                    )
        return table


@dataclass(frozen=True)
class SpaceTimePoint:
    """A clock ring: time plus the site it rings at."""

    time: float
    site: tuple

    def __post_init__(self):
        object.__setattr__(self, "site", tuple(int(c) for c in self.site))
        if self.time < 0:
            raise ValueError(f"time must be nonnegative, got {self.time}")


def _grid_exponent(horizon: float) -> tuple[int, int]:
    """Return (exp, ticks) with horizon == ticks * 2**exp and ticks == 2**52..2**53."""
    fr, e = math.frexp(horizon)
    return e - _MANTISSA, int(fr * (1 << _MANTISSA))


class EventSet:
    """Immutable set of events over a box, sorted globally by time.

    Times are stored as integer grid ticks; float views are derived exactly
    via ldexp. Arrays are read-only.
    """

    def __init__(self, box: LatticeBox, ticks: np.ndarray, sites: np.ndarray,
                 rate: float = 1.0, seed=None):
        self.box = box
        self.rate = float(rate)
        self.seed = seed
        self.grid_exp, self.grid_ticks = _grid_exponent(box.horizon)
        ticks = np.asarray(ticks, dtype=np.int64)
        sites = np.asarray(sites, dtype=np.int64).reshape(len(ticks), box.dimension)
        if len(ticks) > 0:
            if np.any(np.diff(ticks) <= 0):
                raise ValueError("event times must be strictly increasing and distinct")
            if ticks[0] < 1 or ticks[-1] > self.grid_ticks - 1:
                raise ValueError("event times must lie strictly inside (0, horizon)")
            if np.any(np.abs(sites) > box.radius):
                raise ValueError("event sites must lie inside the box")
        self._ticks = ticks
        self._sites = sites
        self._ticks.setflags(write=False)
        self._sites.setflags(write=False)
        self._times = np.ldexp(ticks.astype(np.float64), self.grid_exp)
        self._times.setflags(write=False)
        self._by_site = None

    # -- views ---------------------------------------------------------

    @property
    def times(self) -> np.ndarray:
        """Event times, float64, strictly increasing."""
        return self._times

    @property
    def sites(self) -> np.ndarray:
        """Event sites, shape (n, d), aligned with `times`."""
        return self._sites

    @property
    def ticks(self) -> np.ndarray:
        return self._ticks

    def __len__(self) -> int:
        return len(self._ticks)

    def __iter__(self):
        for t, row in zip(self._times, self._sites):
            yield SpaceTimePoint(float(t), tuple(int(c) for c in row))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventSet):
            return NotImplemented
        return (
            self.box == other.box
            and self.rate == other.rate
            and self.seed == other.seed
            and np.array_equal(self._ticks, other._ticks)
            and np.array_equal(self._sites, other._sites)
        )

    def __repr__(self) -> str:
        b = self.box
        return (f"EventSet(n={len(self)}, d={b.dimension}, L={b.radius}, "
                f"T={b.horizon}, boundary={b.boundary!r})")

    def flat_sites(self) -> np.ndarray:
        """Flat site index per event, for kernel consumption."""
        if len(self) == 0:
            return np.empty(0, dtype=np.int64)
        return self.box.flat_index(self._sites)

    def _site_map(self) -> dict:
        if self._by_site is None:
            if len(self) == 0:
                self._by_site = {}
            else:
                # group indices by site in one vectorized pass; the stable
                # sort keeps each group ascending in time
                flat = self.flat_sites()
                order = np.argsort(flat, kind="stable")
                starts = np.flatnonzero(np.diff(flat[order])) + 1
                self._by_site = {
                    tuple(int(c) for c in self._sites[g[0]]): g
                    for g in np.split(order, starts)
                }
        return self._by_site

    def events_at(self, site) -> np.ndarray:
        """Times of events at one site, ascending (empty array if none)."""
        ix = self._site_map().get(tuple(int(c) for c in site))
        if ix is None:
            return np.empty(0, dtype=np.float64)
        return self._times[ix]

    def ticks_at(self, site) -> np.ndarray:
        ix = self._site_map().get(tuple(int(c) for c in site))
        if ix is None:
            return np.empty(0, dtype=np.int64)
        return self._ticks[ix]

    def per_site(self) -> dict:
        """Map site -> ascending list of event times. Builds the full map."""
        return {s: list(map(float, self._times[ix]))
                for s, ix in self._site_map().items()}

    def snap_tick(self, time: float) -> int:
        """Nearest grid tick to a float time."""
        return int(round(math.ldexp(float(time), -self.grid_exp)))

    def has_event(self, time: float, site) -> bool:
        tick = self.snap_tick(time)
        pos = np.searchsorted(self._ticks, tick)
        while pos < len(self) and self._ticks[pos] == tick:
            if tuple(int(c) for c in self._sites[pos]) == tuple(site):
                return True
            pos += 1
        return False

    def point(self, i: int) -> SpaceTimePoint:
        return SpaceTimePoint(float(self._times[i]),
                              tuple(int(c) for c in self._sites[i]))


def _draw_distinct_ticks(rng: np.random.Generator, ticks: int, n: int) -> np.ndarray:
    """n distinct uniform draws from {1, ..., ticks - 1}; collisions are redrawn."""
    if n > ticks - 1:
        raise ValueError(f"cannot place {n} distinct times on a {ticks - 1}-tick grid")
    j = rng.integers(1, ticks, size=n, dtype=np.int64)
    while True:
        order = np.argsort(j, kind="stable")
        sj = j[order]
        dup = order[1:][sj[1:] == sj[:-1]]
        if len(dup) == 0:
            return j
        j[dup] = rng.integers(1, ticks, size=len(dup), dtype=np.int64)


def rng_for(seed) -> np.random.Generator:
    """Counter-based generator for a seed or SeedSequence."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def replication_seed(master_seed: int, replication: int) -> np.random.SeedSequence:
    """Independent child stream for one replication of a master seed."""
    return np.random.SeedSequence(master_seed, spawn_key=(replication,))


def generate(box: LatticeBox, rate: float, seed) -> EventSet:
    """Draw the Poisson event set on `box` at the given rate.

    Deterministic in (box, rate, seed). The total count is Poisson with
    mean site_count * horizon * rate and positions are uniform, which is
    the same law as independent per-site Poisson clocks.
    """
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    lam = box.site_count * box.horizon * rate
    if lam > MAX_EXPECTED_EVENTS:
        raise ValueError(
            f"expected event count {lam:.3g} exceeds budget {MAX_EXPECTED_EVENTS:.3g}; "
            f"shrink the box, horizon, or rate"
        )
    rng = rng_for(seed)
    n = int(rng.poisson(lam))
    _, ticks = _grid_exponent(box.horizon)
    j = _draw_distinct_ticks(rng, ticks, n)
    sites = rng.integers(-box.radius, box.radius + 1,
                         size=(n, box.dimension), dtype=np.int64)
    order = np.argsort(j, kind="stable")
    return EventSet(box, j[order], sites[order], rate=rate, seed=seed)


def insert_event(events: EventSet, p: SpaceTimePoint) -> EventSet:
    """New EventSet with p added; the input is unchanged.

    p.time is snapped to the dyadic grid (a shift of at most half a tick,
    about 1e-16 * T). Duplicate times and out-of-box points are errors.
    """
    if not events.box.contains_site(p.site):
        raise ValueError(f"site {p.site} outside box of radius {events.box.radius}")
    tick = events.snap_tick(p.time)
    if not (1 <= tick <= events.grid_ticks - 1):
        raise ValueError(f"time {p.time} outside the open horizon (0, {events.box.horizon})")
    pos = int(np.searchsorted(events._ticks, tick))
    if pos < len(events) and events._ticks[pos] == tick:
        raise ValueError(f"an event already exists at time {p.time}")
    new_ticks = np.insert(events._ticks, pos, tick)
    new_sites = np.insert(events._sites, pos, np.asarray(p.site, dtype=np.int64), axis=0)
    return EventSet(events.box, new_ticks, new_sites, rate=events.rate, seed=events.seed)


def delete_event(events: EventSet, p: SpaceTimePoint) -> EventSet:
    """New EventSet with the event at (p.time, p.site) removed."""
    tick = events.snap_tick(p.time)
    pos = int(np.searchsorted(events._ticks, tick))
    if pos >= len(events) or events._ticks[pos] != tick or not np.array_equal(
        events._sites[pos], np.asarray(p.site, dtype=np.int64)
    ):
        raise ValueError(f"no event at time {p.time}, site {p.site}")
    new_ticks = np.delete(events._ticks, pos)
    new_sites = np.delete(events._sites, pos, axis=0)
    return EventSet(events.box, new_ticks, new_sites, rate=events.rate, seed=events.seed)


def reverse(events: EventSet) -> EventSet:
    """Reflect every event time about the horizon midpoint: (t, x) -> (T - t, x).

    Exact on the tick grid, so reverse(reverse(s)) == s bit for bit.
    """
    new_ticks = (events.grid_ticks - events._ticks)[::-1].copy()
    new_sites = events._sites[::-1].copy()
    return EventSet(events.box, new_ticks, new_sites,
                    rate=events.rate, seed=events.seed)


def depth(events: EventSet, p: SpaceTimePoint, s: float = 0.0) -> int:
    """Maximum number of events, strictly before p.time, on any lattice path
    from p down to time s.

    A lattice path moves by at most one unit step and only at an event at
    its own current (later-time side) site; an event at the start point
    itself allows an immediate step. Points with time <= s have depth 0.

    Intended for verification-scale sets: runs a python sweep over all
    events in the window.
    """
    if p.time <= s:
        return 0
    if not events.box.contains_site(p.site):
        raise ValueError(f"site {p.site} outside box")
    t_tick = events.snap_tick(p.time)
    s_tick = events.snap_tick(s) if s > 0 else 0
    lo = int(np.searchsorted(events._ticks, s_tick, side="right"))
    hi = int(np.searchsorted(events._ticks, t_tick, side="left"))
    best = {}
    for i in range(lo, hi):
        y = tuple(int(c) for c in events._sites[i])
        reach = max(
            (best.get(z, 0) for z in events.box.lateral_neighbors(y)),
            default=0,
        )
        best[y] = 1 + max(best.get(y, 0), reach)
    x = tuple(int(c) for c in p.site)
    if events.has_event(p.time, x):
        return max(
            best.get(x, 0),
            max((best.get(z, 0) for z in events.box.lateral_neighbors(x)), default=0),
        )
    return best.get(x, 0)


# -- serialization -----------------------------------------------------


def write_jsonl(events: EventSet, path) -> None:
    """JSON Lines: a header object, then one {"t", "x"} object per event.

    Floats are emitted in shortest round-trip decimal form, so a write,
    read, write cycle is byte identical.
    """
    b = events.box
    header = {
        "d": b.dimension, "L": b.radius, "T": b.horizon,
        "rate": events.rate, "seed": events.seed, "boundary": b.boundary,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for i in range(len(events)):
            rec = {"t": float(events._times[i]),
                   "x": [int(c) for c in events._sites[i]]}
            fh.write(json.dumps(rec) + "\n")


def read_jsonl(path) -> EventSet:
    """Parse an event list written by write_jsonl, validating the grid.

    Times that do not sit on the dyadic grid of the header horizon (within
    half a tick) are rejected.
    """
    with open(path) as fh:
        header = json.loads(fh.readline())
        box = LatticeBox(header["d"], header["L"], header["T"],
                         boundary=header.get("boundary", "free"))
        exp, _ = _grid_exponent(box.horizon)
        ticks, sites = [], []
        for line in fh:
            rec = json.loads(line)
            t = float(rec["t"])
            tick = int(round(math.ldexp(t, -exp)))
            if math.ldexp(float(tick), exp) != t:
                raise ValueError(f"time {t!r} is not aligned to the dyadic grid")
            ticks.append(tick)
            sites.append(rec["x"])
    return EventSet(
        box,
        np.asarray(ticks, dtype=np.int64),
        np.asarray(sites, dtype=np.int64).reshape(len(ticks), box.dimension),
        rate=header.get("rate", 1.0),
        seed=header.get("seed"),
    )
