"""Event-driven surface evolution with a complete accepted-update ledger.

Three local rules share one kernel. Writing h for the height at the
ringing site and n for its in-box lateral neighbors:

  rsos      h <- min(h + 1, 1 + min_n h(n))
  krsos(k)  h <- min(h + 1, k + min_n h(n))
  bd        h <- max(h + 1, 1 + max_n h(n))

For rsos/krsos the min form is exactly the accept-or-reject rule: the
ring is accepted (height goes up by one) unless a neighbor sits low
enough that the step bound would break.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .lattice import EventSet, LatticeBox, SpaceTimePoint

MODELS = ("rsos", "krsos", "bd")


@lru_cache(maxsize=128)
def neighbor_table(box: LatticeBox) -> np.ndarray:
    table = box.neighbor_table()
    table.setflags(write=False)
    return table


@dataclass(frozen=True)
class InitialCondition:
    """Starting surface: flat zero, the well |x|_1, or explicit heights.

    Explicit values are a site -> height map; unlisted sites default to 0.
    """

    kind: str
    values: tuple = ()

    @staticmethod
    def zero() -> "InitialCondition":
        return InitialCondition("zero")

    @staticmethod
    def well() -> "InitialCondition":
        return InitialCondition("well")

    @staticmethod
    def explicit(values: dict) -> "InitialCondition":
        frozen = tuple(sorted(
            (tuple(int(c) for c in site), int(h)) for site, h in values.items()
        ))
        return InitialCondition("explicit", frozen)

    def __post_init__(self):
        if self.kind not in ("zero", "well", "explicit"):
            raise ValueError(f"unknown initial condition kind {self.kind!r}")

    def build(self, box: LatticeBox) -> np.ndarray:
        """Flat int64 height array over the box."""
        n, d, w, L = box.site_count, box.dimension, box.width, box.radius
        if self.kind == "zero":
            return np.zeros(n, dtype=np.int64)
        if self.kind == "well":
            idx = np.arange(n, dtype=np.int64)
            h = np.zeros(n, dtype=np.int64)
            for axis in range(d):
                stride = w ** (d - 1 - axis)
                h += np.abs((idx // stride) % w - L)
            return h
        h = np.zeros(n, dtype=np.int64)
        for site, value in self.values:
            if not box.contains_site(site):
                raise ValueError(f"explicit init site {site} outside box")
            h[int(box.flat_index(np.asarray([site]))[0])] = value
        return h

    def value_at(self, site) -> int:
        if self.kind == "zero":
            return 0
        if self.kind == "well":
            return int(sum(abs(int(c)) for c in site))
        site = tuple(int(c) for c in site)
        for s, v in self.values:
            if s == site:
                return v
        return 0


def check_admissible(heights: np.ndarray, box: LatticeBox, bound: int) -> None:
    """Raise if any in-box neighbor pair differs by more than `bound`."""
    nbr = neighbor_table(box)
    for col in range(0, nbr.shape[1], 2):  # +e_i direction covers each pair once
        mask = nbr[:, col] >= 0
        here = np.nonzero(mask)[0]
        there = nbr[mask, col]
        diffs = np.abs(heights[there] - heights[here])
        bad = np.argmax(diffs)
        if len(diffs) > 0 and diffs[bad] > bound:
            a = box.unflatten(int(here[bad]))
            b = box.unflatten(int(there[bad]))
            raise ValueError(
                f"initial condition violates the step bound {bound} at neighbor "
                f"pair {a}, {b}: heights {int(heights[here[bad]])}, "
                f"{int(heights[there[bad]])}"
            )


@dataclass
class HeightField:
    """Surface heights over a box at a fixed clock time.

    `heights` is flat row-major; `snapshots` maps requested earlier times
    to flat height arrays.
    """

    box: LatticeBox
    heights: np.ndarray
    clock: float
    snapshots: dict = None

    def height_at(self, site) -> int:
        if not self.box.contains_site(site):
            raise ValueError(f"site {site} outside box")
        return int(self.heights[int(self.box.flat_index(np.asarray([site]))[0])])

    def to_array(self) -> np.ndarray:
        return self.heights.reshape((self.box.width,) * self.box.dimension)


@dataclass(frozen=True)
class AcceptedUpdate:
    """One height increment: the ring that caused it and the height reached."""

    point: SpaceTimePoint
    new_height: int


class AcceptedLog:
    """Accepted updates of one evolution, in time order."""

    def __init__(self, times: np.ndarray, sites: np.ndarray, heights: np.ndarray,
                 box: LatticeBox):
        self.box = box
        self.times = np.asarray(times, dtype=np.float64)
        self.sites = np.asarray(sites, dtype=np.int64).reshape(len(self.times),
                                                               box.dimension)
        self.heights = np.asarray(heights, dtype=np.int64)
        self._by_site = None

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self):
        for i in range(len(self)):
            yield self.entry(i)

    def entry(self, i: int) -> AcceptedUpdate:
        return AcceptedUpdate(
            SpaceTimePoint(float(self.times[i]),
                           tuple(int(c) for c in self.sites[i])),
            int(self.heights[i]),
        )

    def _site_map(self) -> dict:
        if self._by_site is None:
            by = {}
            for i in range(len(self)):
                by.setdefault(tuple(int(c) for c in self.sites[i]), []).append(i)
            self._by_site = {s: np.asarray(ix) for s, ix in by.items()}
        return self._by_site

    def times_at(self, site) -> np.ndarray:
        """Accepted times at one site, ascending."""
        ix = self._site_map().get(tuple(int(c) for c in site))
        return self.times[ix] if ix is not None else np.empty(0)

    def heights_at(self, site) -> np.ndarray:
        ix = self._site_map().get(tuple(int(c) for c in site))
        return self.heights[ix] if ix is not None else np.empty(0, dtype=np.int64)

    def index_of(self, u: AcceptedUpdate):
        """Position of an update in the log, or None."""
        site = tuple(int(c) for c in u.point.site)
        ix = self._site_map().get(site)
        if ix is None:
            return None
        pos = np.searchsorted(self.times[ix], u.point.time)
        for p in (pos - 1, pos, pos + 1):
            if 0 <= p < len(ix) and self.times[ix[p]] == u.point.time \
                    and self.heights[ix[p]] == u.new_height:
                return int(ix[p])
        return None


def _parse_model(model: str, k: int) -> tuple[int, bool, int]:
    """Return (lateral_cost, use_max, step_bound); step_bound 0 means none."""
    if model == "rsos":
        return 1, False, 1
    if model == "krsos":
        if k < 1:
            raise ValueError(f"krsos requires k >= 1, got {k}")
        return int(k), False, int(k)
    if model == "bd":
        return 1, True, 0
    raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")


def evolve(events: EventSet, init: InitialCondition, model: str = "rsos",
           until: float = None, k: int = 1,
           snapshot_times=()) -> tuple[HeightField, AcceptedLog]:
    """Run the growth dynamics through all events up to `until`.

    Returns the final HeightField and the AcceptedLog of every height
    increment. Extra height arrays at `snapshot_times` are attached to
    the field's `snapshots` dict.
    """
    box = events.box
    if until is None:
        until = box.horizon
    if until > box.horizon:
        raise ValueError(f"until={until} exceeds the horizon {box.horizon}")
    lateral_cost, use_max, bound = _parse_model(model, k)
    heights = init.build(box)
    if bound:
        check_admissible(heights, box, bound)
    nbr = neighbor_table(box)
    flat = events.flat_sites()
    hi = int(np.searchsorted(events.times, until, side="right"))

    snaps = {}
    cuts = sorted(float(t) for t in snapshot_times)
    for t in cuts:
        if t > until:
            raise ValueError(f"snapshot time {t} beyond until={until}")
    acc_idx_parts, acc_h_parts = [], []
    lo = 0
    for t in cuts + [None]:
        seg_hi = hi if t is None else int(np.searchsorted(events.times, t,
                                                          side="right"))
        seg_hi = min(seg_hi, hi)
        if seg_hi > lo:
            a_idx, a_h = _kernels.evolve_scan(flat[lo:seg_hi], nbr, heights,
                                              np.int64(lateral_cost), use_max)
            acc_idx_parts.append(a_idx + lo)
            acc_h_parts.append(a_h)
            lo = seg_hi
        if t is not None:
            snaps[t] = heights.copy()

    if acc_idx_parts:
        acc_idx = np.concatenate(acc_idx_parts)
        acc_h = np.concatenate(acc_h_parts)
    else:
        acc_idx = np.empty(0, dtype=np.int64)
        acc_h = np.empty(0, dtype=np.int64)
    log = AcceptedLog(events.times[acc_idx], events.sites[acc_idx], acc_h, box)
    field = HeightField(box, heights, float(until), snaps)
    return field, log


def foundation(log: AcceptedLog, u: AcceptedUpdate) -> set:
    """Accepted updates one level below u at u's site or a lateral neighbor.

    Empty for height-1 updates over a flat-zero start.
    """
    if log.index_of(u) is None:
        raise ValueError(f"update {u} is not in the log")
    target = u.new_height - 1
    out = set()
    sites = [tuple(int(c) for c in u.point.site)]
    sites += log.box.lateral_neighbors(sites[0])
    for s in sites:
        ix = log._site_map().get(s)
        if ix is None:
            continue
        for i in ix:
            if log.heights[i] == target:
                out.add(log.entry(int(i)))
    return out


# -- serialization -----------------------------------------------------


def write_log_jsonl(log: AcceptedLog, path) -> None:
    """JSON Lines, one {"t", "x", "h"} object per accepted update."""
    with open(path, "w") as fh:
        for i in range(len(log)):
            fh.write(json.dumps({
                "t": float(log.times[i]),
                "x": [int(c) for c in log.sites[i]],
                "h": int(log.heights[i]),
            }) + "\n")


def read_log_jsonl(path, box: LatticeBox) -> AcceptedLog:
    times, sites, heights = [], [], []
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            times.append(rec["t"])
            sites.append(rec["x"])
            heights.append(rec["h"])
    return AcceptedLog(
        np.asarray(times), np.asarray(sites, dtype=np.int64).reshape(len(times),
                                                                     box.dimension),
        np.asarray(heights), box,
    )


def write_heights_csv(field: HeightField, path) -> None:
    """d=1: site,height rows. d=2: row-major matrix, coordinates in the header."""
    box = field.box
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if box.dimension == 1:
            w.writerow(["site", "height"])
            for i, h in enumerate(field.heights):
                w.writerow([box.unflatten(i)[0], int(h)])
        elif box.dimension == 2:
            coords = list(range(-box.radius, box.radius + 1))
            w.writerow(["x1\\x2"] + coords)
            mat = field.to_array()
            for r, x1 in enumerate(coords):
                w.writerow([x1] + [int(v) for v in mat[r]])
        else:
            raise ValueError("height CSV export supports d = 1 or 2 only")
