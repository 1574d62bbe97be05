"""Event-set construction, perturbation, reversal, depth, serialization.

Core claims checked here:
  * generate is a pure function of (box, rate, seed) and draws the right law:
    Poisson count with mean site_count * T * rate, Exp(1) interarrivals per site.
  * insert_event / delete_event are value-semantic and round-trip exactly.
  * reverse is an exact involution on the dyadic time grid.
  * depth by sweep equals depth by exhaustive path enumeration, and is
    strictly monotone along adjacent earlier events.
  * JSONL serialization round-trips byte for byte.
"""

import math
import os

import numpy as np
import pytest
from scipy import stats as spstats

from rsoslab.lattice import (
    EventSet,
    LatticeBox,
    SpaceTimePoint,
    _draw_distinct_ticks,
    delete_event,
    depth,
    generate,
    insert_event,
    read_jsonl,
    reverse,
    rng_for,
    write_jsonl,
)


def _small_set(seed, d=1, L=3, T=1.5, rate=1.0):
    return generate(LatticeBox(d, L, T), rate, seed)


def _point(es, i):
    return es.point(i)


def _depth_by_enumeration(events, p, s):
    """Walk every lattice path from p down to s; return the max count of
    on-path events strictly before p.time."""
    best = 0
    t0 = p.time

    def go(site, upper, inclusive, count):
        nonlocal best
        times = events.events_at(site)
        # latest event at this site below (or at, for the start instant) upper
        cand = None
        for r in reversed(times):
            if r > s and (r < upper or (inclusive and r == upper)):
                cand = float(r)
                break
        if cand is None:
            best = max(best, count)
            return
        gained = count + (1 if cand < t0 else 0)
        for z in [site] + events.box.lateral_neighbors(site):
            go(z, cand, False, gained)

    go(tuple(p.site), t0, True, 0)
    return best


# == 1. Generation =====================================================


class TestGeneration:
    def test_deterministic_in_seed(self):
        a = _small_set(42)
        b = _small_set(42)
        c = _small_set(43)
        assert a == b
        assert a != c

    def test_times_distinct_sorted_in_window(self):
        es = _small_set(7, L=5, T=3.0)
        assert np.all(np.diff(es.times) > 0)
        assert es.times[0] > 0.0
        assert es.times[-1] < 3.0

    def test_mean_count_matches_poisson(self):
        # d=1, L=2, T=1: expected count per draw is 5
        box = LatticeBox(1, 2, 1.0)
        n_seeds = 10_000
        counts = np.array([len(generate(box, 1.0, s)) for s in range(n_seeds)])
        se = math.sqrt(5.0 / n_seeds)
        assert abs(counts.mean() - 5.0) < 3 * se

    def test_per_site_interarrivals_are_unit_exponential(self):
        # one long run, one site, 10^4 gaps, KS at alpha = 0.01
        box = LatticeBox(1, 2, 10_500.0)
        es = generate(box, 1.0, 2024)
        times = es.events_at((0,))
        gaps = np.diff(times)[:10_000]
        assert len(gaps) == 10_000
        res = spstats.kstest(gaps, "expon")
        assert res.pvalue > 0.01

    def test_rate_must_be_positive(self):
        with pytest.raises(ValueError, match="rate"):
            generate(LatticeBox(1, 2, 1.0), 0.0, 1)
        with pytest.raises(ValueError, match="rate"):
            generate(LatticeBox(1, 2, 1.0), -1.0, 1)

    def test_event_budget_is_enforced(self):
        huge = LatticeBox(1, 30_000_000, 1.0)
        with pytest.raises(ValueError, match="budget"):
            generate(huge, 1.0, 1)

    def test_distinct_tick_draws_under_forced_collisions(self):
        rng = rng_for(5)
        for _ in range(200):
            j = _draw_distinct_ticks(rng, 8, 5)
            assert len(set(j.tolist())) == 5
            assert j.min() >= 1 and j.max() <= 7

    def test_arrays_are_read_only(self):
        es = _small_set(1)
        with pytest.raises(ValueError):
            es.times[0] = 0.5
        with pytest.raises(ValueError):
            es.sites[0, 0] = 0


# == 2. Insertion and deletion =========================================


class TestPerturbation:
    def test_insert_into_empty(self):
        box = LatticeBox(1, 2, 1.0)
        empty = EventSet(box, [], np.empty((0, 1)))
        p = SpaceTimePoint(0.5, (1,))
        es = insert_event(empty, p)
        assert len(es) == 1
        assert es.times[0] == 0.5
        assert tuple(es.sites[0]) == (1,)
        assert len(empty) == 0

    def test_insert_then_delete_round_trip(self):
        es = _small_set(11)
        p = SpaceTimePoint(0.625, (2,))
        bigger = insert_event(es, p)
        assert len(bigger) == len(es) + 1
        back = delete_event(bigger, p)
        assert back == es

    def test_sorted_insert_preserves_per_site_order(self):
        es = _small_set(12, L=4, T=2.0)
        site = (0,)
        before = es.events_at(site)
        p = SpaceTimePoint(1.03125, site)
        es2 = insert_event(es, p)
        after = es2.events_at(site)
        assert len(after) == len(before) + 1
        assert np.all(np.diff(after) > 0)
        merged = np.sort(np.append(before, 1.03125))
        assert np.array_equal(after, merged)

    def test_duplicate_time_rejected(self):
        es = _small_set(13)
        assert len(es) > 0
        p = SpaceTimePoint(float(es.times[0]), (0,))
        with pytest.raises(ValueError, match="already exists"):
            insert_event(es, p)

    def test_out_of_box_rejected(self):
        es = _small_set(14, L=2)
        with pytest.raises(ValueError, match="outside box"):
            insert_event(es, SpaceTimePoint(0.5, (3,)))
        with pytest.raises(ValueError, match="horizon"):
            insert_event(es, SpaceTimePoint(2.5, (0,)))

    def test_delete_missing_rejected(self):
        es = _small_set(15)
        with pytest.raises(ValueError, match="no event"):
            delete_event(es, SpaceTimePoint(0.123456, (0,)))


# == 3. Time reversal ==================================================


class TestReversal:
    def test_involution_on_random_sets(self):
        for seed in range(50):
            es = _small_set(seed, L=4, T=2.75)
            assert reverse(reverse(es)) == es

    def test_empty_set(self):
        box = LatticeBox(2, 2, 1.0)
        empty = EventSet(box, [], np.empty((0, 2)))
        assert reverse(empty) == empty

    def test_reflection_example(self):
        # events at {0.2, 0.9}, T = 1 reflect to {0.8, 0.1} at the same sites
        box = LatticeBox(1, 2, 1.0)
        probe = EventSet(box, [], np.empty((0, 1)))
        es = insert_event(probe, SpaceTimePoint(0.2, (0,)))
        es = insert_event(es, SpaceTimePoint(0.9, (1,)))
        rv = reverse(es)
        # sorted ascending: 0.1 (from 0.9, site 1) then 0.8 (from 0.2, site 0);
        # reflected values sit within half a grid tick (2^-53 here) of exact
        assert rv.times[0] == pytest.approx(0.1, abs=1.2e-16)
        assert rv.times[1] == pytest.approx(0.8, abs=1.2e-16)
        assert tuple(rv.sites[0]) == (1,)
        assert tuple(rv.sites[1]) == (0,)
        # tick-level reflection is exact
        assert rv.ticks[0] == rv.grid_ticks - es.ticks[1]
        assert rv.ticks[1] == rv.grid_ticks - es.ticks[0]
        assert reverse(rv) == es

    def test_reversal_exact_for_generated_sets(self):
        es = _small_set(77, L=5, T=6.0)
        rv = reverse(es)
        assert np.array_equal(np.sort(rv.ticks + es.ticks[::-1]),
                              np.full(len(es), es.grid_ticks))


# == 4. Lattice depth ==================================================


class TestDepth:
    def test_zero_when_time_at_or_below_cutoff(self):
        es = _small_set(20)
        assert depth(es, SpaceTimePoint(0.0, (0,)), 0.0) == 0
        assert depth(es, SpaceTimePoint(0.5, (0,)), 0.5) == 0
        assert depth(es, SpaceTimePoint(0.5, (0,)), 0.7) == 0

    def test_empty_set_gives_zero(self):
        box = LatticeBox(1, 3, 1.0)
        empty = EventSet(box, [], np.empty((0, 1)))
        assert depth(empty, SpaceTimePoint(0.9, (0,)), 0.0) == 0

    def test_hand_built_chain(self):
        # events (0.3, 0), (0.6, 1), (0.9, 0); from (0.9, 0) the best path
        # steps to site 1 at the start event, meets (0.6, 1), steps back,
        # meets (0.3, 0)
        box = LatticeBox(1, 2, 1.0)
        probe = EventSet(box, [], np.empty((0, 1)))
        for t, x in [(0.3, 0), (0.6, 1), (0.9, 0)]:
            probe = insert_event(probe, SpaceTimePoint(t, (x,)))
        assert depth(probe, SpaceTimePoint(0.9, (0,)), 0.0) == 2
        assert depth(probe, SpaceTimePoint(0.9, (0,)), 0.5) == 1
        assert depth(probe, SpaceTimePoint(0.6, (1,)), 0.0) == 1
        assert depth(probe, SpaceTimePoint(0.3, (0,)), 0.0) == 0

    def test_sweep_matches_enumeration_on_small_sets(self):
        checked = 0
        for seed in range(40):
            es = _small_set(seed, L=2, T=1.2)
            if len(es) > 12:
                continue
            for i in range(len(es)):
                p = _point(es, i)
                assert depth(es, p, 0.0) == _depth_by_enumeration(es, p, 0.0)
            # an off-event probe point from the top of the window
            probe = SpaceTimePoint(1.2 - 1e-3, (0,))
            assert depth(es, probe, 0.0) == _depth_by_enumeration(es, probe, 0.0)
            checked += 1
        assert checked >= 20

    def test_depth_monotone_along_adjacent_earlier_events(self):
        # for events u = (t, x) and u' = (t', x +- e) with t' < t,
        # depth(u') < depth(u)
        pairs = 0
        for seed in range(30):
            es = _small_set(seed, L=2, T=1.2)
            if len(es) > 14:
                continue
            pts = [_point(es, i) for i in range(len(es))]
            for a in pts:
                for b in pts:
                    if b.time >= a.time:
                        continue
                    dist = sum(abs(u - v) for u, v in zip(a.site, b.site))
                    if dist != 1:
                        continue
                    assert depth(es, b, 0.0) < depth(es, a, 0.0)
                    pairs += 1
        assert pairs >= 30


# == 5. Serialization ==================================================


class TestSerialization:
    def test_round_trip_is_byte_exact(self, tmp_path):
        es = _small_set(31, L=4, T=2.5)
        f1 = tmp_path / "a.jsonl"
        f2 = tmp_path / "b.jsonl"
        write_jsonl(es, f1)
        back = read_jsonl(f1)
        assert back == es
        write_jsonl(back, f2)
        assert f1.read_bytes() == f2.read_bytes()

    def test_round_trip_after_insert(self, tmp_path):
        es = _small_set(32)
        es = insert_event(es, SpaceTimePoint(0.4375, (1,)))
        f = tmp_path / "c.jsonl"
        write_jsonl(es, f)
        assert read_jsonl(f) == es

    def test_header_carries_box_metadata(self, tmp_path):
        es = generate(LatticeBox(2, 3, 1.5, boundary="periodic"), 2.0, 9)
        f = tmp_path / "d.jsonl"
        write_jsonl(es, f)
        back = read_jsonl(f)
        assert back.box == es.box
        assert back.rate == 2.0
        assert back.seed == 9

    def test_misaligned_time_rejected(self, tmp_path):
        es = _small_set(33)
        f = tmp_path / "e.jsonl"
        write_jsonl(es, f)
        lines = f.read_text().splitlines()
        lines.append('{"t": 0.1000000000000002, "x": [0]}')
        f.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="grid"):
            read_jsonl(f)
