"""Path-weight optimization against the dynamics and brute force.

Core claims checked here:
  * enumerate_paths yields exactly the valid backwards paths, each once
    (frozen small counts: 3 for one event at the start site in d=1).
  * the forward DP value = the evolved height = the enumeration optimum,
    for rsos, bd (max form), and krsos weights, on many seeded lattices.
  * argmin_path returns a valid, optimal, deterministically tie-broken
    path.
  * inserting a ring changes a height by 0 or 1, and only rings on the
    minimizing path can matter.
  * the restart identity: optimizing to an intermediate time s against
    the evolved surface at s reproduces the full value.
"""

import numpy as np
import pytest

from rsoslab.lattice import (
    EventSet,
    LatticeBox,
    SpaceTimePoint,
    generate,
    insert_event,
    rng_for,
)
from rsoslab.minpath import (
    PathTrace,
    argmin_path,
    enumerate_paths,
    exactness_certificate,
    min_weight,
    move_order,
    path_from_json,
    path_is_valid,
    path_to_json,
    perturb_height,
)
from rsoslab.surface import InitialCondition, evolve

ZERO = InitialCondition.zero()
WELL = InitialCondition.well()


def _empty(box):
    return EventSet(box, [], np.empty((0, box.dimension)))


def _with_events(box, pts):
    es = _empty(box)
    for t, site in pts:
        es = insert_event(es, SpaceTimePoint(t, site))
    return es


def _small_sets(n_seeds, d=1, L=3, T=1.5, max_events=14):
    for seed in range(n_seeds):
        es = generate(LatticeBox(d, L, T), 1.0, seed)
        if len(es) <= max_events:
            yield seed, es


# == 1. Enumeration ===================================================


class TestEnumeration:
    def test_no_events_single_stay_put_path(self):
        box = LatticeBox(1, 2, 1.0)
        paths = list(enumerate_paths(_empty(box), 1.0, (0,)))
        assert len(paths) == 1
        assert paths[0].weight == 0
        assert paths[0].end_site == (0,)

    def test_one_event_at_start_site_gives_three_paths_d1(self):
        box = LatticeBox(1, 2, 1.0)
        es = _with_events(box, [(0.5, (0,))])
        paths = list(enumerate_paths(es, 1.0, (0,)))
        assert len(paths) == 3
        assert sorted(p.end_site for p in paths) == [(-1,), (0,), (1,)]
        assert all(p.weight == 1 for p in paths)

    def test_one_event_at_start_site_gives_five_paths_d2(self):
        box = LatticeBox(2, 2, 1.0)
        es = _with_events(box, [(0.5, (0, 0))])
        paths = list(enumerate_paths(es, 1.0, (0, 0)))
        assert len(paths) == 5

    def test_two_stacked_events_give_five_paths(self):
        # branch at (0.6, 0); only the stay branch reaches (0.3, 0)
        box = LatticeBox(1, 2, 1.0)
        es = _with_events(box, [(0.3, (0,)), (0.6, (0,))])
        paths = list(enumerate_paths(es, 1.0, (0,)))
        assert len(paths) == 5
        assert sorted(p.weight for p in paths) == [1, 1, 2, 2, 2]

    def test_neighbor_event_reached_by_sidestep(self):
        box = LatticeBox(1, 2, 1.0)
        es = _with_events(box, [(0.3, (1,)), (0.6, (0,))])
        paths = list(enumerate_paths(es, 1.0, (0,)))
        assert len(paths) == 5

    def test_paths_are_valid_and_distinct(self):
        for seed, es in _small_sets(30, T=1.2):
            paths = list(enumerate_paths(es, 1.2, (0,)))
            seen = set()
            for p in paths:
                assert path_is_valid(es, p)
                key = tuple((ev.time, ev.site, m) for ev, m in p.steps)
                assert key not in seen
                seen.add(key)

    def test_cap_refusal(self):
        es = generate(LatticeBox(1, 3, 10.0), 1.0, 0)
        assert len(es) > 14
        with pytest.raises(ValueError, match="cap"):
            enumerate_paths(es, 10.0, (0,))
        # a tighter window can still be enumerated
        sub = [t for t in es.times if t <= 0.5]
        if len(sub) <= 14:
            list(enumerate_paths(es, 0.5, (0,)))

    def test_corrupted_paths_are_rejected(self):
        box = LatticeBox(1, 2, 1.0)
        es = _with_events(box, [(0.3, (0,)), (0.6, (0,))])
        good = next(p for p in enumerate_paths(es, 1.0, (0,)) if p.weight == 2)
        assert path_is_valid(es, good)
        # dropping the later event means the path dodged it
        skipped = PathTrace(good.start, good.end_time, good.steps[1:])
        assert not path_is_valid(es, skipped)
        # pointing a step at a site with no event there
        ev, m = good.steps[0]
        moved = PathTrace(good.start, good.end_time,
                          ((SpaceTimePoint(ev.time, (1,)), m),) + good.steps[1:])
        assert not path_is_valid(es, moved)


# == 2. Value agreement ===============================================


class TestValueAgreement:
    def test_no_events_trivials(self):
        box = LatticeBox(1, 3, 1.0)
        assert min_weight(_empty(box), 1.0, (0,), ZERO) == 0
        assert min_weight(_empty(box), 1.0, (2,), WELL) == 2
        assert min_weight(_empty(box), 1.0, (-3,), WELL) == 3

    def test_rsos_dp_equals_enum_equals_evolve(self):
        checked = 0
        for seed, es in _small_sets(40):
            for init in (ZERO, WELL):
                f, _ = evolve(es, init, until=1.5)
                for xf in range(-3, 4):
                    x = (xf,)
                    best = min(p.weight + init.value_at(p.end_site)
                               for p in enumerate_paths(es, 1.5, x))
                    assert min_weight(es, 1.5, x, init) == best
                    assert f.height_at(x) == best
                    checked += 1
        assert checked >= 100

    def test_bd_is_the_max_form(self):
        for seed, es in _small_sets(25, T=1.2):
            f, _ = evolve(es, ZERO, model="bd", until=1.2)
            for xf in (-1, 0, 2):
                x = (xf,)
                best = max(p.weight for p in enumerate_paths(es, 1.2, x))
                assert f.height_at(x) == best
                assert min_weight(es, 1.2, x, ZERO, model="bd") == best

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_krsos_uses_lateral_weight_k(self, k):
        for seed, es in _small_sets(25, T=1.2):
            for init in (ZERO, WELL):
                f, _ = evolve(es, init, model="krsos", k=k, until=1.2)
                for xf in (-2, 0, 1):
                    x = (xf,)
                    best = min(p.weight_k(k) + init.value_at(p.end_site)
                               for p in enumerate_paths(es, 1.2, x))
                    assert f.height_at(x) == best

    def test_d2_agreement(self):
        checked = 0
        for seed in range(30):
            es = generate(LatticeBox(2, 2, 0.4), 1.0, seed)
            if len(es) > 10:
                continue
            for x in [(0, 0), (1, -1)]:
                best = min(p.weight + ZERO.value_at(p.end_site)
                           for p in enumerate_paths(es, 0.4, x))
                assert min_weight(es, 0.4, x, ZERO) == best
                checked += 1
        assert checked >= 20

    def test_validation_errors(self):
        box = LatticeBox(1, 2, 1.0)
        es = _empty(box)
        with pytest.raises(ValueError, match="outside box"):
            min_weight(es, 1.0, (5,), ZERO)
        with pytest.raises(ValueError, match="0 <= s <= t"):
            min_weight(es, 0.5, (0,), ZERO, s=0.7)


# == 3. Minimizing path extraction ====================================


class TestArgminPath:
    def test_no_events_stay_put(self):
        box = LatticeBox(1, 2, 1.0)
        tr = argmin_path(_empty(box), 1.0, (1,), WELL)
        assert tr.weight == 0
        assert tr.end_site == (1,)
        assert tr.steps == ()

    def test_valid_and_optimal_on_small_sets(self):
        for seed, es in _small_sets(30):
            for init in (ZERO, WELL):
                tr = argmin_path(es, 1.5, (0,), init)
                assert path_is_valid(es, tr)
                assert tr.weight + init.value_at(tr.end_site) == \
                    min_weight(es, 1.5, (0,), init)

    def test_deterministic(self):
        es = generate(LatticeBox(1, 3, 1.5), 1.0, 12)
        a = argmin_path(es, 1.5, (0,), ZERO)
        b = argmin_path(es, 1.5, (0,), ZERO)
        assert a == b

    def test_tie_breaks_prefer_stay(self):
        # flat zero start, one ring: staying and stepping tie; stay wins
        box = LatticeBox(1, 2, 1.0)
        es = _with_events(box, [(0.5, (0,))])
        tr = argmin_path(es, 1.0, (0,), ZERO)
        assert tr.steps == ((SpaceTimePoint(0.5, (0,)), (0,)),)

    def test_rejected_ring_steps_toward_the_low_side(self):
        # well start: the ring at site 1 is rejected; the only consistent
        # move goes toward the origin (+e1 precedes -e1 in the order)
        box = LatticeBox(1, 2, 1.0)
        es = _with_events(box, [(0.5, (1,))])
        tr = argmin_path(es, 1.0, (1,), WELL)
        assert tr.steps == ((SpaceTimePoint(0.5, (1,)), (1,)),)
        assert tr.end_site == (0,)
        assert tr.weight + WELL.value_at((0,)) == 1


# == 4. Perturbation ===================================================


class TestPerturbation:
    def test_result_is_zero_or_one(self):
        hits = 0
        for seed in range(40):
            d = 2 if seed % 3 == 0 else 1
            box = LatticeBox(d, 3, 1.5) if d == 1 else LatticeBox(d, 2, 0.8)
            es = generate(box, 1.0, seed)
            rng = rng_for(7000 + seed)
            site = tuple(int(c) for c in
                         rng.integers(-box.radius, box.radius + 1, size=d))
            p = SpaceTimePoint(float(rng.uniform(0, box.horizon)), site)
            try:
                delta = perturb_height(es, p, box.horizon, (0,) * d, ZERO)
            except ValueError:
                continue
            assert delta in (0, 1)
            hits += delta
        assert hits >= 1  # insertions do sometimes matter

    def test_ring_after_query_time_is_irrelevant(self):
        for seed, es in _small_sets(10, T=2.0, max_events=30):
            p = SpaceTimePoint(1.75, (0,))
            try:
                assert perturb_height(es, p, 1.5, (0,), ZERO) == 0
            except ValueError:
                continue

    def test_ring_off_the_minimizing_path_is_irrelevant(self):
        checked = 0
        for seed, es in _small_sets(40, T=1.5, max_events=30):
            tr = argmin_path(es, 1.5, (0,), ZERO)
            occupied = {tuple(ev.site) for ev, _ in tr.steps}
            occupied.add(tr.end_site)
            occupied.add((0,))
            target = next((s for s in [(-3,), (3,), (-2,), (2,)]
                           if s not in occupied), None)
            if target is None:
                continue
            p = SpaceTimePoint(0.77 + seed * 1e-3, target)
            try:
                assert perturb_height(es, p, 1.5, (0,), ZERO) == 0
            except ValueError:
                continue
            checked += 1
        assert checked >= 10


# == 5. Restart identity ==============================================


class TestRestart:
    def test_split_at_intermediate_time(self):
        s = 0.7
        for seed, es in _small_sets(30):
            f_s, _ = evolve(es, ZERO, until=s)
            legs = list(enumerate_paths(es, 1.5, (0,), s))
            split = min(leg.weight + f_s.height_at(leg.end_site) for leg in legs)
            assert split == min_weight(es, 1.5, (0,), ZERO)

    def test_min_weight_accepts_restart_argument(self):
        for seed, es in _small_sets(5):
            full = min_weight(es, 1.5, (0,), ZERO)
            assert min_weight(es, 1.5, (0,), ZERO, s=0.7) == full


# == 6. Certificates and serialization ================================


class TestCertificates:
    def test_small_value_on_wide_box_is_certified(self):
        es = generate(LatticeBox(1, 6, 1.0), 1.0, 3)
        cert = exactness_certificate(es, 1.0, (0,), ZERO)
        assert cert["sharp"]
        assert cert["value"] <= cert["margin"]

    def test_sharp_can_hold_where_conservative_fails(self):
        found = False
        for seed in range(60):
            es = generate(LatticeBox(1, 2, 3.0), 1.0, seed)
            cert = exactness_certificate(es, 3.0, (0,), ZERO)
            if cert["sharp"] and not cert["conservative"]:
                found = True
                break
        assert found

    def test_negative_start_voids_both(self):
        box = LatticeBox(1, 2, 1.0)
        init = InitialCondition.explicit({(0,): -1})
        cert = exactness_certificate(_empty(box), 1.0, (0,), init)
        assert not cert["sharp"]
        assert not cert["conservative"]


class TestSerialization:
    def test_json_round_trip(self):
        es = generate(LatticeBox(1, 3, 1.5), 1.0, 17)
        tr = argmin_path(es, 1.5, (0,), ZERO)
        back = path_from_json(path_to_json(tr))
        assert back == tr

    def test_weight_mismatch_rejected(self):
        es = generate(LatticeBox(1, 3, 1.5), 1.0, 17)
        tr = argmin_path(es, 1.5, (0,), ZERO)
        obj = path_to_json(tr)
        obj["weight"] += 1
        with pytest.raises(ValueError, match="weight"):
            path_from_json(obj)

    def test_move_order_is_stay_then_signed_axes(self):
        assert move_order(1) == ((0,), (1,), (-1,))
        assert move_order(2) == ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1))
