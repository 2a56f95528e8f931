import itertools
import json
import math
import random

import pytest

from confined_terrain.errors import ConfigError, GenerationFailed
from confined_terrain.tiles import Side, build_adjacency, flat_tile, ramp_tile
from confined_terrain.wfc import (
    CollapsedGrid, Contradiction, NothingToObserve, WaveGrid, collapse, observe, propagate, violations,
)

from conftest import brute_force_solutions, random_tileset


class TestCollapse:
    def test_single_tile(self):
        ts = build_adjacency([flat_tile(7, 0.0)], 0.05)
        g = collapse(ts, 5, 3, seed=1)
        assert g.assignment == [7] * 15

    def test_two_flats_uniform(self, two_flats):
        sols = brute_force_solutions(two_flats, 3, 3)
        assert sols == {(0,) * 9, (1,) * 9}
        seen = set()
        for seed in range(20):
            g = collapse(two_flats, 3, 3, seed=seed)
            assert tuple(g.assignment) in sols
            seen.add(g.assignment[0])
        assert seen == {0, 1}

    def test_pinned_corner_propagates(self, two_flats):
        g = collapse(two_flats, 4, 4, seed=3, boundary={(0, 0): 0})
        assert g.assignment == [0] * 16 and g.restart_count == 0

    def test_boundary_sets(self):
        ts = build_adjacency([flat_tile(0, 0.0), ramp_tile(1, 0.0, 0.3), flat_tile(2, 0.3)], 0.05)
        g = collapse(ts, 1, 3, seed=0, boundary={(0, 0): 0, (0, 2): [2]})
        assert g.assignment == [0, 1, 2]

    def test_unsatisfiable_boundary(self, two_flats):
        with pytest.raises(GenerationFailed) as err:
            collapse(two_flats, 1, 2, boundary={(0, 0): 0, (0, 1): 1})
        assert err.value.restart_count == 0

    def test_bad_boundary(self, two_flats):
        with pytest.raises(ConfigError):
            collapse(two_flats, 2, 2, boundary={(5, 5): 0})
        with pytest.raises(ConfigError):
            collapse(two_flats, 2, 2, boundary={(0, 0): 42})

    def test_deterministic(self, default_library):
        a = collapse(default_library, 6, 6, seed=11)
        b = collapse(default_library, 6, 6, seed=11)
        assert a.assignment == b.assignment

    def test_default_library_is_sound(self, default_library):
        for seed in range(3):
            g = collapse(default_library, 8, 8, seed=seed)
            assert violations(g, default_library) == []

    def test_json_round_trip(self, two_flats):
        g = collapse(two_flats, 2, 3, seed=0)
        assert CollapsedGrid.from_dict(json.loads(g.to_json())) == g

    def test_oracle_membership_small(self):
        rng = random.Random(5)
        for _ in range(25):
            ts = random_tileset(rng, 5)
            rows, cols = rng.randint(1, 3), rng.randint(1, 3)
            sols = brute_force_solutions(ts, rows, cols)
            seed = rng.randrange(1 << 32)
            if not sols:
                with pytest.raises(GenerationFailed):
                    collapse(ts, rows, cols, seed=seed)
            else:
                assert tuple(collapse(ts, rows, cols, seed=seed).assignment) in sols


class TestPropagate:
    def test_single_tile_no_change(self):
        ts = build_adjacency([flat_tile(0, 0.0)], 0.05)
        g = WaveGrid(ts, 3, 3)
        g.restrict((1, 1), [0])
        assert propagate(g, ts, (1, 1)) == set()

    def test_neighbor_reduces(self, two_flats):
        g = WaveGrid(two_flats, 1, 2)
        g.restrict((0, 0), [0])
        changed = propagate(g, two_flats, (0, 0))
        assert changed == {(0, 1)}
        assert g.candidates((0, 1)) == {0}

    def test_contradiction(self, two_flats):
        g = WaveGrid(two_flats, 1, 2)
        g.restrict((0, 0), [0])
        g.restrict((0, 1), [1])
        with pytest.raises(Contradiction):
            propagate(g, two_flats, (0, 0))

    def test_out_of_bounds_cell(self, two_flats):
        with pytest.raises(ConfigError):
            propagate(WaveGrid(two_flats, 2, 2), two_flats, (2, 0))

    def test_fixpoint_independent_of_visit_order(self):
        rng = random.Random(9)
        for _ in range(30):
            ts = random_tileset(rng, 8)
            base = WaveGrid(ts, 3, 4)
            pins = {}
            for _ in range(2):
                cell = (rng.randrange(3), rng.randrange(4))
                pins[cell] = rng.choice(ts.ids)
            results = []
            for order in itertools.permutations(Side):
                g = base.copy(0)
                try:
                    for cell, tid in pins.items():
                        g.restrict(cell, [tid])
                        propagate(g, ts, cell, side_order=order)
                    results.append(tuple(g.cells))
                except Contradiction:
                    results.append(None)
            assert len(set(results)) == 1

    def test_monotone(self):
        ts = build_adjacency([flat_tile(0, 0.0), ramp_tile(1, 0.0, 0.1), flat_tile(2, 0.1), flat_tile(3, 0.2)], 0.05)
        g = WaveGrid(ts, 4, 4)
        before = list(g.cells)
        g.restrict((2, 2), [1])
        changed = propagate(g, ts, (2, 2))
        assert changed
        assert all(a & b == b for a, b in zip(before, g.cells))


class TestObserve:
    def test_only_open_cell(self, two_flats):
        g = WaveGrid(two_flats, 2, 2)
        for cell in [(0, 0), (0, 1), (1, 0)]:
            g.restrict(cell, [0])
        cell, tid = observe(g, two_flats)
        assert cell == (1, 1) and tid in (0, 1)

    def test_lower_entropy_wins(self):
        ts = build_adjacency([flat_tile(i, 0.1 * i) for i in range(3)], 0.05)
        g = WaveGrid(ts, 1, 2)
        g.restrict((0, 1), [0, 1])
        assert observe(g, ts)[0] == (0, 1)

    def test_ties_lowest_index(self):
        ts = build_adjacency([flat_tile(i, 0.1 * i) for i in range(3)], 0.05)
        g = WaveGrid(ts, 2, 2)
        assert observe(g, ts)[0] == (0, 0)

    def test_nothing_to_observe(self):
        ts = build_adjacency([flat_tile(0, 0.0)], 0.05)
        g = WaveGrid(ts, 1, 1)
        with pytest.raises(NothingToObserve):
            observe(g, ts)

    def test_weighted_frequency(self):
        ts = build_adjacency([flat_tile(0, 0.0, weight=3.0), flat_tile(1, 0.3, weight=1.0)], 0.05)
        n = 10_000
        g = WaveGrid(ts, 1, 1, seed=2024)
        hits = sum(observe(g, ts)[1] == 0 for _ in range(n))
        sigma = math.sqrt(n * 0.75 * 0.25)
        assert abs(hits - 0.75 * n) <= 3 * sigma

    def test_entropy_of_weighted_cell(self):
        ts = build_adjacency([flat_tile(0, 0.0, weight=3.0), flat_tile(1, 0.3, weight=1.0)], 0.05)
        g = WaveGrid(ts, 1, 1)
        p = (0.75, 0.25)
        assert g.entropy((0, 0)) == pytest.approx(-sum(x * math.log(x) for x in p), abs=1e-12)
