import itertools
import random

import numpy as np
import pytest

from confined_terrain.tiles import Side, TileKind, TileSpec, build_adjacency, flat_tile, ramp_tile
from confined_terrain.wfc import CollapsedGrid


def step_tile(tile_id, low, high, n=4, rotation=0):
    h = np.full((n, n), float(low))
    h[:, n // 2:] = high
    for _ in range(rotation // 90):
        h = h.T[::-1]
    return TileSpec(tile_id, TileKind.STEP, {"base": low, "rise": high - low}, h, 1.0, rotation)


def random_tiles(rng: random.Random, max_tiles: int, n: int = 4, levels=(0.0, 0.1, 0.2)):
    """A random mix of flats, ramps and steps on a few height levels."""
    pool = []
    for lv in levels:
        pool.append(lambda i, lv=lv: flat_tile(i, lv, n=n))
    for lo, hi in itertools.combinations(levels, 2):
        for rot in (0, 90, 180, 270):
            pool.append(lambda i, lo=lo, hi=hi, rot=rot: ramp_tile(i, lo, hi, n=n, rotation=rot))
            pool.append(lambda i, lo=lo, hi=hi, rot=rot: step_tile(i, lo, hi, n=n, rotation=rot))
    k = rng.randint(1, max_tiles)
    makers = rng.sample(pool, k)
    return [m(i) for i, m in enumerate(makers)]


def random_tileset(rng: random.Random, max_tiles: int = 8, n: int = 4, q: float = 0.05):
    return build_adjacency(random_tiles(rng, max_tiles, n=n), q)


def brute_force_solutions(tileset, rows, cols, boundary=None):
    """Every valid assignment, enumerated row by row."""
    ids = tileset.ids
    boundary = boundary or {}

    def allowed(r, c):
        b = boundary.get((r, c))
        if b is None:
            return ids
        return [b] if isinstance(b, int) else list(b)

    def row_options(r):
        out = []
        for row in itertools.product(*(allowed(r, c) for c in range(cols))):
            if all(tileset.compatible(row[c], Side.E, row[c + 1]) for c in range(cols - 1)):
                out.append(row)
        return out

    options = [row_options(r) for r in range(rows)]
    sols = []

    def dfs(r, acc):
        if r == rows:
            sols.append(tuple(x for row in acc for x in row))
            return
        for row in options[r]:
            if r and not all(tileset.compatible(acc[-1][c], Side.N, row[c]) for c in range(cols)):
                continue
            dfs(r + 1, acc + [row])

    dfs(0, [])
    return set(sols)


@pytest.fixture
def two_flats():
    return build_adjacency([flat_tile(0, 0.0), flat_tile(1, 0.3)], 0.05)


@pytest.fixture(scope="session")
def default_library():
    from confined_terrain.tiles import generate_tile_library
    return generate_tile_library()


def grid_of(rows, cols, ids):
    return CollapsedGrid(rows, cols, list(ids))
