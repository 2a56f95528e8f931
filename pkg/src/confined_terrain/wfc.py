"""Simple-tiled wave function collapse over a :class:`TileSet`.

Grid cell ``(r, c)`` is row ``r`` (south to north) and column ``c`` (west to
east); its north neighbour is ``(r + 1, c)`` and its east neighbour
``(r, c + 1)``. Candidate sets are Python ints used as bitsets over the tile
indices of the tileset (bit ``i`` is ``tileset.tiles[i]``).

Observation picks the uncollapsed cell with minimum Shannon entropy of its
weighted candidates, ties broken by the lowest row-major index, and samples a
tile proportionally to weight. Contradictions trigger a full restart from a
derived sub-seed. Randomness comes from :class:`random.Random` (MT19937),
whose ``random()`` stream is reproducible across platforms and Python
versions for a given integer seed.
"""

from __future__ import annotations

import bisect
import heapq
import json
import math
import random
import weakref
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import ConfigError, GenerationFailed
from .seeding import derive_seed
from .tiles import Side, TileSet

Cell = tuple[int, int]


class Contradiction(Exception):
    """Propagation emptied a cell's candidate set."""

    def __init__(self, cell: Cell):
        super().__init__(f"cell {cell} has no candidates left")
        self.cell = cell


class NothingToObserve(Exception):
    """Every cell is already collapsed."""


class _Model:
    """Per-tileset bitset tables plus memoised per-mask quantities."""

    _CACHE_LIMIT = 200_000

    def __init__(self, tileset: TileSet):
        self.ntiles = len(tileset)
        self.full = (1 << self.ntiles) - 1
        self.ids = tileset.ids
        self.weights = [t.weight for t in tileset.tiles]
        # compat[side][i]: bitset of tiles allowed across `side` of tile i
        self.compat = []
        for side in Side:
            row = []
            for t in tileset.tiles:
                m = 0
                for nid in tileset.adjacency[(t.id, side)]:
                    m |= 1 << tileset.index(nid)
                row.append(m)
            self.compat.append(row)
        self._support: list[dict[int, int]] = [{} for _ in Side]
        self._info: dict[int, tuple[tuple[int, ...], list[float], float]] = {}

    def support(self, side: int, mask: int) -> int:
        cache = self._support[side]
        s = cache.get(mask)
        if s is None:
            if len(cache) > self._CACHE_LIMIT:
                cache.clear()
            s = 0
            table = self.compat[side]
            m = mask
            while m:
                low = m & -m
                s |= table[low.bit_length() - 1]
                m ^= low
            cache[mask] = s
        return s

    def info(self, mask: int) -> tuple[tuple[int, ...], list[float], float]:
        """(indices, cumulative weights, entropy) of a candidate mask."""
        got = self._info.get(mask)
        if got is None:
            if len(self._info) > self._CACHE_LIMIT:
                self._info.clear()
            idx = []
            m = mask
            while m:
                low = m & -m
                idx.append(low.bit_length() - 1)
                m ^= low
            w = [self.weights[i] for i in idx]
            total = math.fsum(w)
            cum = []
            acc = 0.0
            for x in w:
                acc += x
                cum.append(acc)
            entropy = math.log(total) - math.fsum(x * math.log(x) for x in w) / total
            got = (tuple(idx), cum, entropy)
            self._info[mask] = got
        return got


_MODELS: "weakref.WeakKeyDictionary[TileSet, _Model]" = weakref.WeakKeyDictionary()


def _model(tileset: TileSet) -> _Model:
    m = _MODELS.get(tileset)
    if m is None:
        m = _MODELS[tileset] = _Model(tileset)
    return m


class WaveGrid:
    """Superposition state: one candidate bitset per cell plus the PRNG."""

    def __init__(self, tileset: TileSet, rows: int, cols: int, seed: int = 0):
        if rows < 1 or cols < 1:
            raise ConfigError("rows and cols must be >= 1")
        if len(tileset) == 0:
            raise ConfigError("tileset is empty")
        self.tileset = tileset
        self.model = _model(tileset)
        self.rows = rows
        self.cols = cols
        self.cells = [self.model.full] * (rows * cols)
        self.rng = random.Random(seed)
        self.restart_count = 0
        self._heap: list[tuple[float, int, int]] = []
        if self.model.ntiles > 1:
            e = self.model.info(self.model.full)[2]
            self._heap = [(e, i, self.model.full) for i in range(rows * cols)]

    def copy(self, seed: int) -> "WaveGrid":
        g = object.__new__(WaveGrid)
        g.tileset, g.model, g.rows, g.cols = self.tileset, self.model, self.rows, self.cols
        g.cells = list(self.cells)
        g.rng = random.Random(seed)
        g.restart_count = self.restart_count
        g._heap = list(self._heap)
        return g

    def index(self, cell: Cell) -> int:
        r, c = cell
        if not (0 <= r < self.rows and 0 <= c < self.cols):
            raise ConfigError(f"cell {cell} outside {self.rows}x{self.cols} grid")
        return r * self.cols + c

    def cell(self, index: int) -> Cell:
        return divmod(index, self.cols)

    def candidates(self, cell: Cell) -> set[int]:
        m = self.cells[self.index(cell)]
        if not m:
            return set()
        return {self.model.ids[i] for i in self.model.info(m)[0]}

    def mask_of(self, tile_ids: Iterable[int]) -> int:
        m = 0
        for tid in tile_ids:
            try:
                m |= 1 << self.tileset.index(tid)
            except KeyError:
                raise ConfigError(f"unknown tile id {tid}") from None
        return m

    def set_mask(self, i: int, mask: int) -> None:
        self.cells[i] = mask
        if mask.bit_count() > 1:
            heapq.heappush(self._heap, (self.model.info(mask)[2], i, mask))

    def restrict(self, cell: Cell, tile_ids: Iterable[int]) -> bool:
        """Intersect a cell's candidates with ``tile_ids``; True if it changed."""
        i = self.index(cell)
        new = self.cells[i] & self.mask_of(tile_ids)
        if new == self.cells[i]:
            return False
        if new == 0:
            raise Contradiction(cell)
        self.set_mask(i, new)
        return True

    def is_collapsed(self) -> bool:
        return all(m.bit_count() == 1 for m in self.cells)

    def entropy(self, cell: Cell) -> float:
        m = self.cells[self.index(cell)]
        return self.model.info(m)[2] if m else float("nan")


def _propagate(grid: WaveGrid, queue: Iterable[int], side_order: Sequence[Side]) -> set[Cell]:
    model = grid.model
    cells = grid.cells
    rows, cols = grid.rows, grid.cols
    offsets = [Side(s).offset for s in side_order]
    sides = [int(s) for s in side_order]
    pending = deque(queue)
    queued = set(pending)
    changed: set[Cell] = set()
    while pending:
        i = pending.popleft()
        queued.discard(i)
        r, c = divmod(i, cols)
        mask = cells[i]
        for side, (dr, dc) in zip(sides, offsets):
            nr, nc = r + dr, c + dc
            if not (0 <= nr < rows and 0 <= nc < cols):
                continue
            j = nr * cols + nc
            cur = cells[j]
            new = cur & model.support(side, mask)
            if new != cur:
                if new == 0:
                    cells[j] = 0
                    raise Contradiction((nr, nc))
                grid.set_mask(j, new)
                changed.add((nr, nc))
                if j not in queued:
                    pending.append(j)
                    queued.add(j)
    return changed


def propagate(grid: WaveGrid, tileset: TileSet, changed_cell: Cell,
              side_order: Sequence[Side] = tuple(Side)) -> set[Cell]:
    """Arc-consistency pass starting from ``changed_cell``.

    Returns the cells whose candidate sets shrank. Raises
    :class:`Contradiction` if any cell empties.
    """
    if tileset is not grid.tileset:
        raise ConfigError("grid was built for a different tileset")
    return _propagate(grid, [grid.index(changed_cell)], side_order)


def observe(grid: WaveGrid, tileset: TileSet) -> tuple[Cell, int]:
    """Pick the minimum-entropy open cell and sample one of its candidates.

    The grid itself is not modified, only its PRNG advances.
    """
    heap = grid._heap
    cells = grid.cells
    while heap:
        _, i, mask = heap[0]
        if cells[i] == mask and mask.bit_count() > 1:
            break
        heapq.heappop(heap)
    else:
        raise NothingToObserve("all cells collapsed")
    idx, cum, _ = grid.model.info(cells[i])
    x = grid.rng.random() * cum[-1]
    k = min(bisect.bisect_right(cum, x), len(idx) - 1)
    return grid.cell(i), grid.model.ids[idx[k]]


@dataclass
class CollapsedGrid:
    rows: int
    cols: int
    assignment: list[int]
    restart_count: int = 0

    def at(self, r: int, c: int) -> int:
        return self.assignment[r * self.cols + c]

    def to_dict(self) -> dict:
        return {"rows": self.rows, "cols": self.cols, "assignment": list(self.assignment),
                "restart_count": self.restart_count}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping) -> "CollapsedGrid":
        return cls(int(d["rows"]), int(d["cols"]), [int(x) for x in d["assignment"]],
                   int(d.get("restart_count", 0)))


def violations(grid: CollapsedGrid, tileset: TileSet) -> list[tuple[Cell, Side, Cell]]:
    """All adjacent pairs whose assigned tiles are incompatible."""
    bad = []
    for r in range(grid.rows):
        for c in range(grid.cols):
            a = grid.at(r, c)
            for side in (Side.N, Side.E):
                dr, dc = side.offset
                nr, nc = r + dr, c + dc
                if nr < grid.rows and nc < grid.cols and not tileset.compatible(a, side, grid.at(nr, nc)):
                    bad.append(((r, c), side, (nr, nc)))
    return bad


Boundary = Mapping[Cell, "int | Iterable[int]"]


def collapse(tileset: TileSet, rows: int, cols: int, seed: int = 0,
             boundary: Boundary | None = None, max_restarts: int = 100) -> CollapsedGrid:
    """Collapse a ``rows`` x ``cols`` grid into a consistent tiling.

    ``boundary`` pins cells to a tile id or a set of allowed ids. Attempt 0
    uses ``seed`` directly; restart ``k`` uses ``derive_seed(seed, k)``.
    """
    if max_restarts < 0:
        raise ConfigError("max_restarts must be >= 0")
    base = WaveGrid(tileset, rows, cols, seed)
    try:
        for cell, allowed in (boundary or {}).items():
            ids = [allowed] if isinstance(allowed, int) else list(allowed)
            base.restrict(tuple(cell), ids)
        _propagate(base, range(rows * cols), tuple(Side))
    except Contradiction as exc:
        raise GenerationFailed(f"constraints unsatisfiable at cell {exc.cell}", 0) from None

    for attempt in range(max_restarts + 1):
        grid = base.copy(seed if attempt == 0 else derive_seed(seed, attempt))
        grid.restart_count = attempt
        try:
            while True:
                try:
                    cell, tid = observe(grid, tileset)
                except NothingToObserve:
                    break
                i = grid.index(cell)
                grid.set_mask(i, 1 << tileset.index(tid))
                _propagate(grid, [i], tuple(Side))
        except Contradiction:
            continue
        ids = grid.model.ids
        return CollapsedGrid(rows, cols, [ids[m.bit_length() - 1] for m in grid.cells], attempt)
    raise GenerationFailed("max restarts exhausted", max_restarts)
