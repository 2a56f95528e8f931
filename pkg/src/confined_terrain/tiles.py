"""Parametric terrain tiles and their height-derived connectivity.

Conventions used throughout the package:

* A tile's ``height_array`` is indexed ``[iy, ix]``. ``ix`` runs west to east
  (+x) and ``iy`` runs south to north (+y). Sample ``(iy, ix)`` sits at
  ``(ix, iy) * tile_size / (n - 1)`` inside the tile, so border samples lie
  exactly on the tile edges and are shared with the neighbouring tile.
* Edge signatures are read counter-clockwise around the perimeter (seen from
  above): S west->east, E south->north, N east->west, W north->south. Two
  facing edges are compatible when one sequence equals the other reversed.
* ``rotation`` is a clockwise quarter turn seen from above, so after one turn
  the old west edge becomes the north edge.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .seeding import make_rng


class Side(IntEnum):
    N = 0
    E = 1
    S = 2
    W = 3

    @property
    def opposite(self) -> "Side":
        return Side((self + 2) % 4)

    @property
    def offset(self) -> tuple[int, int]:
        """(drow, dcol) of the neighbouring grid cell across this side."""
        return _OFFSETS[self]


_OFFSETS = {Side.N: (1, 0), Side.E: (0, 1), Side.S: (-1, 0), Side.W: (0, -1)}


class TileKind(str, Enum):
    FLAT = "flat"
    STEP = "step"
    STAIRS = "stairs"
    RAMP = "ramp"
    ROUGH = "rough"


ROTATIONS = (0, 90, 180, 270)


@dataclass(frozen=True, eq=False)
class TileSpec:
    id: int
    kind: TileKind
    params: Mapping[str, float]
    height_array: np.ndarray
    weight: float = 1.0
    rotation: int = 0

    def __post_init__(self):
        h = np.array(self.height_array, dtype=np.float64)
        if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] < 2:
            raise ConfigError(f"tile {self.id}: height_array must be n x n with n >= 2")
        if not np.all(np.isfinite(h)):
            raise ConfigError(f"tile {self.id}: non-finite heights")
        if not self.weight > 0:
            raise ConfigError(f"tile {self.id}: weight must be positive")
        if self.rotation not in ROTATIONS:
            raise ConfigError(f"tile {self.id}: rotation must be one of {ROTATIONS}")
        h.setflags(write=False)
        object.__setattr__(self, "height_array", h)
        object.__setattr__(self, "kind", TileKind(self.kind))
        object.__setattr__(self, "params", dict(self.params))

    @property
    def n(self) -> int:
        return self.height_array.shape[0]

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "params": dict(self.params),
            "rotation": self.rotation,
            "weight": self.weight,
            "height_array": self.height_array.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TileSpec":
        return cls(
            id=int(d["id"]),
            kind=TileKind(d["kind"]),
            params=d.get("params", {}),
            height_array=np.asarray(d["height_array"], dtype=np.float64),
            weight=float(d.get("weight", 1.0)),
            rotation=int(d.get("rotation", 0)),
        )


def rotate90(tile: TileSpec, new_id: int | None = None) -> TileSpec:
    """Rotate a tile one clockwise quarter turn."""
    return TileSpec(
        id=tile.id if new_id is None else new_id,
        kind=tile.kind,
        params=tile.params,
        height_array=tile.height_array.T[::-1],
        weight=tile.weight,
        rotation=(tile.rotation + 90) % 360,
    )


@dataclass(frozen=True)
class EdgeSignature:
    side: Side
    quantized_heights: tuple[int, ...]

    def compatible(self, other: "EdgeSignature") -> bool:
        return (
            other.side == self.side.opposite
            and self.quantized_heights == tuple(reversed(other.quantized_heights))
        )


def quantize(heights, q: float) -> np.ndarray:
    """Round-half-up of ``heights / q`` to integers."""
    return np.floor(np.asarray(heights, dtype=np.float64) / q + 0.5).astype(np.int64)


def border(height_array: np.ndarray, side: Side) -> np.ndarray:
    """Raw border samples of one side in counter-clockwise order."""
    h = height_array
    if side is Side.S:
        return h[0, :]
    if side is Side.E:
        return h[:, -1]
    if side is Side.N:
        return h[-1, ::-1]
    return h[::-1, 0]


def edge_signature(tile: TileSpec, side: Side, q: float) -> EdgeSignature:
    if not q > 0:
        raise ConfigError("quantization step must be positive")
    side = Side(side)
    return EdgeSignature(side, tuple(int(v) for v in quantize(border(tile.height_array, side), q)))


@dataclass(eq=False)
class TileSet:
    tiles: list[TileSpec]
    adjacency: dict[tuple[int, Side], frozenset[int]]
    q: float
    tile_size: float = 2.0

    def __post_init__(self):
        self._index = {t.id: i for i, t in enumerate(self.tiles)}

    def __len__(self) -> int:
        return len(self.tiles)

    @property
    def n(self) -> int:
        return self.tiles[0].n

    @property
    def ids(self) -> list[int]:
        return [t.id for t in self.tiles]

    def index(self, tile_id: int) -> int:
        return self._index[tile_id]

    def get(self, tile_id: int) -> TileSpec:
        return self.tiles[self._index[tile_id]]

    def neighbors(self, tile_id: int, side: Side) -> frozenset[int]:
        return self.adjacency[(tile_id, Side(side))]

    def compatible(self, a: int, side: Side, b: int) -> bool:
        """True if tile ``b`` may sit across ``side`` of tile ``a``."""
        return b in self.adjacency[(a, Side(side))]

    def to_dict(self) -> dict[str, Any]:
        return {
            "q": self.q,
            "tile_size": self.tile_size,
            "tiles": [t.to_dict() for t in self.tiles],
            "adjacency": {
                f"{tid}:{side.name}": sorted(ids)
                for (tid, side), ids in sorted(self.adjacency.items())
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TileSet":
        tiles = [TileSpec.from_dict(t) for t in d["tiles"]]
        return build_adjacency(tiles, float(d["q"]), tile_size=float(d.get("tile_size", 2.0)))

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form; cached since tile sets are not mutated."""
        if getattr(self, "_digest", None) is None:
            self._digest = hashlib.sha256(self.to_json().encode()).hexdigest()
        return self._digest


def build_adjacency(tiles: Sequence[TileSpec], q: float, tile_size: float = 2.0) -> TileSet:
    """Index all-pairs edge compatibility of ``tiles``."""
    tiles = list(tiles)
    if not tiles:
        raise ConfigError("tile list is empty")
    if not q > 0:
        raise ConfigError("quantization step must be positive")
    seen = set()
    for t in tiles:
        if t.id in seen:
            raise ConfigError(f"duplicate tile id {t.id}")
        seen.add(t.id)
    if len({t.n for t in tiles}) != 1:
        raise ConfigError("all tiles must share the same grid resolution n")

    sigs = {(t.id, s): edge_signature(t, s, q).quantized_heights for t in tiles for s in Side}
    by_sig: dict[tuple[Side, tuple[int, ...]], list[int]] = {}
    for (tid, s), sig in sigs.items():
        by_sig.setdefault((s, sig), []).append(tid)

    adjacency = {}
    for t in tiles:
        for s in Side:
            want = (s.opposite, tuple(reversed(sigs[(t.id, s)])))
            adjacency[(t.id, s)] = frozenset(by_sig.get(want, ()))
    return TileSet(tiles=tiles, adjacency=adjacency, q=q, tile_size=tile_size)


# --- tile library -------------------------------------------------------------


def _levels(start: float, stop: float, step: float) -> tuple[float, ...]:
    count = int(round((stop - start) / step)) + 1
    return tuple(round(start + i * step, 9) for i in range(count))


@dataclass
class TileLibraryConfig:
    """Parameter grid enumerated by :func:`generate_tile_library`.

    The default grid yields 1570 tiles: 10 flat levels, 35 (base, rise) pairs
    for each of step / ramp / four stair counts in 4 rotations, and
    10 levels x 3 amplitudes x 6 noise variants x 4 rotations of rough ground.
    """

    tile_size: float = 2.0
    n: int = 8
    q: float = 0.05
    h_min: float = 0.0
    h_max: float = 1.0
    kinds: tuple[str, ...] = ("flat", "step", "stairs", "ramp", "rough")
    base_levels: tuple[float, ...] = _levels(0.0, 0.9, 0.1)
    step_rises: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    ramp_rises: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    stair_rises: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    stair_counts: tuple[int, ...] = (2, 3, 4, 5)
    rough_amplitudes: tuple[float, ...] = (0.03, 0.06, 0.09)
    rough_variants: int = 6
    noise_cells: int = 3
    noise_seed: int = 0
    rotations: tuple[int, ...] = ROTATIONS
    kind_weights: dict[str, float] = field(
        default_factory=lambda: {"flat": 20.0, "step": 2.0, "stairs": 0.5, "ramp": 2.0, "rough": 0.4}
    )

    def validate(self) -> None:
        if self.n < 2:
            raise ConfigError("n must be >= 2")
        if not self.q > 0:
            raise ConfigError("q must be positive")
        if not self.tile_size > 0:
            raise ConfigError("tile_size must be positive")
        if not self.kinds:
            raise ConfigError("no tile kinds enabled")
        for k in self.kinds:
            try:
                TileKind(k)
            except ValueError:
                raise ConfigError(f"unknown tile kind {k!r}") from None
        if not self.base_levels:
            raise ConfigError("base_levels is empty")
        for r in self.rotations:
            if r not in ROTATIONS:
                raise ConfigError(f"rotation {r} not in {ROTATIONS}")
        for c in self.stair_counts:
            if not 2 <= c <= self.n - 1:
                raise ConfigError(f"stair count {c} must be in [2, n-1]")
        if self.rough_variants < 0 or self.noise_cells < 1:
            raise ConfigError("rough_variants must be >= 0 and noise_cells >= 1")
        for k, w in self.kind_weights.items():
            if not w > 0:
                raise ConfigError(f"weight for {k!r} must be positive")

    def to_dict(self) -> dict[str, Any]:
        d = dict(self.__dict__)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TileLibraryConfig":
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigError(f"unknown tile library keys: {sorted(unknown)}")
        kw = {}
        for k, v in d.items():
            kw[k] = tuple(v) if isinstance(v, list) else v
        if "kind_weights" in kw:
            kw["kind_weights"] = {**cls().kind_weights, **kw["kind_weights"]}
        return cls(**kw)


def _value_noise(rng: np.random.Generator, n: int, cells: int) -> np.ndarray:
    """Smoothstep-interpolated lattice noise in [0, 1] sampled on an n x n grid."""
    lattice = rng.random((cells + 1, cells + 1))
    u = np.linspace(0.0, cells, n)
    i0 = np.minimum(np.floor(u).astype(int), cells - 1)
    f = u - i0
    f = f * f * (3.0 - 2.0 * f)
    fy, fx = f[:, None], f[None, :]
    iy, ix = i0[:, None], i0[None, :]
    a = lattice[iy, ix]
    b = lattice[iy, ix + 1]
    c = lattice[iy + 1, ix]
    d = lattice[iy + 1, ix + 1]
    return (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy


def _border_window(n: int) -> np.ndarray:
    idx = np.arange(n)
    d = np.minimum(idx, n - 1 - idx)
    d2 = np.minimum(d[:, None], d[None, :])
    return np.minimum(d2 / 2.0, 1.0)


def _profile(kind: TileKind, n: int, base: float, rise: float, count: int = 0) -> np.ndarray:
    """Height profile along +x for the unrotated tile."""
    ix = np.arange(n)
    if kind is TileKind.STEP:
        return base + rise * (ix >= n // 2)
    if kind is TileKind.RAMP:
        return base + rise * ix / (n - 1)
    if kind is TileKind.STAIRS:
        level = np.minimum(np.floor(ix * (count + 1) / n), count)
        return base + rise * level / count
    raise ValueError(kind)


def _rotated(h: np.ndarray, rotation: int) -> np.ndarray:
    for _ in range(rotation // 90):
        h = h.T[::-1]
    return h


def generate_tile_library(config: TileLibraryConfig | None = None) -> TileSet:
    """Enumerate every kind / parameter / rotation combination of ``config``.

    Flat tiles are rotation invariant and enumerated once per level. Ramp,
    step and stair tiles join two base levels, so a (base, rise) pair is only
    used when ``base + rise`` is itself a base level.
    """
    cfg = config or TileLibraryConfig()
    cfg.validate()
    n = cfg.n
    levels = [round(float(b), 9) for b in cfg.base_levels]
    level_set = set(levels)
    kinds = [TileKind(k) for k in cfg.kinds]
    specs: list[tuple[TileKind, dict, np.ndarray]] = []

    def pairs(rises: Iterable[float]):
        for rise in rises:
            for base in levels:
                top = round(base + rise, 9)
                if top in level_set:
                    yield base, float(rise)

    if TileKind.FLAT in kinds:
        for b in levels:
            specs.append((TileKind.FLAT, {"base": b}, np.full((n, n), b)))
    for kind, rises in ((TileKind.STEP, cfg.step_rises), (TileKind.RAMP, cfg.ramp_rises)):
        if kind in kinds:
            for base, rise in pairs(rises):
                h = np.tile(_profile(kind, n, base, rise), (n, 1))
                specs.append((kind, {"base": base, "rise": rise}, h))
    if TileKind.STAIRS in kinds:
        for count in cfg.stair_counts:
            for base, rise in pairs(cfg.stair_rises):
                h = np.tile(_profile(TileKind.STAIRS, n, base, rise, count), (n, 1))
                specs.append((TileKind.STAIRS, {"base": base, "rise": rise, "count": count}, h))
    if TileKind.ROUGH in kinds:
        window = _border_window(n)
        for li, b in enumerate(levels):
            for ai, amp in enumerate(cfg.rough_amplitudes):
                for v in range(cfg.rough_variants):
                    noise = _value_noise(make_rng(cfg.noise_seed, li, ai, v), n, cfg.noise_cells)
                    h = b + amp * noise * window
                    specs.append((TileKind.ROUGH, {"base": b, "amplitude": float(amp), "variant": v}, h))

    tiles: list[TileSpec] = []
    for kind, params, h in specs:
        if h.min() < cfg.h_min - 1e-12 or h.max() > cfg.h_max + 1e-12:
            raise ConfigError(f"{kind.value} tile {params} leaves [{cfg.h_min}, {cfg.h_max}]")
        rotations = (0,) if kind is TileKind.FLAT else cfg.rotations
        weight = float(cfg.kind_weights.get(kind.value, 1.0))
        for rot in rotations:
            tiles.append(
                TileSpec(
                    id=len(tiles),
                    kind=kind,
                    params=params,
                    height_array=_rotated(h, rot),
                    weight=weight,
                    rotation=rot,
                )
            )
    return build_adjacency(tiles, cfg.q, tile_size=cfg.tile_size)


def flat_tile(tile_id: int, height: float, n: int = 8, weight: float = 1.0) -> TileSpec:
    return TileSpec(tile_id, TileKind.FLAT, {"base": height}, np.full((n, n), float(height)), weight)


def ramp_tile(tile_id: int, low: float, high: float, n: int = 8, rotation: int = 0, weight: float = 1.0) -> TileSpec:
    """Ramp rising linearly from ``low`` on the west edge to ``high`` on the east edge, then rotated."""
    h = np.tile(low + (high - low) * np.arange(n) / (n - 1), (n, 1))
    return TileSpec(tile_id, TileKind.RAMP, {"base": low, "rise": high - low}, _rotated(h, rotation), weight, rotation)


def tile_count_formula(cfg: TileLibraryConfig) -> int:
    """Closed-form size of the library, used as a cross-check in tests."""
    levels = [round(b, 9) for b in cfg.base_levels]
    ls = set(levels)

    def npairs(rises):
        return sum(1 for r in rises for b in levels if round(b + r, 9) in ls)

    kinds = set(cfg.kinds)
    rot = len(cfg.rotations)
    total = 0
    total += len(levels) if "flat" in kinds else 0
    total += rot * npairs(cfg.step_rises) if "step" in kinds else 0
    total += rot * npairs(cfg.ramp_rises) if "ramp" in kinds else 0
    total += rot * len(cfg.stair_counts) * npairs(cfg.stair_rises) if "stairs" in kinds else 0
    total += rot * len(levels) * len(cfg.rough_amplitudes) * cfg.rough_variants if "rough" in kinds else 0
    return total


def snapped_heights(tile: TileSpec, q: float) -> np.ndarray:
    """Height array with border samples snapped to the quantization lattice.

    Facing edges with equal signatures snap to identical heights, which is
    what makes assembled seams weld exactly.
    """
    h = np.array(tile.height_array)
    for sl in ((0, slice(None)), (-1, slice(None)), (slice(None), 0), (slice(None), -1)):
        h[sl] = quantize(h[sl], q) * q
    return h

