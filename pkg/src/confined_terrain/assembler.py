"""Turns collapsed tile grids into scenes and writes them out."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError, PlacementError
from .geometry.intersect import obb_obb_overlap
from .geometry.queries import QueryStructure, box_aabb, collision_check
from .scene import OrientedBox, SceneDescription, TriangleMesh
from .seeding import make_rng
from .tiles import TileKind, TileLibraryConfig, TileSet, generate_tile_library, snapped_heights
from .wfc import CollapsedGrid, collapse

WELD_TOL = 1e-9


def _grid_triangles(ny: int, nx: int) -> np.ndarray:
    """Two counter-clockwise (upward facing) triangles per cell of an ny x nx vertex lattice."""
    gy, gx = np.mgrid[0:ny - 1, 0:nx - 1]
    v00 = (gy * nx + gx).ravel()
    v10 = v00 + 1
    v01 = v00 + nx
    v11 = v01 + 1
    return np.concatenate([np.stack([v00, v10, v11], 1), np.stack([v00, v11, v01], 1)])


def tile_mesh(grid: CollapsedGrid, tileset: TileSet, r: int, c: int) -> TriangleMesh:
    """Surface of one placed tile, border heights snapped to the quantization lattice."""
    tile = tileset.get(grid.at(r, c))
    n = tile.n
    size = tileset.tile_size
    h = snapped_heights(tile, tileset.q)
    iy, ix = np.mgrid[0:n, 0:n]
    x = c * size + ix * (size / (n - 1))
    y = r * size + iy * (size / (n - 1))
    verts = np.column_stack([x.ravel(), y.ravel(), h.ravel()])
    return TriangleMesh(verts, _grid_triangles(n, n))


def assemble_mesh(grid: CollapsedGrid, tileset: TileSet) -> TriangleMesh:
    """Weld per-tile surfaces into one terrain mesh.

    Vertices are merged on the shared lattice of tile border samples; a pair
    that disagrees by more than ``WELD_TOL`` means the grid does not respect
    the tileset's edge signatures.
    """
    n = tileset.n
    m = n - 1
    gx_n = grid.cols * m + 1
    gy_n = grid.rows * m + 1
    verts = np.full((gy_n * gx_n, 3), np.nan)
    iy, ix = np.mgrid[0:n, 0:n]
    for r in range(grid.rows):
        for c in range(grid.cols):
            tm = tile_mesh(grid, tileset, r, c)
            key = ((r * m + iy) * gx_n + (c * m + ix)).ravel()
            prev = verts[key]
            seen = ~np.isnan(prev[:, 0])
            if seen.any() and np.abs(prev[seen] - tm.vertices[seen]).max() > WELD_TOL:
                raise ConfigError(f"tile at {(r, c)} does not weld to its neighbours")
            verts[key[~seen]] = tm.vertices[~seen]
    return TriangleMesh(verts, _grid_triangles(gy_n, gx_n))


def flat_patch(x0: float, x1: float, y0: float, y1: float, z: float = 0.0, cell: float = 1.0) -> TriangleMesh:
    nx = max(1, int(math.ceil((x1 - x0) / cell - 1e-9)))
    ny = max(1, int(math.ceil((y1 - y0) / cell - 1e-9)))
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    verts = np.column_stack([xx.ravel(), yy.ravel(), np.full(xx.size, float(z))])
    return TriangleMesh(verts, _grid_triangles(ny + 1, nx + 1))


# --- overhangs -------------------------------------------------------------------


def _pair(v, name: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in v)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a [min, max] pair") from None
    if lo > hi:
        raise ConfigError(f"{name}: min > max")
    return lo, hi


@dataclass
class OverhangParams:
    """Sampling ranges for overhanging boxes; lengths in metres, angles in radians."""

    count: tuple[int, int] = (2, 6)
    clearance: tuple[float, float] = (0.35, 0.8)
    length: tuple[float, float] = (0.5, 2.0)
    width: tuple[float, float] = (0.5, 2.0)
    thickness: tuple[float, float] = (0.1, 0.3)
    max_tilt: float = 0.2
    yaw: tuple[float, float] = (0.0, math.pi)
    margin: float = 0.5
    pad_radius: float = 0.6
    max_attempts: int = 200

    def __post_init__(self):
        lo, hi = _pair(self.count, "count")
        self.count = (int(lo), int(hi))
        if self.count[0] < 0:
            raise ConfigError("count must be >= 0")
        for name in ("clearance", "length", "width", "thickness", "yaw"):
            setattr(self, name, _pair(getattr(self, name), name))
        for name in ("length", "width", "thickness"):
            if getattr(self, name)[0] <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.clearance[0] < 0:
            raise ConfigError("clearance must be >= 0")
        if self.max_tilt < 0 or self.max_tilt >= math.pi / 2:
            raise ConfigError("max_tilt must be in [0, pi/2)")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "OverhangParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown overhang keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def _ground_query(scene: SceneDescription) -> QueryStructure:
    return QueryStructure(SceneDescription(scene.terrain, [], list(scene.obstacles)))


def _ground_z(qs: QueryStructure, x: float, y: float, top: float) -> float | None:
    t, _ = qs.cast(np.array([[x, y, top]]), np.array([[0.0, 0.0, -1.0]]), math.inf)
    return None if not np.isfinite(t[0]) else top - float(t[0])


def _footprint_distance(box: OrientedBox, point) -> float:
    lo, hi = box_aabb(box)
    px, py = point[0], point[1]
    dx = max(lo[0] - px, 0.0, px - hi[0])
    dy = max(lo[1] - py, 0.0, py - hi[1])
    return math.hypot(dx, dy)


def place_overhangs(scene: SceneDescription, params: OverhangParams, seed: int) -> SceneDescription:
    """Add seeded overhanging boxes above the terrain.

    Each box's underside, on the vertical through its center, sits at the
    sampled clearance above the ground there. Boxes touching the terrain, an
    existing box, or the spawn/goal pads are resampled.
    """
    rng = make_rng(seed, 0x0FE)
    count = int(rng.integers(params.count[0], params.count[1] + 1))
    if count == 0:
        return scene
    if scene.terrain.is_empty:
        raise ConfigError("cannot place overhangs without terrain")
    ground = _ground_query(scene)
    lo, hi = scene.terrain.bounds()
    x_rng = (lo[0] + params.margin, hi[0] - params.margin)
    y_rng = (lo[1] + params.margin, hi[1] - params.margin)
    if x_rng[0] > x_rng[1] or y_rng[0] > y_rng[1]:
        raise PlacementError("terrain is smaller than the placement margin")
    top = float(hi[2]) + 10.0
    pads = [scene.spawn[:2], scene.goal[:2]]
    placed: list[OrientedBox] = []
    for k in range(count):
        for _ in range(params.max_attempts):
            cx, cy = rng.uniform(*x_rng), rng.uniform(*y_rng)
            half = np.array([rng.uniform(*params.length), rng.uniform(*params.width),
                             rng.uniform(*params.thickness)]) / 2
            yaw = rng.uniform(*params.yaw)
            pitch, roll = rng.uniform(-params.max_tilt, params.max_tilt, size=2)
            clearance = rng.uniform(*params.clearance)
            gz = _ground_z(ground, cx, cy, top)
            if gz is None:
                continue
            box = OrientedBox([cx, cy, 0.0], half, yaw, pitch, roll)
            box.center[2] = gz + clearance + half[2] / box.rotation[2, 2]
            if any(_footprint_distance(box, p) < params.pad_radius for p in pads):
                continue
            if collision_check(ground, box):
                continue
            if any(obb_obb_overlap(box.center, box.half_extents, box.rotation,
                                   b.center, b.half_extents, b.rotation) for b in placed + scene.overhangs):
                continue
            placed.append(box)
            break
        else:
            raise PlacementError(
                f"could not place overhang {k + 1}/{count} in {params.max_attempts} attempts "
                f"(clearance {params.clearance}, pad radius {params.pad_radius}, margin {params.margin}, "
                f"no terrain or box contact)"
            )
    meta = dict(scene.metadata)
    meta["overhang_seed"] = int(seed)
    return SceneDescription(scene.terrain, list(scene.overhangs) + placed, list(scene.obstacles),
                            scene.spawn, scene.goal, meta)


# --- evaluation corridors ----------------------------------------------------------


class EvalKind(str, Enum):
    OVERHANGING = "overhanging"
    OBSTACLE = "obstacle"
    OVERHANGING_PLUS_OBSTACLE = "overhanging_plus_obstacle"


@dataclass
class EvalTerrainParams:
    """Straight flat corridor; the robot starts at x = 0 and the goal is ``goal_distance`` ahead.

    ``gap`` is the overhang underside height above the corridor floor and
    ``obstacle_height`` the height of the ground box. Both boxes are centred
    halfway to the goal and span the corridor width.
    """

    gap: float = 0.6
    obstacle_height: float = 0.25
    goal_distance: float = 6.0
    corridor_length: float = 8.0
    corridor_width: float = 3.0
    obstacle_depth: float = 3.0
    overhang_depth: float = 0.5
    overhang_thickness: float = 1.0
    ground_cell: float = 1.0

    def validate(self, kind: EvalKind) -> None:
        for name in ("goal_distance", "corridor_length", "corridor_width", "obstacle_depth",
                     "overhang_depth", "overhang_thickness", "ground_cell"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.corridor_length < self.goal_distance or self.goal_distance < 6.0:
            raise ConfigError("corridor must be at least as long as the goal distance (>= 6 m)")
        if kind is not EvalKind.OBSTACLE and not self.gap > 0:
            raise ConfigError("gap must be positive")
        if kind is not EvalKind.OVERHANGING and not self.obstacle_height > 0:
            raise ConfigError("obstacle_height must be positive")


def build_eval_terrain(kind: EvalKind | str, params: EvalTerrainParams | None = None) -> SceneDescription:
    kind = EvalKind(kind)
    p = params or EvalTerrainParams()
    p.validate(kind)
    x0 = -(p.corridor_length - p.goal_distance) / 2
    w = p.corridor_width / 2
    terrain = flat_patch(x0, x0 + p.corridor_length, -w, w, 0.0, p.ground_cell)
    mid = p.goal_distance / 2
    obstacles, overhangs = [], []
    if kind in (EvalKind.OBSTACLE, EvalKind.OVERHANGING_PLUS_OBSTACLE):
        h = p.obstacle_height
        obstacles.append(OrientedBox([mid, 0.0, h / 2], [p.obstacle_depth / 2, w, h / 2]))
    if kind in (EvalKind.OVERHANGING, EvalKind.OVERHANGING_PLUS_OBSTACLE):
        t = p.overhang_thickness
        overhangs.append(OrientedBox([mid, 0.0, p.gap + t / 2], [p.overhang_depth / 2, w, t / 2]))
    meta = {"eval_kind": kind.value, "params": dict(p.__dict__)}
    return SceneDescription(terrain, overhangs, obstacles, (0.0, 0.0, 0.0), (p.goal_distance, 0.0), meta)


# --- export ----------------------------------------------------------------------


def _fmt(v: float) -> str:
    s = f"{v:.9f}"
    return "0.000000000" if s == "-0.000000000" else s


def obj_text(scene: SceneDescription) -> str:
    if scene.terrain.is_empty:
        raise ConfigError("scene has no terrain; refusing to export")
    lines: list[str] = []
    offset = 1
    groups = [("terrain", scene.terrain)]
    groups += [(f"obstacle_{i:03d}", b.mesh()) for i, b in enumerate(scene.obstacles)]
    groups += [(f"overhang_{i:03d}", b.mesh()) for i, b in enumerate(scene.overhangs)]
    for name, mesh in groups:
        lines.append(f"g {name}")
        lines.extend(f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in mesh.vertices.tolist())
        lines.extend(f"f {a + offset} {b + offset} {c + offset}" for a, b, c in mesh.triangles.tolist())
        offset += len(mesh.vertices)
    return "\n".join(lines) + "\n"


def _write(path, text: str) -> None:
    path = os.fspath(path)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}", path) from exc


def export_obj(scene: SceneDescription, path) -> None:
    """Wavefront subset (``g``, ``v``, ``f``), 9-decimal fixed point, 1-based indices."""
    _write(path, obj_text(scene))


def export_scene_json(scene: SceneDescription, path) -> None:
    if scene.is_empty():
        raise ConfigError("scene is empty; refusing to export")
    _write(path, scene.to_json() + "\n")


# --- end-to-end generation ------------------------------------------------------------


@dataclass
class GenerateConfig:
    tile_library: TileLibraryConfig = field(default_factory=TileLibraryConfig)
    rows: int = 6
    cols: int = 6
    max_restarts: int = 100
    pin_pads: bool = True
    overhangs: OverhangParams = field(default_factory=OverhangParams)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GenerateConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown generate keys: {sorted(unknown)}")
        kw = dict(d)
        if "tile_library" in kw:
            kw["tile_library"] = TileLibraryConfig.from_dict(kw["tile_library"])
        if "overhangs" in kw:
            kw["overhangs"] = OverhangParams.from_dict(kw["overhangs"])
        cfg = cls(**kw)
        if cfg.rows < 1 or cfg.cols < 1:
            raise ConfigError("rows and cols must be >= 1")
        return cfg


def pad_tile(tileset: TileSet) -> int | None:
    """Lowest flat tile, used to pin the spawn and goal cells."""
    flats = [t for t in tileset.tiles if t.kind is TileKind.FLAT]
    if not flats:
        return None
    return min(flats, key=lambda t: (float(t.height_array[0, 0]), t.id)).id


def generate_scene(cfg: GenerateConfig, seed: int, tileset: TileSet | None = None) -> tuple[SceneDescription, CollapsedGrid, TileSet]:
    """Tile library -> WFC -> welded mesh -> overhangs."""
    tileset = tileset or generate_tile_library(cfg.tile_library)
    boundary = {}
    pad = pad_tile(tileset) if cfg.pin_pads else None
    if pad is not None:
        boundary = {(0, 0): pad, (cfg.rows - 1, cfg.cols - 1): pad}
    grid = collapse(tileset, cfg.rows, cfg.cols, seed=seed, boundary=boundary, max_restarts=cfg.max_restarts)
    mesh = assemble_mesh(grid, tileset)
    size = tileset.tile_size
    spawn_xy = (0.5 * size, 0.5 * size)
    goal = ((cfg.cols - 0.5) * size, (cfg.rows - 0.5) * size)
    yaw = math.atan2(goal[1] - spawn_xy[1], goal[0] - spawn_xy[0])
    meta = {"seed": int(seed), "tileset_sha256": tileset.digest(), "rows": cfg.rows, "cols": cfg.cols,
            "restart_count": grid.restart_count}
    scene = SceneDescription(mesh, [], [], (*spawn_xy, yaw), goal, meta)
    scene = place_overhangs(scene, cfg.overhangs, seed)
    return scene, grid, tileset
