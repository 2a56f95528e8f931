"""Read-only geometric queries over a scene."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ConfigError, OutOfBoundsError
from ..scene import OrientedBox, SceneDescription, yaw_matrix
from .bvh import BVH, brute_force_intersect
from .intersect import (obb_obb_overlap, obb_obb_overlap_many, obb_triangles_overlap, tri_aabb_overlap,
                        triangle_areas)

TERRAIN, OBSTACLE, OVERHANG = 0, 1, 2

# below this many triangles a vectorised sweep beats tree traversal
BRUTE_FORCE_LIMIT = 96

GROUND_RAY_OFFSET = 0.05
GROUND_RADIUS = 0.25
FOOT_RADII = (0.08, 0.16, 0.26, 0.36, 0.48)
FOOT_RING_SAMPLES = 8
FOOT_CAST_HEIGHT = 0.5
DOWN_RANGE = 50.0


@dataclass
class RayHit:
    distance: float
    point: np.ndarray
    triangle: int


class QueryStructure:
    """BVH over terrain triangles and triangulated boxes of one scene.

    Zero-area triangles are dropped at build time.
    """

    def __init__(self, scene: SceneDescription, leaf_size: int = 4):
        if scene.is_empty():
            raise ConfigError("scene has no geometry")
        self.scene = scene
        parts, tags = [], []
        terrain = scene.terrain.triangle_vertices()
        parts.append(terrain)
        tags.append(np.full(len(terrain), TERRAIN))
        for tag, boxes in ((OBSTACLE, scene.obstacles), (OVERHANG, scene.overhangs)):
            for b in boxes:
                t = b.mesh().triangle_vertices()
                parts.append(t)
                tags.append(np.full(len(t), tag))
        tris = np.concatenate(parts).reshape(-1, 3, 3)
        tag = np.concatenate(tags).astype(np.int8)
        keep = triangle_areas(tris) > 1e-14
        self.tris = tris[keep]
        self.tags = tag[keep]
        self.bvh = BVH(self.tris, leaf_size=leaf_size)
        self.terrain_tris = self.tris[self.tags == TERRAIN]
        self._terrain_min = self.terrain_tris.min(axis=1) if len(self.terrain_tris) else np.zeros((0, 3))
        self._terrain_max = self.terrain_tris.max(axis=1) if len(self.terrain_tris) else np.zeros((0, 3))
        self.boxes: list[OrientedBox] = list(scene.obstacles) + list(scene.overhangs)
        self._box_rot = [b.rotation for b in self.boxes]

    def __len__(self) -> int:
        return len(self.tris)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.tris.reshape(-1, 3).min(axis=0), self.tris.reshape(-1, 3).max(axis=0)

    def cast(self, origins, dirs, max_range, method: str = "auto") -> tuple[np.ndarray, np.ndarray]:
        """Batched nearest-hit distances (``inf`` on miss) and triangle indices.

        ``dirs`` must be unit length for distances to be metric.
        """
        if method == "auto":
            method = "brute" if len(self.tris) <= BRUTE_FORCE_LIMIT else "bvh"
        if method == "bvh":
            return self.bvh.intersect(origins, dirs, max_range)
        if method == "brute":
            return brute_force_intersect(self.tris, origins, dirs, max_range)
        raise ValueError(f"unknown method {method!r}")


def build_query(scene: SceneDescription, leaf_size: int = 4) -> QueryStructure:
    return QueryStructure(scene, leaf_size=leaf_size)


def _unit(direction) -> np.ndarray:
    d = np.asarray(direction, dtype=np.float64).reshape(3)
    norm = float(np.linalg.norm(d))
    if not norm > 0 or not math.isfinite(norm):
        raise ValueError("ray direction must be nonzero and finite")
    return d / norm


def raycast(qs: QueryStructure, origin, direction, max_range: float = math.inf) -> RayHit | None:
    o = np.asarray(origin, dtype=np.float64).reshape(1, 3)
    d = _unit(direction).reshape(1, 3)
    t, i = qs.cast(o, d, max_range)
    if not np.isfinite(t[0]):
        return None
    return RayHit(float(t[0]), o[0] + t[0] * d[0], int(i[0]))


# --- spherical scans ------------------------------------------------------------


@dataclass(frozen=True)
class SphericalScanPattern:
    directions: np.ndarray
    max_range: float = 3.0

    @property
    def count(self) -> int:
        return len(self.directions)


def fibonacci_pattern(count: int = 64, max_range: float = 3.0) -> SphericalScanPattern:
    """Deterministic, near-uniform unit directions on the sphere."""
    if count < 1:
        raise ConfigError("pattern needs at least one direction")
    if not max_range > 0:
        raise ConfigError("max_range must be positive")
    i = np.arange(count, dtype=np.float64)
    z = 1.0 - 2.0 * (i + 0.5) / count
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = i * (math.pi * (3.0 - math.sqrt(5.0)))
    d = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    d.setflags(write=False)
    return SphericalScanPattern(d, float(max_range))


def spherical_scan(qs: QueryStructure, origin, pattern: SphericalScanPattern, yaw: float = 0.0) -> np.ndarray:
    """Distance along every pattern direction, ``max_range`` where nothing is hit.

    ``yaw`` rotates the pattern from the body frame into the world.
    """
    dirs = pattern.directions @ yaw_matrix(yaw).T if yaw else pattern.directions
    o = np.broadcast_to(np.asarray(origin, dtype=np.float64).reshape(1, 3), dirs.shape)
    t, _ = qs.cast(o, dirs, pattern.max_range)
    return np.minimum(t, pattern.max_range)


# --- ground and foot height sampling -------------------------------------------

_DOWN = np.array([0.0, 0.0, -1.0])


def ground_sample_points(base_xy, yaw: float = 0.0, radius: float = GROUND_RADIUS) -> np.ndarray:
    """Center plus four points at ``radius`` along the body x and y axes."""
    c, s = math.cos(yaw), math.sin(yaw)
    ax = np.array([[0.0, 0.0], [c, s], [-c, -s], [-s, c], [s, -c]])
    return np.asarray(base_xy, dtype=np.float64).reshape(1, 2) + radius * ax


def ground_heights(qs: QueryStructure, base_xy, base_z: float, yaw: float = 0.0,
                   radius: float = GROUND_RADIUS, offset: float = GROUND_RAY_OFFSET) -> np.ndarray:
    """Heights of the five ground samples; rays start ``offset`` below the base."""
    xy = ground_sample_points(base_xy, yaw, radius)
    z0 = base_z - offset
    origins = np.column_stack([xy, np.full(len(xy), z0)])
    t, _ = qs.cast(origins, np.broadcast_to(_DOWN, origins.shape), DOWN_RANGE)
    if not np.all(np.isfinite(t)):
        missed = xy[~np.isfinite(t)].tolist()
        raise OutOfBoundsError(f"ground ray missed terrain at {missed}")
    return z0 - t


def ground_height_avg(qs: QueryStructure, base_xy, base_z: float, yaw: float = 0.0,
                      radius: float = GROUND_RADIUS) -> float:
    """Mean of five downward-ray ground heights around the base."""
    return float(np.mean(ground_heights(qs, base_xy, base_z, yaw, radius)))


@dataclass
class HeightSamples:
    """Ring samples around each foot: ``heights[f, ring, k]``; NaN marks a miss."""

    heights: np.ndarray
    points: np.ndarray
    radii: tuple[float, ...]

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.heights)


def foot_height_samples(qs: QueryStructure, foot_positions, radii: Sequence[float] = FOOT_RADII,
                        samples_per_ring: int = FOOT_RING_SAMPLES, yaw: float = 0.0,
                        cast_height: float = FOOT_CAST_HEIGHT) -> HeightSamples:
    radii = tuple(float(r) for r in radii)
    if any(b <= a for a, b in zip(radii, radii[1:])) or (radii and radii[0] <= 0):
        raise ConfigError("radii must be positive and strictly increasing")
    if samples_per_ring < 1:
        raise ConfigError("samples_per_ring must be >= 1")
    feet = np.asarray(foot_positions, dtype=np.float64).reshape(-1, 3)
    ang = yaw + 2.0 * math.pi * np.arange(samples_per_ring) / samples_per_ring
    ring = np.stack([np.cos(ang), np.sin(ang)], axis=-1)  # (k, 2)
    offs = np.asarray(radii)[:, None, None] * ring[None]  # (R, k, 2)
    xy = feet[:, None, None, :2] + offs[None]  # (F, R, k, 2)
    z0 = np.broadcast_to(feet[:, 2][:, None, None] + cast_height, xy.shape[:-1])
    origins = np.concatenate([xy, z0[..., None]], axis=-1).reshape(-1, 3)
    t, _ = qs.cast(origins, np.broadcast_to(_DOWN, origins.shape), DOWN_RANGE)
    h = np.where(np.isfinite(t), origins[:, 2] - t, np.nan).reshape(xy.shape[:-1])
    return HeightSamples(h, xy, radii)


# --- collision --------------------------------------------------------------------


def box_aabb(box: OrientedBox) -> tuple[np.ndarray, np.ndarray]:
    ext = np.abs(box.rotation) @ box.half_extents
    return box.center - ext, box.center + ext


def collision_check(qs: QueryStructure, body_box: OrientedBox) -> bool:
    """True iff the box touches or penetrates any terrain triangle or scene box."""
    rot = body_box.rotation
    lo, hi = box_aabb(body_box)
    if len(qs.terrain_tris):
        cand = np.all(qs._terrain_min <= hi, axis=1) & np.all(qs._terrain_max >= lo, axis=1)
        if cand.any():
            if obb_triangles_overlap(body_box.center, body_box.half_extents, rot, qs.terrain_tris[cand]).any():
                return True
    for b, r in zip(qs.boxes, qs._box_rot):
        if obb_obb_overlap(body_box.center, body_box.half_extents, rot, b.center, b.half_extents, r):
            return True
    return False


def collision_mask(qs: QueryStructure, centers, half_extents, rotations) -> np.ndarray:
    """Batched :func:`collision_check` for ``K`` boxes sharing ``half_extents``."""
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    rotations = np.asarray(rotations, dtype=np.float64).reshape(-1, 3, 3)
    half = np.asarray(half_extents, dtype=np.float64)
    hit = np.zeros(len(centers), dtype=bool)
    if len(centers) == 0:
        return hit
    ext = np.einsum("kij,j->ki", np.abs(rotations), half)
    lo, hi = centers - ext, centers + ext
    if len(qs.terrain_tris):
        pair = np.all(qs._terrain_min[None] <= hi[:, None], axis=2) & np.all(qs._terrain_max[None] >= lo[:, None], axis=2)
        k, t = np.nonzero(pair)
        if len(k):
            local = np.einsum("kvj,kji->kvi", qs.terrain_tris[t] - centers[k][:, None, :], rotations[k])
            ok = tri_aabb_overlap(local, np.zeros((len(k), 3)), half)
            hit[k[ok]] = True
    for b, r in zip(qs.boxes, qs._box_rot):
        hit |= obb_obb_overlap_many(centers, half, rotations, b.center, b.half_extents, r)
    return hit
