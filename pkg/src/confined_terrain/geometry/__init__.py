"""Ray casting, sampling, voxelization and collision queries over scenes."""

from .bvh import BVH, brute_force_intersect
from .queries import (
    HeightSamples,
    QueryStructure,
    RayHit,
    SphericalScanPattern,
    build_query,
    collision_check,
    fibonacci_pattern,
    foot_height_samples,
    ground_height_avg,
    ground_heights,
    raycast,
    spherical_scan,
)
from .voxels import VoxelGrid, voxelize

__all__ = [
    "BVH", "brute_force_intersect", "HeightSamples", "QueryStructure", "RayHit",
    "SphericalScanPattern", "VoxelGrid", "build_query", "collision_check", "fibonacci_pattern",
    "foot_height_samples", "ground_height_avg", "ground_heights", "raycast", "spherical_scan", "voxelize",
]
