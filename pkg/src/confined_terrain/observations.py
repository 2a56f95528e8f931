"""Command sampling and sensor corruption models.

Noise is structured as voxel dropout, spurious occupancy and a pose jitter
that re-samples the grid at a perturbed origin. Height samples get additive
Gaussian noise plus uniform outliers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError
from .geometry.queries import HeightSamples
from .geometry.voxels import VoxelGrid
from .scene import yaw_matrix

HEIGHT_LIMITS = (0.1, 0.6)


@dataclass(frozen=True)
class Command6D:
    """Velocity, orientation and body-height command.

    ``height`` is measured from the averaged ground below the base.
    """

    vx: float
    vy: float
    yaw_rate: float
    roll: float
    pitch: float
    height: float

    def __post_init__(self):
        vals = self.as_array()
        if not np.all(np.isfinite(vals)):
            raise ConfigError("command values must be finite")
        lo, hi = HEIGHT_LIMITS
        if not lo <= self.height <= hi:
            raise ConfigError(f"height {self.height} outside [{lo}, {hi}]")

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.yaw_rate, self.roll, self.pitch, self.height])


def _range(v, name: str) -> tuple[float, float]:
    lo, hi = (float(x) for x in v)
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise ConfigError(f"{name} must be a finite [min, max] with min <= max")
    return lo, hi


@dataclass
class CommandRanges:
    """Uniform ranges for velocities and height; roll and pitch are clamped Gaussians."""

    vx: tuple[float, float] = (-1.0, 1.0)
    vy: tuple[float, float] = (-1.0, 1.0)
    yaw_rate: tuple[float, float] = (-1.0, 1.0)
    height: tuple[float, float] = HEIGHT_LIMITS
    orientation_std: float = 0.25
    orientation_clamp: float = 0.6

    def __post_init__(self):
        for name in ("vx", "vy", "yaw_rate", "height"):
            setattr(self, name, _range(getattr(self, name), name))
        if self.height[0] < HEIGHT_LIMITS[0] or self.height[1] > HEIGHT_LIMITS[1]:
            raise ConfigError(f"height range must lie within {HEIGHT_LIMITS}")
        if not self.orientation_std >= 0 or not self.orientation_clamp > 0:
            raise ConfigError("orientation_std must be >= 0 and orientation_clamp > 0")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CommandRanges":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown command range keys: {sorted(unknown)}")
        return cls(**d)


def sample_commands(rng: np.random.Generator, ranges: CommandRanges, count: int) -> np.ndarray:
    """``count`` commands as rows ``(vx, vy, yaw_rate, roll, pitch, height)``."""
    out = np.empty((count, 6))
    for col, name in enumerate(("vx", "vy", "yaw_rate")):
        out[:, col] = rng.uniform(*getattr(ranges, name), size=count)
    c = ranges.orientation_clamp
    out[:, 3:5] = np.clip(rng.normal(0.0, ranges.orientation_std, size=(count, 2)), -c, c)
    out[:, 5] = rng.uniform(*ranges.height, size=count)
    return out


def sample_command(rng: np.random.Generator, ranges: CommandRanges | None = None) -> Command6D:
    row = sample_commands(rng, ranges or CommandRanges(), 1)[0]
    return Command6D(*(float(v) for v in row))


@dataclass
class NoiseParams:
    p_drop: float = 0.0
    p_spurious: float = 0.0
    pose_sigma: float = 0.0
    yaw_sigma: float = 0.0
    height_sigma: float = 0.0
    outlier_prob: float = 0.0
    outlier_range: float = 0.5

    def __post_init__(self):
        for name in ("p_drop", "p_spurious", "outlier_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        for name in ("pose_sigma", "yaw_sigma", "height_sigma", "outlier_range"):
            if not getattr(self, name) >= 0.0:
                raise ConfigError(f"{name} must be >= 0")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "NoiseParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown noise keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


def _jitter(occ: np.ndarray, res: float, origin: np.ndarray, shift: np.ndarray, dyaw: float) -> np.ndarray:
    """Nearest-neighbour resample of ``occ`` as seen from a perturbed grid pose."""
    dims = np.asarray(occ.shape)
    idx = np.indices(occ.shape).reshape(3, -1).T
    local = (idx + 0.5) * res + origin
    moved = local @ yaw_matrix(dyaw).T + shift
    src = np.floor((moved - origin) / res).astype(np.int64)
    ok = np.all((src >= 0) & (src < dims), axis=1)
    out = np.zeros(occ.size, dtype=bool)
    s = src[ok]
    out[ok] = occ[s[:, 0], s[:, 1], s[:, 2]]
    return out.reshape(occ.shape)


def corrupt_voxels(grid: VoxelGrid, params: NoiseParams, rng: np.random.Generator) -> VoxelGrid:
    """Pose jitter, then dropout of occupied voxels, then spurious occupancy of free ones."""
    occ = grid.occupancy
    shift = rng.normal(0.0, 1.0, size=3) * params.pose_sigma
    dyaw = float(rng.normal(0.0, 1.0)) * params.yaw_sigma
    if shift.any() or dyaw:
        occ = _jitter(occ, grid.resolution, grid.grid_origin_offset(), shift, dyaw)
    u_drop = rng.random(occ.shape)
    u_spur = rng.random(occ.shape)
    out = np.where(occ, u_drop >= params.p_drop, u_spur < params.p_spurious)
    return grid.copy(out)


def corrupt_height_samples(samples: HeightSamples, params: NoiseParams, rng: np.random.Generator) -> HeightSamples:
    """Gaussian noise everywhere; outliers replace the noisy value by truth + U(-r, r). NaNs stay NaN."""
    h = np.asarray(samples.heights, dtype=np.float64)
    noisy = h + rng.normal(0.0, 1.0, size=h.shape) * params.height_sigma
    outlier = rng.random(h.shape) < params.outlier_prob
    r = params.outlier_range
    noisy = np.where(outlier, h + rng.uniform(-r, r, size=h.shape), noisy)
    return HeightSamples(noisy, samples.points, samples.radii)
