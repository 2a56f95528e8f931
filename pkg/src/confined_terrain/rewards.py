"""Reward kernels for body orientation, height and obstacle distance.

All three share ``exp(-alpha * error)``. The orientation kernel is per axis;
how roll and pitch terms are combined is up to the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class RewardParams:
    alpha_orientation: float = 5.0
    alpha_height: float = 10.0
    alpha_base: float = 2.0
    d_max: float = 0.5
    collision_penalty_value: float = -10.0

    def __post_init__(self):
        for name in ("alpha_orientation", "alpha_height", "alpha_base", "d_max"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive")
        if not self.collision_penalty_value < 0:
            raise ConfigError("collision_penalty_value must be negative")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RewardParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown reward keys: {sorted(unknown)}")
        return cls(**d)


def _check(value: float, name: str) -> float:
    value = float(value)
    if not value >= 0.0:
        raise ValueError(f"{name} must be a non-negative number, got {value}")
    return value


def exp_kernel(error: float, alpha: float) -> float:
    error = _check(error, "error")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return math.exp(-alpha * error)


def orientation_reward(e_rp: float, alpha: float = 5.0) -> float:
    """``e_rp`` is the absolute roll or pitch error in radians."""
    return exp_kernel(e_rp, alpha)


def base_height_reward(e_h: float, alpha: float = 10.0) -> float:
    return exp_kernel(e_h, alpha)


def base_distance_reward(d: float, d_max: float = 0.5, alpha: float = 2.0) -> float:
    """Saturates at 1 once the closest obstacle is at least ``d_max`` away."""
    d = _check(d, "d")
    if not d_max > 0:
        raise ValueError("d_max must be positive")
    if d >= d_max:
        return 1.0
    return exp_kernel(d_max - d, alpha)


def collision_penalty(collided: bool, params: RewardParams | None = None) -> float:
    value = (params or RewardParams()).collision_penalty_value
    return float(value) if collided else 0.0


def scan_distance(scan: np.ndarray, mode: str = "min") -> float:
    """Reduce a spherical scan to the ``d`` fed to :func:`base_distance_reward`."""
    scan = np.asarray(scan, dtype=np.float64)
    if scan.size == 0:
        raise ValueError("empty scan")
    if mode == "min":
        return float(scan.min())
    if mode == "mean":
        return float(scan.mean())
    raise ValueError(f"unknown mode {mode!r}")
