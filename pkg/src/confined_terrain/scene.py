"""Scene geometry containers and their JSON form."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError

SCENE_SCHEMA_VERSION = 1


def _trig(a: float) -> tuple[float, float]:
    # exact values at quarter turns keep rotated axis-aligned content exact
    c, s = math.cos(a), math.sin(a)
    if abs(c) < 1e-15:
        c = 0.0
    if abs(s) < 1e-15:
        s = 0.0
    return c, s


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = _trig(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_matrix(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """R = Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    cy, sy = _trig(yaw)
    cp, sp = _trig(pitch)
    cr, sr = _trig(roll)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return rz @ ry @ rx


# corner i has sign bits (x: bit0, y: bit1, z: bit2)
_CORNER_SIGNS = np.array([[(1 if i & 1 else -1), (1 if i & 2 else -1), (1 if i & 4 else -1)] for i in range(8)],
                         dtype=np.float64)
# outward-facing (counter-clockwise seen from outside) triangles
_BOX_FACES = np.array([
    [0, 2, 3], [0, 3, 1],  # -z
    [4, 5, 7], [4, 7, 6],  # +z
    [0, 1, 5], [0, 5, 4],  # -y
    [2, 6, 7], [2, 7, 3],  # +y
    [0, 4, 6], [0, 6, 2],  # -x
    [1, 3, 7], [1, 7, 5],  # +x
], dtype=np.int64)


@dataclass
class OrientedBox:
    center: np.ndarray
    half_extents: np.ndarray
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        self.half_extents = np.asarray(self.half_extents, dtype=np.float64).reshape(3)
        if np.any(self.half_extents <= 0):
            raise ConfigError("box half extents must be positive")
        self.yaw, self.pitch, self.roll = float(self.yaw), float(self.pitch), float(self.roll)

    @property
    def rotation(self) -> np.ndarray:
        return euler_matrix(self.yaw, self.pitch, self.roll)

    def corners(self) -> np.ndarray:
        return self.center + (_CORNER_SIGNS * self.half_extents) @ self.rotation.T

    def mesh(self) -> "TriangleMesh":
        return TriangleMesh(self.corners(), _BOX_FACES.copy())

    def underside_z(self) -> float:
        """Height of the bottom face on the vertical line through the center."""
        n = self.rotation[:, 2]
        return float(self.center[2] - self.half_extents[2] / n[2])

    def to_dict(self) -> dict[str, Any]:
        return {"center": self.center.tolist(), "half_extents": self.half_extents.tolist(),
                "yaw": self.yaw, "pitch": self.pitch, "roll": self.roll}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "OrientedBox":
        return cls(d["center"], d["half_extents"], d.get("yaw", 0.0), d.get("pitch", 0.0), d.get("roll", 0.0))


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(self.vertices)):
            raise ConfigError("mesh has non-finite vertices")
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise ConfigError("triangle index out of bounds")

    def __len__(self) -> int:
        return len(self.triangles)

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def triangle_vertices(self) -> np.ndarray:
        """(M, 3, 3) array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @staticmethod
    def empty() -> "TriangleMesh":
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @staticmethod
    def concatenate(meshes: list["TriangleMesh"]) -> "TriangleMesh":
        verts, tris, off = [], [], 0
        for m in meshes:
            verts.append(m.vertices)
            tris.append(m.triangles + off)
            off += len(m.vertices)
        if not verts:
            return TriangleMesh.empty()
        return TriangleMesh(np.vstack(verts), np.vstack(tris))


@dataclass
class SceneDescription:
    """Terrain mesh plus box obstacles.

    ``overhangs`` hang above the ground and bound body height; ``obstacles``
    sit on the ground and count as terrain for ground-height queries.
    ``spawn`` is ``(x, y, yaw)``, ``goal`` is ``(x, y)``.
    """

    terrain: TriangleMesh
    overhangs: list[OrientedBox] = field(default_factory=list)
    obstacles: list[OrientedBox] = field(default_factory=list)
    spawn: tuple[float, float, float] = (0.0, 0.0, 0.0)
    goal: tuple[float, float] = (0.0, 0.0)
    metadata: dict[str, Any] = field(default_factory=dict)

    def is_empty(self) -> bool:
        return self.terrain.is_empty and not self.overhangs and not self.obstacles

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCENE_SCHEMA_VERSION,
            "terrain": {"vertices": self.terrain.vertices.tolist(),
                        "triangles": self.terrain.triangles.tolist()},
            "overhangs": [b.to_dict() for b in self.overhangs],
            "obstacles": [b.to_dict() for b in self.obstacles],
            "spawn": [float(v) for v in self.spawn],
            "goal": [float(v) for v in self.goal],
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SceneDescription":
        try:
            terrain = TriangleMesh(np.asarray(d["terrain"]["vertices"], dtype=np.float64).reshape(-1, 3),
                                   np.asarray(d["terrain"]["triangles"], dtype=np.int64).reshape(-1, 3))
            spawn = tuple(float(v) for v in d["spawn"])
            goal = tuple(float(v) for v in d["goal"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed scene: {exc}") from None
        if len(spawn) == 2:
            spawn = (*spawn, 0.0)
        if len(spawn) != 3 or len(goal) != 2:
            raise ConfigError("scene spawn must be (x, y, yaw) and goal (x, y)")
        return cls(
            terrain=terrain,
            overhangs=[OrientedBox.from_dict(b) for b in d.get("overhangs", [])],
            obstacles=[OrientedBox.from_dict(b) for b in d.get("obstacles", [])],
            spawn=spawn,
            goal=goal,
            metadata=dict(d.get("metadata", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> "SceneDescription":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"scene is not valid JSON: {exc}") from None


def load_scene_json(path) -> SceneDescription:
    with open(path, encoding="utf-8") as f:
        return SceneDescription.from_json(f.read())
