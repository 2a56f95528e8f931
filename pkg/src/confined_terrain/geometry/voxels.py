"""Body-centred occupancy voxel grids.

The grid is gravity aligned and yawed with the body. Voxel ``(i, j, k)``
spans ``[i, i+1] * resolution`` along the body x axis (likewise j/y, k/z) in
grid coordinates, whose origin sits ``W/2`` behind and to the right of the
base horizontally (``W = 32 * 0.08 = 2.56`` m) and ``vertical_offset`` below
it. A voxel is occupied when any scene triangle touches its closed box.

Binary layout (little endian), 4112 bytes:

====== ======= ===============================================
offset size    content
====== ======= ===============================================
0      4       magic ``b"VOXG"``
4      2 x 3   uint16 dims (nx, ny, nz)
10     2       uint16 format version (1)
12     4       float32 resolution in metres
16     4096    occupancy bits, C order over (i, j, k), LSB first
====== ======= ===============================================
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..scene import yaw_matrix
from .intersect import tri_aabb_overlap
from .queries import QueryStructure

DIMS = (32, 32, 32)
RESOLUTION = 0.08
VERTICAL_OFFSET = 1.0
MAGIC = b"VOXG"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHHHHf")
HEADER_SIZE = _HEADER.size
PAYLOAD_SIZE = (DIMS[0] * DIMS[1] * DIMS[2]) // 8


@dataclass
class VoxelGrid:
    occupancy: np.ndarray
    pose: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    resolution: float = RESOLUTION
    vertical_offset: float = VERTICAL_OFFSET
    dims: tuple[int, int, int] = field(default=DIMS)

    def __post_init__(self):
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        if self.occupancy.shape != tuple(self.dims):
            raise ConfigError(f"occupancy shape {self.occupancy.shape} != dims {self.dims}")
        self.pose = tuple(float(v) for v in self.pose)

    @property
    def count(self) -> int:
        return int(self.occupancy.sum())

    def copy(self, occupancy: np.ndarray | None = None) -> "VoxelGrid":
        occ = self.occupancy.copy() if occupancy is None else occupancy
        return VoxelGrid(occ, self.pose, self.resolution, self.vertical_offset, self.dims)

    def grid_origin_offset(self) -> np.ndarray:
        """Position of the grid corner in the body frame."""
        w = np.asarray(self.dims) * self.resolution
        return np.array([-w[0] / 2, -w[1] / 2, -self.vertical_offset])

    def world_to_grid(self, points: np.ndarray) -> np.ndarray:
        """World points into grid coordinates (metres from the grid corner)."""
        x, y, z, yaw = self.pose
        local = (np.asarray(points) - np.array([x, y, z])) @ yaw_matrix(yaw)
        return local - self.grid_origin_offset()

    def voxel_centers_world(self) -> np.ndarray:
        idx = np.indices(self.dims).reshape(3, -1).T
        local = (idx + 0.5) * self.resolution + self.grid_origin_offset()
        x, y, z, yaw = self.pose
        return local @ yaw_matrix(yaw).T + np.array([x, y, z])

    def to_bytes(self) -> bytes:
        if self.dims != DIMS:
            raise ConfigError("binary format is defined for 32^3 grids only")
        header = _HEADER.pack(MAGIC, *self.dims, FORMAT_VERSION, self.resolution)
        bits = np.packbits(self.occupancy.reshape(-1), bitorder="little")
        return header + bits.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, pose=(0.0, 0.0, 0.0, 0.0)) -> "VoxelGrid":
        if len(data) != HEADER_SIZE + PAYLOAD_SIZE:
            raise ConfigError(f"voxel blob must be {HEADER_SIZE + PAYLOAD_SIZE} bytes, got {len(data)}")
        magic, nx, ny, nz, version, res = _HEADER.unpack_from(data)
        if magic != MAGIC or version != FORMAT_VERSION:
            raise ConfigError("not a voxel grid blob")
        bits = np.frombuffer(data, dtype=np.uint8, offset=HEADER_SIZE)
        occ = np.unpackbits(bits, bitorder="little")[: nx * ny * nz].astype(bool).reshape(nx, ny, nz)
        return cls(occ, pose, float(res), dims=(nx, ny, nz))

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "resolution": self.resolution,
            "vertical_offset": self.vertical_offset,
            "pose": {"x": self.pose[0], "y": self.pose[1], "z": self.pose[2], "yaw": self.pose[3]},
            "occupied_count": self.count,
            "occupied": np.argwhere(self.occupancy).tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def voxelize(qs: QueryStructure, body_pose, vertical_offset: float = VERTICAL_OFFSET,
             resolution: float = RESOLUTION, chunk: int = 1 << 19) -> VoxelGrid:
    """Occupancy of every voxel whose closed box touches a scene triangle.

    ``body_pose`` is ``(x, y, z, yaw)``.
    """
    pose = tuple(float(v) for v in body_pose)
    if len(pose) != 4:
        raise ConfigError("body_pose must be (x, y, z, yaw)")
    dims = np.asarray(DIMS)
    grid = VoxelGrid(np.zeros(DIMS, dtype=bool), pose, resolution, vertical_offset)
    if len(qs.tris) == 0:
        return grid

    tris = grid.world_to_grid(qs.tris.reshape(-1, 3)).reshape(-1, 3, 3)
    extent = dims * resolution
    tmin, tmax = tris.min(axis=1), tris.max(axis=1)
    inside = np.all(tmax >= 0.0, axis=1) & np.all(tmin <= extent, axis=1)
    tris, tmin, tmax = tris[inside], tmin[inside], tmax[inside]
    if len(tris) == 0:
        return grid

    # one voxel of padding keeps boundary-touching voxels in the candidate set
    lo = np.clip(np.floor(tmin / resolution).astype(np.int64) - 1, 0, dims - 1)
    hi = np.clip(np.floor(tmax / resolution).astype(np.int64) + 1, 0, dims - 1)
    span = hi - lo + 1
    counts = span.prod(axis=1)
    occ = grid.occupancy.reshape(-1)
    half = np.full(3, resolution / 2)

    starts = np.concatenate([[0], np.cumsum(counts)])
    batch_start = 0
    while batch_start < len(tris):
        batch_end = int(np.searchsorted(starts, starts[batch_start] + chunk, side="right")) - 1
        batch_end = max(batch_end, batch_start + 1)
        sel = slice(batch_start, batch_end)
        c = counts[sel]
        tri_id = np.repeat(np.arange(batch_start, batch_end), c)
        local = np.arange(int(c.sum())) - np.repeat(starts[sel] - starts[batch_start], c)
        sp = span[tri_id]
        k = local % sp[:, 2]
        j = (local // sp[:, 2]) % sp[:, 1]
        i = local // (sp[:, 2] * sp[:, 1])
        vi = lo[tri_id] + np.stack([i, j, k], axis=1)
        centers = (vi + 0.5) * resolution
        hit = tri_aabb_overlap(tris[tri_id], centers, half)
        flat = (vi[hit, 0] * dims[1] + vi[hit, 1]) * dims[2] + vi[hit, 2]
        occ[flat] = True
        batch_start = batch_end
    return grid
