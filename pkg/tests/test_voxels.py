import math
import struct

import numpy as np
import pytest

from confined_terrain.assembler import assemble_mesh, flat_patch
from confined_terrain.errors import ConfigError
from confined_terrain.geometry.queries import build_query
from confined_terrain.geometry.voxels import DIMS, HEADER_SIZE, PAYLOAD_SIZE, RESOLUTION, VoxelGrid, voxelize
from confined_terrain.scene import OrientedBox, SceneDescription, TriangleMesh
from confined_terrain.tiles import generate_tile_library, TileLibraryConfig
from confined_terrain.wfc import collapse


def clip(poly, axis, bound, keep_below):
    """Sutherland-Hodgman against one closed half-space."""
    out = []
    inside = (lambda p: p[axis] <= bound) if keep_below else (lambda p: p[axis] >= bound)
    for k in range(len(poly)):
        a, b = poly[k - 1], poly[k]
        ia, ib = inside(a), inside(b)
        if ia != ib:
            t = (bound - a[axis]) / (b[axis] - a[axis])
            p = a + t * (b - a)
            p[axis] = bound
            out.append(p)
        if ib:
            out.append(b)
    return out


def triangle_touches_box(tri, lo, hi):
    poly = [np.array(v, dtype=float) for v in tri]
    for axis in range(3):
        poly = clip(poly, axis, hi[axis], True)
        if not poly:
            return False
        poly = clip(poly, axis, lo[axis], False)
        if not poly:
            return False
    return True


def oracle_occupancy(scene, pose, res=RESOLUTION, offset=1.0):
    x, y, z, yaw = pose
    c, s = math.cos(yaw), math.sin(yaw)
    w = DIMS[0] * res
    tris = build_query(scene).tris
    rel = tris - np.array([x, y, z])
    local = np.stack([c * rel[..., 0] + s * rel[..., 1], -s * rel[..., 0] + c * rel[..., 1], rel[..., 2]], -1)
    local = local + np.array([w / 2, w / 2, offset])
    occ = np.zeros(DIMS, dtype=bool)
    for tri in local:
        lo = np.maximum(np.floor(tri.min(0) / res).astype(int) - 1, 0)
        hi = np.minimum(np.floor(tri.max(0) / res).astype(int) + 1, np.array(DIMS) - 1)
        if np.any(lo > hi):
            continue
        for i in range(lo[0], hi[0] + 1):
            for j in range(lo[1], hi[1] + 1):
                for k in range(lo[2], hi[2] + 1):
                    if occ[i, j, k]:
                        continue
                    vlo = np.array([i, j, k]) * res
                    if triangle_touches_box(tri, vlo, vlo + res):
                        occ[i, j, k] = True
    return occ


def random_scene(rng, count):
    c = rng.uniform(-1.0, 1.0, (count, 1, 3))
    tris = c + rng.uniform(-0.15, 0.15, (count, 3, 3))
    return SceneDescription(TriangleMesh(tris.reshape(-1, 3), np.arange(count * 3).reshape(-1, 3)))


class TestVoxelize:
    def test_empty_grid_when_nothing_nearby(self):
        qs = build_query(SceneDescription(flat_patch(50, 51, 50, 51)))
        assert voxelize(qs, (0, 0, 0, 0)).count == 0

    @pytest.mark.parametrize("yaw", [0.0, 0.7])
    def test_flat_plane_single_layer(self, yaw):
        qs = build_query(SceneDescription(flat_patch(-5, 5, -5, 5, z=-0.5)))
        g = voxelize(qs, (0.0, 0.0, 0.0, yaw))
        layer = int(0.5 / RESOLUTION)
        assert g.occupancy[:, :, layer].all()
        assert g.count == DIMS[0] * DIMS[1]

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_clipping_oracle_random(self, seed):
        rng = np.random.default_rng(seed)
        scene = random_scene(rng, 120)
        pose = (rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-3, 3))
        got = voxelize(build_query(scene), pose).occupancy
        np.testing.assert_array_equal(got, oracle_occupancy(scene, pose))

    def test_matches_clipping_oracle_terrain(self):
        ts = generate_tile_library(TileLibraryConfig(n=6))
        grid = collapse(ts, 2, 2, seed=3)
        scene = SceneDescription(assemble_mesh(grid, ts))
        assert len(scene.terrain) <= 500
        pose = (2.0, 2.0, 0.4, 0.9)
        got = voxelize(build_query(scene), pose).occupancy
        np.testing.assert_array_equal(got, oracle_occupancy(scene, pose))
        assert got.any()

    def test_rotation_equivariance(self):
        boxes = [OrientedBox([0.33, -0.21, 0.05], [0.2, 0.35, 0.11]), OrientedBox([-0.6, 0.52, -0.4], [0.13, 0.09, 0.3])]
        scene = SceneDescription(TriangleMesh.concatenate([b.mesh() for b in boxes]))
        rotated = [OrientedBox([-b.center[1], b.center[0], b.center[2]], b.half_extents[[1, 0, 2]]) for b in boxes]
        scene_r = SceneDescription(TriangleMesh.concatenate([b.mesh() for b in rotated]))
        pose = (0.0, 0.0, 0.0, 0.0)
        a = voxelize(build_query(scene), pose).occupancy
        b = voxelize(build_query(scene_r), pose).occupancy
        np.testing.assert_array_equal(b, np.rot90(a, 1, axes=(0, 1)))
        c = voxelize(build_query(scene_r), (0.0, 0.0, 0.0, math.pi / 2)).occupancy
        np.testing.assert_array_equal(c, a)

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        qs = build_query(random_scene(rng, 200))
        a, b = voxelize(qs, (0.1, 0, 0, 0.4)), voxelize(qs, (0.1, 0, 0, 0.4))
        assert a.to_bytes() == b.to_bytes()

    def test_chunking_does_not_matter(self):
        rng = np.random.default_rng(10)
        qs = build_query(random_scene(rng, 200))
        a = voxelize(qs, (0, 0, 0, 0.2)).occupancy
        b = voxelize(qs, (0, 0, 0, 0.2), chunk=97).occupancy
        np.testing.assert_array_equal(a, b)

    def test_bad_pose(self):
        qs = build_query(random_scene(np.random.default_rng(0), 3))
        with pytest.raises(ConfigError):
            voxelize(qs, (0, 0, 0))


class TestVoxelFormat:
    def test_size_and_header(self):
        occ = np.zeros(DIMS, dtype=bool)
        occ[0, 0, 0] = occ[0, 0, 9] = occ[31, 31, 31] = True
        blob = VoxelGrid(occ).to_bytes()
        assert len(blob) == HEADER_SIZE + PAYLOAD_SIZE == 4112
        assert blob[:4] == b"VOXG"
        assert struct.unpack_from("<HHHH", blob, 4) == (32, 32, 32, 1)
        assert struct.unpack_from("<f", blob, 12)[0] == np.float32(0.08)
        # bit (i, j, k) sits at flat index (i*32 + j)*32 + k, least significant bit first
        assert blob[16] == 0b00000001 and blob[17] == 0b00000010 and blob[-1] == 0b10000000

    def test_round_trip(self):
        occ = np.random.default_rng(1).random(DIMS) < 0.1
        g = VoxelGrid(occ, pose=(1, 2, 3, 0.5))
        back = VoxelGrid.from_bytes(g.to_bytes(), pose=g.pose)
        np.testing.assert_array_equal(back.occupancy, occ)
        assert back.dims == DIMS and back.resolution == pytest.approx(0.08)

    def test_rejects_bad_blobs(self):
        blob = VoxelGrid(np.zeros(DIMS, bool)).to_bytes()
        with pytest.raises(ConfigError):
            VoxelGrid.from_bytes(blob[:-1])
        with pytest.raises(ConfigError):
            VoxelGrid.from_bytes(b"XXXX" + blob[4:])

    def test_shape_checked(self):
        with pytest.raises(ConfigError):
            VoxelGrid(np.zeros((8, 8, 8), bool))

    def test_json_dump(self):
        import json
        occ = np.zeros(DIMS, dtype=bool)
        occ[1, 2, 3] = True
        d = json.loads(VoxelGrid(occ).to_json())
        assert d["occupied"] == [[1, 2, 3]] and d["occupied_count"] == 1 and d["dims"] == [32, 32, 32]
