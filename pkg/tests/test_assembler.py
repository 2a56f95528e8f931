import hashlib
import json
import math

import numpy as np
import pytest

from confined_terrain.assembler import (
    EvalKind, EvalTerrainParams, GenerateConfig, OverhangParams, assemble_mesh, build_eval_terrain,
    export_obj, export_scene_json, flat_patch, generate_scene, obj_text, place_overhangs, tile_mesh,
)
from confined_terrain.errors import ConfigError, PlacementError
from confined_terrain.geometry.queries import build_query, raycast
from confined_terrain.scene import OrientedBox, SceneDescription, TriangleMesh, load_scene_json
from confined_terrain.tiles import TileLibraryConfig, build_adjacency, flat_tile, generate_tile_library, ramp_tile
from confined_terrain.wfc import CollapsedGrid, collapse

from conftest import step_tile


def flat_scene(size=6.0, z=0.0):
    return SceneDescription(flat_patch(0, size, 0, size, z), spawn=(0.5, 0.5, 0.0), goal=(size - 0.5, size - 0.5))


def parse_obj(text):
    groups, verts, faces = [], [], []
    for line in text.splitlines():
        tag, *rest = line.split()
        if tag == "g":
            groups.append(rest[0])
        elif tag == "v":
            verts.append([float(x) for x in rest])
        elif tag == "f":
            faces.append([int(x) for x in rest])
        else:
            raise AssertionError(f"unexpected record {tag}")
    return groups, np.array(verts), np.array(faces)


class TestAssembleMesh:
    def test_single_flat_tile(self):
        ts = build_adjacency([flat_tile(0, 0.0)], 0.05)
        mesh = assemble_mesh(CollapsedGrid(1, 1, [0]), ts)
        assert len(mesh.vertices) == 64
        assert np.all(mesh.vertices[:, 2] == 0)
        assert mesh.vertices[:, :2].min() == 0 and mesh.vertices[:, :2].max() == 2.0

    def test_two_flats_weld(self):
        ts = build_adjacency([flat_tile(0, 0.0)], 0.05)
        grid = CollapsedGrid(1, 2, [0, 0])
        a, b = tile_mesh(grid, ts, 0, 0), tile_mesh(grid, ts, 0, 1)
        ea = a.vertices[np.isclose(a.vertices[:, 0], 2.0)]
        eb = b.vertices[np.isclose(b.vertices[:, 0], 2.0)]
        np.testing.assert_allclose(ea, eb, atol=1e-9)
        mesh = assemble_mesh(grid, ts)
        assert len(mesh.vertices) == 8 * 15

    def test_ramp_then_flat_max_height(self):
        ts = build_adjacency([ramp_tile(0, 0.0, 0.4), flat_tile(1, 0.4)], 0.05)
        mesh = assemble_mesh(CollapsedGrid(1, 2, [0, 1]), ts)
        assert abs(mesh.vertices[:, 2].max() - 0.4) <= 1e-9

    def test_seams_weld_on_generated_grids(self, default_library):
        ts = default_library
        grid = collapse(ts, 5, 5, seed=2)
        size = ts.tile_size
        for r in range(5):
            for c in range(4):
                a, b = tile_mesh(grid, ts, r, c), tile_mesh(grid, ts, r, c + 1)
                x = (c + 1) * size
                ea = a.vertices[np.abs(a.vertices[:, 0] - x) < 1e-12]
                eb = b.vertices[np.abs(b.vertices[:, 0] - x) < 1e-12]
                np.testing.assert_allclose(ea[np.argsort(ea[:, 1])], eb[np.argsort(eb[:, 1])], atol=1e-9)
        mesh = assemble_mesh(grid, ts)
        assert np.all(np.isfinite(mesh.vertices))

    def test_inconsistent_grid_rejected(self, two_flats):
        with pytest.raises(ConfigError):
            assemble_mesh(CollapsedGrid(1, 2, [0, 1]), two_flats)

    def test_triangles_face_up(self, default_library):
        grid = collapse(default_library, 3, 3, seed=4)
        tris = assemble_mesh(grid, default_library).triangle_vertices()
        nz = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])[:, 2]
        assert np.all(nz > 0)

    def test_step_tiles_leave_no_gaps(self):
        ts = build_adjacency([step_tile(0, 0.0, 0.3, n=8)], 0.05)
        qs = build_query(SceneDescription(assemble_mesh(CollapsedGrid(1, 1, [0]), ts)))
        xs = np.linspace(0.01, 1.99, 41)
        for x in xs:
            assert raycast(qs, [x, 1.0, 5.0], [0, 0, -1]) is not None
        # horizontal rays below the step top cannot pass through the rise
        hit = raycast(qs, [0.1, 1.0, 0.15], [1, 0, 0])
        assert hit is not None and hit.distance < 2.0


class TestOverhangs:
    def test_count_zero_unchanged(self):
        scene = flat_scene()
        out = place_overhangs(scene, OverhangParams(count=(0, 0)), seed=1)
        assert out.to_json() == scene.to_json()

    def test_fixed_clearance_flat(self):
        params = OverhangParams(count=(1, 1), clearance=(0.45, 0.45), max_tilt=0.0)
        out = place_overhangs(flat_scene(), params, seed=3)
        box = out.overhangs[0]
        assert abs(box.underside_z() - 0.45) <= 1e-6
        hit = raycast(build_query(out), [box.center[0], box.center[1], 0.01], [0, 0, 1])
        assert abs(hit.point[2] - 0.45) <= 1e-6

    def test_clearances_within_range(self, default_library):
        cfg = GenerateConfig(rows=4, cols=4, overhangs=OverhangParams(count=(1, 1)))
        lo, hi = cfg.overhangs.clearance
        for seed in range(100):
            scene, grid, _ = generate_scene(cfg, seed, tileset=default_library)
            qs = build_query(SceneDescription(scene.terrain))
            for b in scene.overhangs:
                ground = raycast(qs, [b.center[0], b.center[1], 10.0], [0, 0, -1]).point[2]
                clearance = b.underside_z() - ground
                assert lo - 1e-9 <= clearance <= hi + 1e-9

    def test_boxes_avoid_terrain_and_pads(self):
        scene = place_overhangs(flat_scene(8.0), OverhangParams(count=(4, 4)), seed=8)
        qs = build_query(SceneDescription(scene.terrain))
        from confined_terrain.geometry.queries import collision_check
        for b in scene.overhangs:
            assert not collision_check(qs, b)

    def test_deterministic(self):
        a = place_overhangs(flat_scene(), OverhangParams(), seed=5)
        b = place_overhangs(flat_scene(), OverhangParams(), seed=5)
        assert a.to_json() == b.to_json()

    def test_impossible_placement(self):
        params = OverhangParams(count=(1, 1), pad_radius=10.0, max_attempts=20)
        with pytest.raises(PlacementError, match="attempts"):
            place_overhangs(flat_scene(), params, seed=0)

    @pytest.mark.parametrize("bad", [{"count": (3, 1)}, {"thickness": (0.0, 0.1)}, {"max_tilt": 2.0}])
    def test_bad_params(self, bad):
        with pytest.raises(ConfigError):
            OverhangParams(**bad)


class TestEvalTerrain:
    def test_obstacle(self):
        s = build_eval_terrain("obstacle", EvalTerrainParams(obstacle_height=0.25))
        assert len(s.obstacles) == 1 and not s.overhangs
        lo, hi = OrientedBox.corners(s.obstacles[0]).min(0), OrientedBox.corners(s.obstacles[0]).max(0)
        assert hi[2] == pytest.approx(0.25) and lo[2] == pytest.approx(0.0)
        assert math.isclose(s.obstacles[0].center[0], 3.0)

    def test_overhang_gap(self):
        s = build_eval_terrain(EvalKind.OVERHANGING, EvalTerrainParams(gap=0.6))
        assert s.overhangs[0].underside_z() == pytest.approx(0.6, abs=1e-12)
        assert math.hypot(s.goal[0] - s.spawn[0], s.goal[1] - s.spawn[1]) == pytest.approx(6.0)

    def test_combined_free_space(self):
        s = build_eval_terrain("overhanging_plus_obstacle", EvalTerrainParams(gap=0.7, obstacle_height=0.25))
        qs = build_query(s)
        hit = raycast(qs, [3.0, 0.0, 0.25 + 1e-6], [0, 0, 1])
        assert hit.distance == pytest.approx(0.7 - 0.25, abs=1e-5)

    @pytest.mark.parametrize("bad", [{"corridor_length": 5.0}, {"gap": 0.0}, {"corridor_width": -1.0}])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            build_eval_terrain("overhanging", EvalTerrainParams(**bad))

    def test_non_positive_obstacle(self):
        with pytest.raises(ConfigError):
            build_eval_terrain("obstacle", EvalTerrainParams(obstacle_height=0.0))


class TestExport:
    def test_flat_tile_obj(self, tmp_path):
        ts = build_adjacency([flat_tile(0, 0.0)], 0.05)
        scene = SceneDescription(assemble_mesh(CollapsedGrid(1, 1, [0]), ts))
        path = tmp_path / "t.obj"
        export_obj(scene, path)
        groups, v, f = parse_obj(path.read_text())
        assert groups == ["terrain"] and len(v) == 64 and len(f) == 2 * 49
        assert all(line.endswith(" 0.000000000") for line in path.read_text().splitlines() if line.startswith("v "))
        assert f.min() == 1 and f.max() == 64

    def test_groups_and_indices(self, tmp_path):
        scene = build_eval_terrain("overhanging_plus_obstacle")
        groups, v, f = parse_obj(obj_text(scene))
        assert groups == ["terrain", "obstacle_000", "overhang_000"]
        assert f.max() == len(v)
        np.testing.assert_allclose(v[-8:].min(0)[2], scene.overhangs[0].underside_z(), atol=1e-9)

    def test_nine_decimals_no_negative_zero(self):
        mesh = TriangleMesh([[-0.0, 1e-12, -1e-12], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
        text = obj_text(SceneDescription(mesh))
        assert "v 0.000000000 0.000000000 0.000000000" in text
        assert "-0.000000000" not in text

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            export_obj(SceneDescription(TriangleMesh.empty()), tmp_path / "x.obj")
        with pytest.raises(ConfigError):
            export_scene_json(SceneDescription(TriangleMesh.empty()), tmp_path / "x.json")

    def test_io_error_names_path(self, tmp_path):
        bad = tmp_path / "missing" / "x.obj"
        with pytest.raises(OSError, match="missing"):
            export_obj(build_eval_terrain("obstacle"), bad)

    def test_same_seed_identical_bytes(self, tmp_path, default_library):
        cfg = GenerateConfig(rows=4, cols=4)
        hashes = []
        for k in range(2):
            scene, _, _ = generate_scene(cfg, 77, tileset=default_library)
            export_obj(scene, tmp_path / f"{k}.obj")
            export_scene_json(scene, tmp_path / f"{k}.json")
            hashes.append(tuple(hashlib.sha256((tmp_path / f"{k}.{e}").read_bytes()).hexdigest() for e in ("obj", "json")))
        assert hashes[0] == hashes[1]

    def test_json_round_trip(self, tmp_path):
        scene = build_eval_terrain("overhanging_plus_obstacle")
        export_scene_json(scene, tmp_path / "s.json")
        back = load_scene_json(tmp_path / "s.json")
        assert back.to_json() == scene.to_json()
        assert back.metadata["eval_kind"] == "overhanging_plus_obstacle"


class TestGenerateScene:
    def test_spawn_and_goal_above_terrain(self, default_library):
        scene, grid, _ = generate_scene(GenerateConfig(), 9, tileset=default_library)
        qs = build_query(SceneDescription(scene.terrain))
        for x, y in (scene.spawn[:2], scene.goal):
            assert raycast(qs, [x, y, 10.0], [0, 0, -1]) is not None
        assert scene.metadata["tileset_sha256"] == default_library.digest()
        assert scene.metadata["seed"] == 9

    def test_flat_only(self):
        cfg = GenerateConfig(tile_library=TileLibraryConfig(kinds=("flat",)), rows=3, cols=3,
                             overhangs=OverhangParams(count=(0, 0)))
        scene, _, _ = generate_scene(cfg, 0)
        assert np.all(scene.terrain.vertices[:, 2] == 0.0)

    def test_config_from_dict(self):
        cfg = GenerateConfig.from_dict({"rows": 2, "tile_library": {"n": 6}, "overhangs": {"count": [0, 1]}})
        assert cfg.rows == 2 and cfg.tile_library.n == 6 and cfg.overhangs.count == (0, 1)
        with pytest.raises(ConfigError):
            GenerateConfig.from_dict({"bogus": 1})
