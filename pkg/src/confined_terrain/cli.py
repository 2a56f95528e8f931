"""``confined-terrain`` command line.

Exit codes: 0 success, 1 unexpected error, 2 usage or invalid configuration,
3 generation or placement failure, 4 I/O or parse failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .assembler import GenerateConfig, export_obj, export_scene_json, generate_scene
from .errors import ConfigError, GenerationFailed, PlacementError
from .geometry.queries import build_query, fibonacci_pattern, spherical_scan
from .geometry.voxels import voxelize
from .harness import EvaluateConfig, run_sweeps, write_results_csv
from .observations import NoiseParams, corrupt_voxels
from .scene import load_scene_json
from .seeding import make_rng

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_GENERATION, EXIT_IO = 0, 1, 2, 3, 4


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _floats(n: int, name: str):
    def parse(text: str) -> tuple[float, ...]:
        try:
            vals = tuple(float(t) for t in text.split(","))
        except ValueError:
            vals = ()
        if len(vals) != n or not all(np.isfinite(vals)):
            raise argparse.ArgumentTypeError(f"{name} must be {n} comma-separated finite numbers, got {text!r}")
        return vals
    return parse


def _existing_file(text: str) -> Path:
    p = Path(text)
    if not p.is_file():
        raise argparse.ArgumentTypeError(f"no such file: {text}")
    return p


def _jobs(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid job count {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("--jobs must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=_existing_file, help="JSON config file")
    common.add_argument("--seed", type=_seed, default=0, help="64-bit unsigned seed for all randomness (default 0)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default ./out)")
    common.add_argument("--jobs", type=_jobs, default=os.cpu_count() or 1,
                        help="worker processes; results do not depend on it (default: all cores)")

    parser = argparse.ArgumentParser(prog="confined-terrain", description="Confined-space terrain toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sub.add_parser("generate", parents=[common], help="tile library -> WFC -> mesh -> overhangs; writes OBJ + JSON")

    vox = sub.add_parser("voxelize", parents=[common], help="ground-truth and corrupted voxel grids around a pose")
    vox.add_argument("--scene", type=Path, required=True, help="scene JSON")
    vox.add_argument("--pose", type=_floats(4, "--pose"), required=True, help="x,y,z,yaw of the body base")

    scan = sub.add_parser("scan", parents=[common], help="spherical ray scan from a point")
    scan.add_argument("--scene", type=Path, required=True, help="scene JSON")
    scan.add_argument("--origin", type=_floats(3, "--origin"), required=True, help="x,y,z")
    scan.add_argument("--yaw", type=float, default=0.0, help="pattern yaw in radians (default 0)")
    scan.add_argument("--count", type=int, default=64, help="number of rays (default 64)")
    scan.add_argument("--max-range", type=float, default=3.0, help="metres (default 3.0)")

    sub.add_parser("evaluate", parents=[common], help="success-rate sweeps for the scripted policies; writes CSV")
    return parser


def _load_config(path: Path | None) -> dict[str, Any]:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


class InputError(Exception):
    """Unreadable or unparsable input file."""


def _load_scene(path: Path):
    try:
        return load_scene_json(path)
    except ConfigError as exc:
        raise InputError(f"{path}: {exc}") from None


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(args, out: Path, outputs: list[Path], extra: dict[str, Any] | None = None) -> None:
    manifest = {
        "command": args.command,
        "seed": args.seed,
        "config": None if args.config is None else {"path": str(args.config), "sha256": _sha256(args.config)},
        "outputs": {p.name: _sha256(p) for p in outputs},
        "versions": {"confined_terrain": __version__, "numpy": np.__version__, "python": platform.python_version()},
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def cmd_generate(args, cfg: dict[str, Any]) -> list[Path]:
    gen = GenerateConfig.from_dict(cfg)
    scene, grid, tileset = generate_scene(gen, args.seed)
    obj, js = args.out / "scene.obj", args.out / "scene.json"
    export_obj(scene, obj)
    export_scene_json(scene, js)
    lo, hi = scene.terrain.bounds()
    print(f"tiles: {len(tileset.tiles)}  grid: {grid.rows}x{grid.cols}  restarts: {grid.restart_count}  "
          f"overhangs: {len(scene.overhangs)}")
    print(f"bounds: [{lo[0]:.3f}, {lo[1]:.3f}, {lo[2]:.3f}] .. [{hi[0]:.3f}, {hi[1]:.3f}, {hi[2]:.3f}]")
    return [obj, js]


def cmd_voxelize(args, cfg: dict[str, Any]) -> list[Path]:
    unknown = set(cfg) - {"noise"}
    if unknown:
        raise ConfigError(f"unknown voxelize keys: {sorted(unknown)}")
    noise = NoiseParams.from_dict(cfg.get("noise", {}))
    scene = _load_scene(args.scene)
    gt = voxelize(build_query(scene), args.pose)
    noisy = corrupt_voxels(gt, noise, make_rng(args.seed, 0x70))
    paths = []
    for name, grid in (("voxels_gt", gt), ("voxels_noisy", noisy)):
        b, j = args.out / f"{name}.bin", args.out / f"{name}.json"
        b.write_bytes(grid.to_bytes())
        j.write_text(grid.to_json() + "\n", encoding="utf-8")
        paths += [b, j]
    print(f"occupied: ground truth {gt.count}, corrupted {noisy.count}")
    return paths


def cmd_scan(args, cfg: dict[str, Any]) -> list[Path]:
    if cfg:
        raise ConfigError("scan takes no config keys")
    scene = _load_scene(args.scene)
    pattern = fibonacci_pattern(args.count, args.max_range)
    dist = spherical_scan(build_query(scene), args.origin, pattern, args.yaw)
    out = args.out / "scan.json"
    doc = {"origin": list(args.origin), "yaw": args.yaw, "max_range": pattern.max_range,
           "directions": pattern.directions.tolist(), "distances": dist.tolist()}
    out.write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")
    print(f"rays: {pattern.count}  min: {dist.min():.3f}  max: {dist.max():.3f}")
    return [out]


def cmd_evaluate(args, cfg: dict[str, Any]) -> list[Path]:
    ecfg = EvaluateConfig.from_dict(cfg)
    grids = run_sweeps(ecfg, seed=args.seed, jobs=args.jobs)
    out = args.out / "results.csv"
    write_results_csv(grids, out)
    for g in grids:
        print(f"{g.policy.value:16s} {g.kind.value:26s} mean success {np.mean(g.rates):.2f}")
    return [out]


COMMANDS = {"generate": cmd_generate, "voxelize": cmd_voxelize, "scan": cmd_scan, "evaluate": cmd_evaluate}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        args.out.mkdir(parents=True, exist_ok=True)
        outputs = COMMANDS[args.command](args, cfg)
        _write_manifest(args, args.out, outputs)
    except (GenerationFailed, PlacementError) as exc:
        print(f"error: generation failed: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
