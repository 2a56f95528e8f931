"""Scripted-policy evaluation on corridor scenes.

The robot is a kinematic proxy: a yawed torso box that slides toward the goal
at constant speed while following the averaged ground, with a first-order lag
on body height. An episode fails on the first torso collision or when the
ground ahead rises more than the current height allows the legs to step.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .assembler import EvalKind, EvalTerrainParams, build_eval_terrain
from .errors import ConfigError
from .geometry.queries import GROUND_RADIUS, QueryStructure, collision_mask
from .scene import OrientedBox, SceneDescription, TriangleMesh, yaw_matrix
from .seeding import derive_seed, make_rng

STEP_TOLERANCE = 1e-6
CSV_HEADER = ("policy", "kind", "param", "success_rate", "n")


class Policy(str, Enum):
    HIGH = "high"
    LOW = "low"
    ADAPTIVE = "adaptive_oracle"


@dataclass
class BodyParams:
    length: float = 0.6
    width: float = 0.4
    torso_half_height: float = 0.05
    high_height: float = 0.55
    low_height: float = 0.25
    tau: float = 0.3
    step_limit_high: float = 0.3
    step_limit_low: float = 0.1
    # adaptive oracle: look this far past the body front, keep this much headroom
    lookahead: float = 1.0
    probe_spacing: float = 0.1
    margin: float = 0.05

    def __post_init__(self):
        for name in ("length", "width", "torso_half_height", "tau", "lookahead", "probe_spacing"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.1 <= self.low_height < self.high_height <= 0.6:
            raise ConfigError("need 0.1 <= low_height < high_height <= 0.6")
        if not 0 <= self.step_limit_low <= self.step_limit_high:
            raise ConfigError("need 0 <= step_limit_low <= step_limit_high")
        if self.margin < 0:
            raise ConfigError("margin must be >= 0")

    def step_limit(self, height: float) -> float:
        """Linear between the crouched and standing limits, clamped outside."""
        f = (height - self.low_height) / (self.high_height - self.low_height)
        f = min(max(f, 0.0), 1.0)
        return self.step_limit_low + f * (self.step_limit_high - self.step_limit_low)


@dataclass
class EvalConfig:
    dt: float = 0.02
    speed: float = 0.5
    time_budget: float = 30.0
    goal_tolerance: float = 1e-6
    spawn_jitter: float = 0.3
    yaw_jitter: float = 0.1
    clearance_range: float = 3.0
    body: BodyParams = field(default_factory=BodyParams)

    def __post_init__(self):
        if isinstance(self.body, Mapping):
            self.body = BodyParams(**self.body)
        for name in ("dt", "speed", "time_budget", "clearance_range"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.spawn_jitter < 0 or self.yaw_jitter < 0 or self.goal_tolerance < 0:
            raise ConfigError("jitter and tolerance must be >= 0")


@dataclass
class KinematicBodyState:
    x: float
    y: float
    yaw: float
    height_cmd: float
    height: float
    ground: float = 0.0

    def __post_init__(self):
        if not 0.1 <= self.height <= 0.6:
            raise ConfigError(f"body height {self.height} outside [0.1, 0.6]")

    def torso(self, body: BodyParams) -> OrientedBox:
        return OrientedBox([self.x, self.y, self.ground + self.height],
                           [body.length / 2, body.width / 2, body.torso_half_height], self.yaw)


@dataclass
class EpisodeResult:
    success: bool
    time_to_goal: float | None
    min_clearance: float
    collision_count: int
    reason: str
    steps: int = 0
    trace: list[dict[str, float]] | None = None


class _Episode:
    """Per-scene query structures; every query is batched over the whole path."""

    def __init__(self, scene: SceneDescription, cfg: EvalConfig):
        self.cfg = cfg
        self.full = QueryStructure(scene)
        self.ground = QueryStructure(SceneDescription(scene.terrain, [], list(scene.obstacles)))
        self.ceiling = QueryStructure(SceneDescription(TriangleMesh.empty(), list(scene.overhangs), [])) \
            if scene.overhangs else None
        self.top = float(self.ground.bounds()[1][2]) + 1.0

    def ground_z(self, xy: np.ndarray) -> np.ndarray:
        """Highest ground or obstacle surface below each point; NaN off the terrain."""
        xy = np.asarray(xy, dtype=np.float64)
        flat = xy.reshape(-1, 2)
        origins = np.column_stack([flat, np.full(len(flat), self.top)])
        t, _ = self.ground.cast(origins, np.broadcast_to([0.0, 0.0, -1.0], origins.shape), math.inf)
        return np.where(np.isfinite(t), self.top - t, np.nan).reshape(xy.shape[:-1])

    def up_distance(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        flat = points.reshape(-1, 3)
        if self.ceiling is None:
            return np.full(points.shape[:-1], math.inf)
        t, _ = self.ceiling.cast(flat, np.broadcast_to([0.0, 0.0, 1.0], flat.shape), math.inf)
        return t.reshape(points.shape[:-1])

    def clearance_profile(self, start: np.ndarray, heading: float, s: np.ndarray) -> np.ndarray:
        """Ground-to-ceiling gap at path stations ``s``, minimised across the body width.

        Stations off the terrain count as open.
        """
        b = self.cfg.body
        u = np.array([math.cos(heading), math.sin(heading)])
        left = np.array([-u[1], u[0]])
        across = np.array([-b.width / 2, 0.0, b.width / 2])
        pts = start + s[:, None, None] * u + across[None, :, None] * left
        g = self.ground_z(pts)
        up = self.up_distance(np.concatenate([pts, np.nan_to_num(g)[..., None] + 1e-6], axis=-1))
        return np.where(np.isnan(g), np.inf, up).min(axis=1) + 1e-6


def _body_points(xy: np.ndarray, yaw: np.ndarray, along: np.ndarray, across: np.ndarray) -> np.ndarray:
    """``(K, len(along) * len(across), 2)`` points on a body-aligned lattice."""
    fwd = np.stack([np.cos(yaw), np.sin(yaw)], axis=-1)[:, None, None, :]
    left = np.stack([-np.sin(yaw), np.cos(yaw)], axis=-1)[:, None, None, :]
    pts = xy[:, None, None, :] + along[None, :, None, None] * fwd + across[None, None, :, None] * left
    return pts.reshape(len(xy), -1, 2)


def _commands(policy: Policy, ep: _Episode, start: np.ndarray, heading: float, step_len: float, K: int) -> np.ndarray:
    """Height command per step; the adaptive oracle looks from the body rear to ``lookahead`` past its front."""
    b = ep.cfg.body
    if policy is Policy.HIGH:
        return np.full(K, b.high_height)
    if policy is Policy.LOW:
        return np.full(K, b.low_height)
    back = int(math.ceil(b.length / 2 / step_len))
    ahead = int(math.ceil((b.length / 2 + b.lookahead) / step_len))
    stations = np.arange(-back, K + ahead) * step_len
    gap = ep.clearance_profile(start, heading, stations)
    window = np.lib.stride_tricks.sliding_window_view(gap, back + ahead + 1)[:K].min(axis=1)
    return np.clip(window - b.torso_half_height - b.margin, b.low_height, b.high_height)


def _path(start: np.ndarray, yaw0: float, goal: np.ndarray, step_len: float, max_steps: int):
    """Straight-line positions, one per control step, stopping at the goal."""
    delta = goal - start
    dist = float(np.hypot(*delta))
    n_goal = int(math.ceil(dist / step_len - 1e-9))
    k = np.arange(min(n_goal, max_steps) + 1)
    s = np.minimum(k * step_len, dist)
    xy = start + s[:, None] * (delta / dist)
    yaw = np.full(len(k), math.atan2(delta[1], delta[0]))
    yaw[0] = yaw0
    return xy, yaw, n_goal


def run_episode(scene: SceneDescription, policy: Policy | str, config: EvalConfig | None = None,
                seed: int = 0, trace: bool = False) -> EpisodeResult:
    """Drive the body from spawn to goal under one scripted height policy.

    The planar path does not depend on body height, so ground, clearance and
    collision queries are evaluated for every step at once and the episode
    ends at the first failing step.
    """
    policy = Policy(policy)
    cfg = config or EvalConfig()
    b = cfg.body
    if scene.spawn is None or scene.goal is None:
        raise ConfigError("scene needs spawn and goal")
    goal = np.asarray(scene.goal, dtype=np.float64)
    spawn = np.asarray(scene.spawn[:2], dtype=np.float64)
    if not np.hypot(*(goal - spawn)) > 0:
        raise ConfigError("spawn and goal coincide")
    ep = _Episode(scene, cfg)
    rng = make_rng(seed, 0xE9)
    heading = math.atan2(goal[1] - spawn[1], goal[0] - spawn[0])
    lateral = float(rng.uniform(-cfg.spawn_jitter, cfg.spawn_jitter))
    start = spawn + lateral * np.array([-math.sin(heading), math.cos(heading)])
    yaw0 = heading + float(rng.uniform(-cfg.yaw_jitter, cfg.yaw_jitter))
    max_steps = int(math.floor(cfg.time_budget / cfg.dt + 1e-9))
    xy, yaw, n_goal = _path(start, yaw0, goal, cfg.speed * cfg.dt, max_steps)
    K = len(xy)

    samples = _body_points(xy, yaw, np.array([0.0, GROUND_RADIUS, -GROUND_RADIUS, 0.0, 0.0]), np.zeros(1))
    samples[:, 3] += GROUND_RADIUS * np.stack([-np.sin(yaw), np.cos(yaw)], axis=-1)
    samples[:, 4] -= GROUND_RADIUS * np.stack([-np.sin(yaw), np.cos(yaw)], axis=-1)
    ground = ep.ground_z(samples).mean(axis=1)
    front = xy + (b.length / 2) * np.stack([np.cos(yaw), np.sin(yaw)], axis=-1)
    front_z = ep.ground_z(front)
    cmd = _commands(policy, ep, start, heading, cfg.speed * cfg.dt, K)

    lag = 1.0 - math.exp(-cfg.dt / b.tau)
    height = np.empty(K)
    h = float(cmd[0])
    for k in range(K):
        height[k] = h
        h += (cmd[k] - h) * lag

    off = np.isnan(ground) | np.isnan(front_z)
    g = np.nan_to_num(ground)
    limits = b.step_limit_low + np.clip((height - b.low_height) / (b.high_height - b.low_height), 0, 1) \
        * (b.step_limit_high - b.step_limit_low)
    step_fail = ~off & (np.nan_to_num(front_z) - g > limits + STEP_TOLERANCE)
    centers = np.column_stack([xy, g + height])
    rot = np.stack([yaw_matrix(a) for a in yaw])
    half = np.array([b.length / 2, b.width / 2, b.torso_half_height])
    hit = ~off & collision_mask(ep.full, centers, half, rot)

    fails = [(int(np.argmax(m)), order, name) for order, (m, name) in
             enumerate(((off, "out_of_bounds"), (step_fail, "step"), (hit, "collision"))) if m.any()]
    end = min(fails)[0] if fails else K - 1
    reason = min(fails)[2] if fails else ("goal" if n_goal <= max_steps else "timeout")
    success = reason == "goal"

    hx, hy = b.length / 2, b.width / 2
    corners = _body_points(xy, yaw, np.array([0.0, hx, -hx]), np.array([0.0, hy, -hy]))
    top = (g + height + b.torso_half_height)[:, None, None]
    up = ep.up_distance(np.concatenate([corners, np.broadcast_to(top, corners.shape[:-1] + (1,))], axis=-1))
    n_ok = end if fails else K
    min_clear = float(min(up[:n_ok].min(initial=math.inf), cfg.clearance_range))

    rows = None
    if trace:
        rows = [{"t": k * cfg.dt, "x": float(xy[k, 0]), "y": float(xy[k, 1]), "yaw": float(yaw[k]),
                 "ground": float(ground[k]), "height": float(height[k]), "height_cmd": float(cmd[k])}
                for k in range(end + 1)]
    hit_now = reason == "collision"
    return EpisodeResult(success, end * cfg.dt if success else None, 0.0 if hit_now else min_clear,
                         int(hit_now), reason, end, rows)


# --- sweeps ----------------------------------------------------------------------------


@dataclass
class SuccessGrid:
    policy: Policy
    kind: EvalKind
    values: tuple[float, ...]
    rates: tuple[float, ...]
    n: int

    @property
    def param_name(self) -> str:
        return "obstacle_height" if self.kind is EvalKind.OBSTACLE else "gap"

    def rate_at(self, value: float) -> float:
        for v, r in zip(self.values, self.rates):
            if abs(v - value) < 1e-9:
                return r
        raise KeyError(value)


def _scene_for(kind: EvalKind, value: float, base: EvalTerrainParams) -> SceneDescription:
    p = EvalTerrainParams(**base.__dict__)
    if kind is EvalKind.OBSTACLE:
        p.obstacle_height = value
    else:
        p.gap = value
    return build_eval_terrain(kind, p)


def _task(args) -> bool:
    kind, value, base, policy, cfg, ep_seed = args
    return run_episode(_scene_for(kind, value, base), policy, cfg, ep_seed).success


def _run_tasks(tasks: list, jobs: int) -> list[bool]:
    if jobs <= 1 or len(tasks) < 2:
        return [_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def success_grid(kind: EvalKind | str, values: Sequence[float], seeds_per_cell: int = 3,
                 policies: Iterable[Policy | str] = tuple(Policy), config: EvalConfig | None = None,
                 terrain: EvalTerrainParams | None = None, seed: int = 0, jobs: int = 1) -> dict[Policy, SuccessGrid]:
    """Success rate per parameter value; episode seeds depend on (seed, cell, seed index) only."""
    kind = EvalKind(kind)
    values = tuple(float(v) for v in values)
    policies = tuple(Policy(p) for p in policies)
    if not values or not policies or seeds_per_cell < 1:
        raise ConfigError("need at least one value, one policy and one seed per cell")
    cfg = config or EvalConfig()
    base = terrain or EvalTerrainParams()
    tasks = [(kind, v, base, pol, cfg, derive_seed(seed, ci, si))
             for pol in policies for ci, v in enumerate(values) for si in range(seeds_per_cell)]
    ok = np.asarray(_run_tasks(tasks, jobs), dtype=float).reshape(len(policies), len(values), seeds_per_cell)
    rates = ok.mean(axis=2)
    return {pol: SuccessGrid(pol, kind, values, tuple(float(r) for r in rates[i]), seeds_per_cell)
            for i, pol in enumerate(policies)}


def _frange(lo: float, hi: float, step: float) -> tuple[float, ...]:
    n = int(math.floor((hi - lo) / step + 1e-9))
    return tuple(round(lo + i * step, 10) for i in range(n + 1))


@dataclass
class SweepSpec:
    kind: EvalKind
    values: tuple[float, ...]

    def __post_init__(self):
        self.kind = EvalKind(self.kind)
        self.values = tuple(float(v) for v in self.values)
        if not self.values:
            raise ConfigError("sweep needs at least one value")


def default_sweeps() -> list[SweepSpec]:
    gaps = _frange(0.3, 0.8, 0.05)
    return [SweepSpec(EvalKind.OVERHANGING, gaps),
            SweepSpec(EvalKind.OBSTACLE, _frange(0.05, 0.4, 0.05)),
            SweepSpec(EvalKind.OVERHANGING_PLUS_OBSTACLE, gaps)]


@dataclass
class EvaluateConfig:
    sweeps: list[SweepSpec] = field(default_factory=default_sweeps)
    policies: tuple[Policy, ...] = tuple(Policy)
    seeds_per_cell: int = 3
    eval: EvalConfig = field(default_factory=EvalConfig)
    terrain: EvalTerrainParams = field(default_factory=EvalTerrainParams)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EvaluateConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown evaluate keys: {sorted(unknown)}")
        kw: dict[str, Any] = {}
        try:
            if "sweeps" in d:
                kw["sweeps"] = [SweepSpec(s["kind"], s["values"]) for s in d["sweeps"]]
            if "policies" in d:
                kw["policies"] = tuple(Policy(p) for p in d["policies"])
            if "seeds_per_cell" in d:
                kw["seeds_per_cell"] = int(d["seeds_per_cell"])
            if "eval" in d:
                kw["eval"] = EvalConfig(**d["eval"])
            if "terrain" in d:
                kw["terrain"] = EvalTerrainParams(**d["terrain"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad evaluate config: {exc}") from exc
        if kw.get("seeds_per_cell", 1) < 1:
            raise ConfigError("seeds_per_cell must be >= 1")
        return cls(**kw)


def run_sweeps(cfg: EvaluateConfig, seed: int = 0, jobs: int = 1) -> list[SuccessGrid]:
    """All sweeps as one task batch so parallelism spans sweep boundaries."""
    tasks, layout = [], []
    for si, sw in enumerate(cfg.sweeps):
        sw_seed = derive_seed(seed, 0x5E, si)
        for pol in cfg.policies:
            layout.append((sw, pol))
            for ci, v in enumerate(sw.values):
                for k in range(cfg.seeds_per_cell):
                    tasks.append((sw.kind, v, cfg.terrain, pol, cfg.eval, derive_seed(sw_seed, ci, k)))
    ok = _run_tasks(tasks, jobs)
    grids, pos = [], 0
    n = cfg.seeds_per_cell
    for sw, pol in layout:
        m = len(sw.values) * n
        cell = np.asarray(ok[pos:pos + m], dtype=float).reshape(len(sw.values), n).mean(axis=1)
        grids.append(SuccessGrid(pol, sw.kind, sw.values, tuple(float(r) for r in cell), n))
        pos += m
    return grids


# --- CSV --------------------------------------------------------------------------------


def results_csv_text(grids: Iterable[SuccessGrid]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for g in grids:
        for v, r in zip(g.values, g.rates):
            w.writerow([g.policy.value, g.kind.value, repr(float(v)), repr(float(r)), g.n])
    return buf.getvalue()


def write_results_csv(grids: Iterable[SuccessGrid], path) -> None:
    path = os.fspath(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(results_csv_text(grids))


def read_results_csv(path) -> list[SuccessGrid]:
    with open(os.fspath(path), encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ConfigError(f"{path}: missing or wrong CSV header")
    grids: list[SuccessGrid] = []
    acc: dict[tuple[str, str], list] = {}
    order: list[tuple[str, str]] = []
    for row in rows[1:]:
        pol, kind, param, rate, n = row
        key = (pol, kind)
        if key not in acc:
            acc[key] = [[], [], int(n)]
            order.append(key)
        acc[key][0].append(float(param))
        acc[key][1].append(float(rate))
    for key in order:
        vals, rates, n = acc[key]
        grids.append(SuccessGrid(Policy(key[0]), EvalKind(key[1]), tuple(vals), tuple(rates), n))
    return grids
