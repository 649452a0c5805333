"""Episodic grid-world object-goal navigation.

The agent senses by ray casting on the complete scene (perfect semantics,
optional room-label corruption), accumulates a live semantic map, picks a
long-term goal from fused oracle potentials on the live frontiers, and
steers greedily down an FMM distance field with discrete actions.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numba
import numpy as np
from scipy import ndimage

from . import metrics
from .dataset import DEFAULT_D_MAX, navigable_mask, obstacle_mask, room_index, target_distance
from .fmm import _los, erode_traversable, footprint_field, geodesic_field
from .grid import ChannelSpec, GridStack, Pose2D, channel_name, new_grid, normalize_angle, \
    semantic_channel_specs
from .knowledge.matrix import O2RMatrix
from .nav import FusionConfig, fuse_potentials, oracle_potentials, select_goal
from .scene import SceneLayout, rasterize_scene

ACTIONS = ("move_forward", "turn_left", "turn_right", "stop")
FAILURE_REASONS = ("timeout", "stop-too-far", "no-frontier-exhausted")


class ProtocolError(RuntimeError):
    """Action issued after the episode stopped."""


class UnsatisfiableEpisode(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    forward_step: float = 0.25
    turn_angle_deg: float = 30.0
    fov_deg: float = 90.0
    sensing_range: float = 5.0
    max_steps: int = 500
    success_radius: float = 1.0
    agent_radius: float = 0.18
    d_max: float = DEFAULT_D_MAX
    room_noise: float = 0.0
    initial_spin: bool = False
    stop_margin: float = 0.85

    def __post_init__(self):
        checks = {
            "forward_step": 0 < self.forward_step <= 2.0,
            "turn_angle_deg": 0 < self.turn_angle_deg <= 180.0,
            "fov_deg": 0 < self.fov_deg <= 360.0,
            "sensing_range": 0 < self.sensing_range <= 100.0,
            "max_steps": int(self.max_steps) >= 1,
            "success_radius": self.success_radius > 0,
            "agent_radius": self.agent_radius >= 0,
            "d_max": self.d_max > 0,
            "room_noise": 0.0 <= self.room_noise <= 1.0,
            "stop_margin": 0 < self.stop_margin <= 1.0,
        }
        for name, ok in checks.items():
            if not ok:
                raise ValueError(f"sim parameter {name}={getattr(self, name)!r} is out of bounds")

    @property
    def turn_angle(self) -> float:
        return math.radians(self.turn_angle_deg)

    @classmethod
    def from_json(cls, doc) -> "SimConfig":
        names = cls.__dataclass_fields__
        unknown = set(doc) - set(names)
        if unknown:
            raise ValueError(f"unknown sim parameters: {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class EpisodeSpec:
    scene_id: str
    start: Pose2D
    target: str
    seed: int = 0
    max_steps: int = 500
    success_radius: float = 1.0

    def __post_init__(self):
        if int(self.max_steps) < 1:
            raise ValueError("max_steps must be >= 1")

    def to_json(self) -> dict:
        return {"scene": self.scene_id, "start": [self.start.x, self.start.y, self.start.theta],
                "target": self.target, "seed": self.seed, "max_steps": self.max_steps,
                "success_radius": self.success_radius}

    @classmethod
    def from_json(cls, doc) -> "EpisodeSpec":
        x, y, th = doc["start"]
        return cls(str(doc["scene"]), Pose2D(float(x), float(y), float(th)), str(doc["target"]),
                   int(doc.get("seed", 0)), int(doc.get("max_steps", 500)),
                   float(doc.get("success_radius", 1.0)))


@dataclass
class EpisodeResult:
    scene_id: str
    target: str
    seed: int
    success: bool
    path_length: float
    optimal_length: float
    steps: int
    stop_issued: bool
    failure_reason: str | None
    collisions: int = 0
    final_distance: float = math.inf
    trajectory: list = field(default_factory=list, repr=False)

    @property
    def spl(self) -> float:
        return metrics.spl_term(self.success, self.path_length, self.optimal_length)

    def to_json(self, with_trajectory: bool = False) -> dict:
        d = asdict(self)
        if not with_trajectory:
            d.pop("trajectory")
        if not math.isfinite(d["final_distance"]):
            d["final_distance"] = None
        return d

    @classmethod
    def from_json(cls, doc) -> "EpisodeResult":
        doc = dict(doc)
        if doc.get("final_distance") is None:
            doc["final_distance"] = math.inf
        doc.setdefault("trajectory", [])
        return cls(**doc)


@dataclass
class SceneSim:
    """Precomputed ground truth shared by every episode in one scene."""

    scene: GridStack
    traversable: np.ndarray
    room_idx: np.ndarray
    room_names: list[str]
    object_idx: np.ndarray
    object_names: list[str]
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, scene, agent_radius: float = 0.18, resolution: float | None = None) -> "SceneSim":
        if isinstance(scene, SceneLayout):
            scene = rasterize_scene(scene, resolution)
        occ = obstacle_mask(scene)
        trav = erode_traversable(occ, agent_radius, scene.resolution)
        ridx, rnames = room_index(scene)
        specs = scene.find("object")
        oidx = np.full(scene.shape, -1, dtype=np.int32)
        for k, s in enumerate(specs):
            oidx[scene[s.name] > 0.5] = k
        return cls(scene, trav, ridx, rnames, oidx, [s.category for s in specs])

    @property
    def id(self):
        return self.scene.meta.get("scene_id")

    @property
    def resolution(self) -> float:
        return self.scene.resolution

    @property
    def occupancy(self) -> np.ndarray:
        return obstacle_mask(self.scene)

    def instances(self, target: str) -> np.ndarray:
        name = channel_name("object", target)
        if name not in self.scene:
            raise UnsatisfiableEpisode(f"unknown target category {target!r}")
        return self.scene[name] > 0.5

    def instance_distance(self, target: str) -> np.ndarray:
        """True geodesic distance (free space, no erosion) to the nearest instance."""
        key = ("inst", target)
        if key not in self._cache:
            inst = self.instances(target)
            if not inst.any():
                self._cache[key] = np.full(self.scene.shape, np.inf)
            else:
                self._cache[key] = footprint_field(self.occupancy, inst, self.resolution).values
        return self._cache[key]

    def potential_distance(self, target: str, success_radius: float) -> np.ndarray:
        key = ("pot", target, success_radius)
        if key not in self._cache:
            self._cache[key] = target_distance(self.scene, target, success_radius)
        return self._cache[key]

    def goal_region(self, target: str, success_radius: float) -> np.ndarray:
        return self.traversable & (self.instance_distance(target) < success_radius)


def optimal_length(sim: SceneSim, start: Pose2D, target: str, success_radius: float = 1.0,
                   forward_step: float = 0.25) -> float:
    """Geodesic distance (agent-radius eroded space) from ``start`` to the union
    of success circles; clamped to ``forward_step`` when already inside."""
    region = sim.goal_region(target, success_radius)
    if not region.any():
        raise UnsatisfiableEpisode(f"no reachable success circle for {target!r}")
    r, c = start.cell(sim.resolution)
    if not (0 <= r < sim.scene.height and 0 <= c < sim.scene.width) or not sim.traversable[r, c]:
        raise UnsatisfiableEpisode(f"start pose {start} is not navigable")
    if region[r, c]:
        return float(forward_step)
    d = geodesic_field(~sim.traversable, region, sim.resolution, traversable=sim.traversable).value((r, c))
    if not math.isfinite(d):
        raise UnsatisfiableEpisode(f"no success circle of {target!r} is reachable from {start}")
    return max(d, float(forward_step))


@numba.njit(cache=True)
def _cast(occ, r0, c0, x, y, theta, fov, max_range, res):
    H, W = occ.shape
    vis = np.zeros((H, W), dtype=np.bool_)
    vis[r0, c0] = True
    n_rays = int(fov * max_range / (0.5 * res)) + 1
    step = 0.25 * res
    n_steps = int(max_range / step)
    for k in range(n_rays):
        if n_rays == 1:
            a = theta
        elif fov >= 2 * np.pi - 1e-9:
            a = theta + 2 * np.pi * k / n_rays
        else:
            a = theta - fov / 2 + fov * k / (n_rays - 1)
        ca = np.cos(a)
        sa = np.sin(a)
        for s in range(1, n_steps + 1):
            px = x + ca * s * step
            py = y + sa * s * step
            c = int(np.floor(px / res))
            r = int(np.floor(py / res))
            if r < 0 or r >= H or c < 0 or c >= W:
                break
            vis[r, c] = True
            if occ[r, c]:
                break
    return vis


@dataclass
class Observation:
    visible: np.ndarray
    room_labels: np.ndarray  # room index per cell (-1 none), only meaningful where visible


def sense(pose: Pose2D, sim: SceneSim, cfg: SimConfig, rng: np.random.Generator | None = None) -> Observation:
    """Ray-cast visibility within the field of view and sensing range.  Obstacle
    cells hit by a ray are visible; nothing behind them is."""
    r, c = pose.cell(sim.resolution)
    vis = _cast(np.ascontiguousarray(sim.occupancy), r, c, pose.x, pose.y, pose.theta,
                math.radians(cfg.fov_deg), cfg.sensing_range, sim.resolution)
    rooms = sim.room_idx
    if cfg.room_noise > 0 and rng is not None and len(sim.room_names) > 1:
        rooms = rooms.copy()
        for k in np.unique(rooms[vis]):
            if k >= 0 and rng.random() < cfg.room_noise:
                other = int(rng.integers(len(sim.room_names) - 1))
                rooms[vis & (sim.room_idx == k)] = other + (other >= k)
    return Observation(vis, rooms)


@dataclass
class AgentState:
    pose: Pose2D
    live_map: GridStack
    step_count: int = 0
    trajectory: list = field(default_factory=list)
    collision_count: int = 0
    stopped: bool = False


def new_live_map(sim: SceneSim) -> GridStack:
    specs = semantic_channel_specs(sim.object_names)
    specs += [ChannelSpec("room", category=r) for r in sim.room_names]
    g = new_grid(sim.scene.height, sim.scene.width, sim.resolution, specs)
    g.meta = {"scene_id": sim.id, "kind": "live"}
    return g


def new_state(sim: SceneSim, start: Pose2D) -> AgentState:
    return AgentState(start, new_live_map(sim), trajectory=[(start.x, start.y, start.theta)])


def update_map(state: AgentState, obs: Observation, sim: SceneSim) -> AgentState:
    """Copy the visible cells of the scene into the live map."""
    g = state.live_map
    vis = obs.visible
    g.data[g.index("explored")][vis] = 1.0
    g.data[g.index("obstacle")][vis] = sim.occupancy[vis]
    n_obj = len(sim.object_names)
    base = 2
    for k in range(n_obj):
        g.data[base + k][vis] = sim.object_idx[vis] == k
    rbase = base + n_obj
    labels = obs.room_labels[vis]
    for k in range(len(sim.room_names)):
        g.data[rbase + k][vis] = labels == k
    return state


def step_action(state: AgentState, action: str, sim: SceneSim, cfg: SimConfig) -> AgentState:
    if state.stopped:
        raise ProtocolError(f"action {action!r} issued after stop")
    if action not in ACTIONS:
        raise ValueError(f"unknown action {action!r}")
    p = state.pose
    if action == "move_forward":
        nx = p.x + cfg.forward_step * math.cos(p.theta)
        ny = p.y + cfg.forward_step * math.sin(p.theta)
        r0, c0 = p.cell(sim.resolution)
        r1, c1 = int(math.floor(ny / sim.resolution)), int(math.floor(nx / sim.resolution))
        H, W = sim.traversable.shape
        ok = 0 <= r1 < H and 0 <= c1 < W and sim.traversable[r1, c1] and \
            _los(sim.traversable, r0, c0, r1, c1)
        if ok:
            state.pose = Pose2D(nx, ny, p.theta)
        else:
            state.collision_count += 1
    elif action == "turn_left":
        state.pose = Pose2D(p.x, p.y, p.theta - cfg.turn_angle)
    elif action == "turn_right":
        state.pose = Pose2D(p.x, p.y, p.theta + cfg.turn_angle)
    else:
        state.stopped = True
    state.step_count += 1
    state.trajectory.append((state.pose.x, state.pose.y, state.pose.theta))
    return state


def trajectory_length(trajectory) -> float:
    if len(trajectory) < 2:
        return 0.0
    xy = np.asarray(trajectory, dtype=float)[:, :2]
    return float(np.hypot(*np.diff(xy, axis=0).T).sum())


class _Controller:
    """Greedy descent on a goal distance field with the discrete action set."""

    def __init__(self, sim: SceneSim, cfg: SimConfig):
        self.sim = sim
        self.cfg = cfg
        self.n_headings = max(1, int(round(2 * math.pi / cfg.turn_angle)))

    def action(self, pose: Pose2D, field_values: np.ndarray, plan_trav: np.ndarray) -> str:
        res = self.sim.resolution
        H, W = field_values.shape
        r0, c0 = pose.cell(res)
        here = field_values[r0, c0]
        best = None
        for k in range(self.n_headings):
            turns = k if k <= self.n_headings // 2 else k - self.n_headings
            th = pose.theta + turns * self.cfg.turn_angle
            nx = pose.x + self.cfg.forward_step * math.cos(th)
            ny = pose.y + self.cfg.forward_step * math.sin(th)
            r1, c1 = int(math.floor(ny / res)), int(math.floor(nx / res))
            if not (0 <= r1 < H and 0 <= c1 < W) or not plan_trav[r1, c1]:
                continue
            if not _los(plan_trav, r0, c0, r1, c1):
                continue
            v = field_values[r1, c1]
            if not math.isfinite(v):
                continue
            cost = v + 0.02 * abs(turns)
            if best is None or cost < best[0]:
                best = (cost, turns, v)
        if best is None or not best[2] < here:
            return "turn_left"
        if best[1] == 0:
            return "move_forward"
        return "turn_right" if best[1] > 0 else "turn_left"


def _live_known_free(live: GridStack) -> np.ndarray:
    return (live["explored"] > 0.5) & (live["obstacle"] < 0.5)


def run_episode(spec: EpisodeSpec, policy: FusionConfig, matrix: O2RMatrix, sim: SceneSim,
                cfg: SimConfig | None = None, record: bool = False) -> EpisodeResult:
    """Sense, map, pick a long-term goal, move; stop only inside the success circle."""
    cfg = cfg or SimConfig()
    L = optimal_length(sim, spec.start, spec.target, spec.success_radius, cfg.forward_step)
    rng = np.random.default_rng(spec.seed)
    res = sim.resolution
    state = new_state(sim, spec.start)
    ctrl = _Controller(sim, cfg)
    tname = channel_name("object", spec.target)
    pot_dist = sim.potential_distance(spec.target, spec.success_radius)
    goal = None
    since_goal = 0
    spin_left = ctrl.n_headings - 1 if cfg.initial_spin else 0
    failure = None
    snapshots = []

    update_map(state, sense(state.pose, sim, cfg, rng), sim)
    while state.step_count < spec.max_steps:
        live = state.live_map
        cell = state.pose.cell(res)
        if spin_left > 0:
            spin_left -= 1
            action = "turn_right"
        else:
            plan_trav = erode_traversable(live["obstacle"] > 0.5, cfg.agent_radius, res)
            plan_trav[cell] = True
            action = _approach_action(state, live, tname, spec, cfg, ctrl, plan_trav)
        if action is None:
            fv = None
            for _ in range(2):
                if goal is None or since_goal >= policy.interval:
                    pots = oracle_potentials(live["explored"] > 0.5, sim.scene, matrix, spec.target,
                                             cfg.d_max, pot_dist, room_map=live)
                    fused = fuse_potentials(pots.object, pots.area, pots.o2r, policy, pots.frontiers.mask)
                    goal = _choose_goal(fused, pots.frontiers.mask, live["explored"] > 0.5, plan_trav,
                                        cell, policy, res)
                    since_goal = 0
                    if record:
                        snapshots.append({"step": state.step_count, "goal": goal, "object": pots.object,
                                          "area": pots.area, "o2r": pots.o2r, "fused": fused})
                if goal is None:
                    break
                fv = geodesic_field(~plan_trav, [goal], res, traversable=plan_trav, stop_at=[cell],
                                    stop_slack=cfg.forward_step + 2 * res).values
                if math.isfinite(fv[cell]) and _still_frontier(goal, live):
                    break
                goal, fv = None, None
            if goal is None:
                failure = "no-frontier-exhausted"
                break
            since_goal += 1
            action = ctrl.action(state.pose, fv, plan_trav)
        step_action(state, action, sim, cfg)
        if state.stopped:
            break
        update_map(state, sense(state.pose, sim, cfg, rng), sim)

    final = sim.instance_distance(spec.target)[state.pose.cell(res)]
    success = bool(state.stopped and final < spec.success_radius)
    if not success and failure is None:
        failure = "stop-too-far" if state.stopped else "timeout"
    result = EpisodeResult(
        scene_id=spec.scene_id, target=spec.target, seed=spec.seed, success=success,
        path_length=trajectory_length(state.trajectory), optimal_length=L, steps=state.step_count,
        stop_issued=state.stopped, failure_reason=None if success else failure,
        collisions=state.collision_count, final_distance=float(final),
        trajectory=[list(p) for p in state.trajectory],
    )
    if record:
        result.snapshots = snapshots  # type: ignore[attr-defined]
        result.live_map = state.live_map  # type: ignore[attr-defined]
    return result


def _approach_action(state, live, tname, spec, cfg, ctrl, plan_trav):
    """Once the target is on the live map: stop if a path through known free
    cells reaches it within the margin, else head for such a cell.  None when
    no approach is possible yet (keep exploring)."""
    seen = live[tname] > 0.5
    if not seen.any():
        return None
    res = live.resolution
    cell = state.pose.cell(res)
    reach = spec.success_radius * cfg.stop_margin
    known = _live_known_free(live)
    known_d = footprint_field(~known, seen, res, traversable=known, max_distance=reach).values
    if known_d[cell] < reach:
        return "stop"
    region = plan_trav & (known_d < reach)
    if not region.any():
        optimistic = footprint_field(live["obstacle"] > 0.5, seen, res, max_distance=reach).values
        region = plan_trav & (optimistic < reach)
    if not region.any():
        return None
    fv = geodesic_field(~plan_trav, region, res, traversable=plan_trav, stop_at=[cell],
                        stop_slack=cfg.forward_step + 2 * res).values
    if not math.isfinite(fv[cell]):
        return None
    return ctrl.action(state.pose, fv, plan_trav)


def _choose_goal(fused, frontier_mask, explored, plan_trav, cell, policy, res):
    """Best reachable frontier cell (nearest among equals).  Without one, the
    nearest reachable unexplored cell serves as a pseudo-goal; None when
    nothing is left to explore."""
    labels, _ = ndimage.label(plan_trav)
    comp = labels == labels[cell]
    cand = frontier_mask & comp
    if cand.any():
        best = cand & (fused == fused[cand].max())
        # FMM reachability equals 4-connectivity, so the march reaches ``best``
        agent_d = geodesic_field(~plan_trav, [cell], res, traversable=plan_trav, stop_at=best).values
        return select_goal(fused, cand, agent_d, policy)
    hidden = ~explored & comp
    if not hidden.any():
        return None
    agent_d = geodesic_field(~plan_trav, [cell], res, traversable=plan_trav, stop_at=hidden).values
    d = np.where(hidden, agent_d, np.inf)
    return divmod(int(np.argmin(d)), d.shape[1])


def _still_frontier(goal, live: GridStack) -> bool:
    r, c = goal
    explored = live["explored"] > 0.5
    if not explored[r, c]:
        return True
    win = explored[max(0, r - 1):r + 2, max(0, c - 1):c + 2]
    return not win.all()


# ---------------------------------------------------------------- batches


def sample_episodes(layouts: Sequence[SceneLayout], targets: Sequence[str], n: int, seed: int,
                    cfg: SimConfig | None = None, min_distance: float = 1.0,
                    resolution: float | None = None, sims: dict | None = None) -> list[EpisodeSpec]:
    """Satisfiable episodes: scene and target drawn in turn, start uniform over
    eroded free cells that reach the target with geodesic >= ``min_distance``."""
    cfg = cfg or SimConfig()
    rng = np.random.default_rng(seed)
    sims = sims if sims is not None else {}
    specs: list[EpisodeSpec] = []
    pairs = [(lay, t) for lay in layouts for t in targets if any(o.category == t for o in lay.objects)]
    if not pairs:
        raise UnsatisfiableEpisode("no scene contains any requested target")
    attempts = 0
    while len(specs) < n:
        attempts += 1
        if attempts > 50 * n + 100:
            raise UnsatisfiableEpisode("could not sample enough satisfiable episodes")
        lay, t = pairs[len(specs) % len(pairs)] if attempts <= n else pairs[int(rng.integers(len(pairs)))]
        if lay.id not in sims:
            sims[lay.id] = SceneSim.build(lay, cfg.agent_radius, resolution)
        sim = sims[lay.id]
        region = sim.goal_region(t, cfg.success_radius)
        if not region.any():
            continue
        key = ("startfield", t)
        if key not in sim._cache:
            sim._cache[key] = geodesic_field(~sim.traversable, region, sim.resolution,
                                             traversable=sim.traversable).values
        d = sim._cache[key]
        cand = np.argwhere(np.isfinite(d) & (d >= min_distance))
        if len(cand) == 0:
            continue
        r, c = cand[rng.integers(len(cand))]
        theta = normalize_angle(float(rng.integers(12)) * math.pi / 6)
        x, y = (c + 0.5) * sim.resolution, (r + 0.5) * sim.resolution
        specs.append(EpisodeSpec(lay.id, Pose2D(x, y, theta), t, int(rng.integers(2 ** 31)),
                                 cfg.max_steps, cfg.success_radius))
    return specs


def save_episodes(specs: Sequence[EpisodeSpec], path) -> None:
    Path(path).write_text(json.dumps([s.to_json() for s in specs], indent=1) + "\n")


def load_episodes(path) -> list[EpisodeSpec]:
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, list):
        raise ValueError("episode file must hold a JSON list")
    return [EpisodeSpec.from_json(d) for d in doc]


_WORKER: dict = {}


def _init_worker(layouts, matrix, cfg, policy, resolution):
    _WORKER.update(layouts={l.id: l for l in layouts}, matrix=matrix, cfg=cfg, policy=policy,
                   resolution=resolution, sims={})


def _run_one(spec: EpisodeSpec) -> EpisodeResult:
    w = _WORKER
    if spec.scene_id not in w["sims"]:
        w["sims"][spec.scene_id] = SceneSim.build(w["layouts"][spec.scene_id], w["cfg"].agent_radius,
                                                  w["resolution"])
    return run_episode(spec, w["policy"], w["matrix"], w["sims"][spec.scene_id], w["cfg"])


def run_batch(specs: Sequence[EpisodeSpec], policy: FusionConfig, matrix: O2RMatrix,
              layouts: Sequence[SceneLayout], cfg: SimConfig | None = None, parallelism: int = 1,
              resolution: float | None = None, label: str = "", seed=None,
              with_trajectory: bool = False) -> dict:
    """Run every episode; results come back in spec order whatever the parallelism."""
    cfg = cfg or SimConfig()
    known = {l.id for l in layouts}
    for s in specs:
        if s.scene_id not in known:
            raise UnsatisfiableEpisode(f"episode references unknown scene {s.scene_id!r}")
    args = (list(layouts), matrix, cfg, policy, resolution)
    if parallelism > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=parallelism, initializer=_init_worker, initargs=args) as pool:
            results = list(pool.map(_run_one, specs, chunksize=1))
    else:
        _init_worker(*args)
        try:
            results = [_run_one(s) for s in specs]
        finally:
            _WORKER.clear()
    return make_report(results, policy=policy, cfg=cfg, label=label, seed=seed,
                       with_trajectory=with_trajectory)


def make_report(results: Sequence[EpisodeResult], policy: FusionConfig | None = None,
                cfg: SimConfig | None = None, label: str = "", seed=None,
                with_trajectory: bool = False) -> dict:
    results = list(results)
    cats = sorted({r.target for r in results})
    report = {
        "label": label,
        "episodes": len(results),
        "summary": metrics.summarize(results),
        "per_category": {c: metrics.summarize([r for r in results if r.target == c]) for c in cats},
        "results": [r.to_json(with_trajectory) for r in results],
    }
    if policy is not None:
        report["fusion"] = policy.to_json()
    if cfg is not None:
        report["sim"] = asdict(cfg)
    if seed is not None:
        report["seed"] = seed
    return report


def format_table(reports: Sequence[dict]) -> str:
    """Plain-text SR/SPL table: one row per report, then per-category rows."""
    lines = [f"{'config':<24} {'category':<14} {'N':>5} {'SR':>7} {'SPL':>7}"]
    for rep in reports:
        label = rep.get("label") or "run"
        rows = [("all", rep["summary"])] + sorted(rep.get("per_category", {}).items())
        for cat, s in rows:
            lines.append(f"{label:<24} {cat:<14} {s['n']:>5} {metrics.fmt(s['sr']):>7} "
                         f"{metrics.fmt(s['spl']):>7}")
    return "\n".join(lines)
