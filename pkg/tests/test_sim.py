import math

import numpy as np
import pytest

from o2rnav.fmm import erode_traversable
from o2rnav.grid import ChannelSpec, Pose2D, new_grid
from o2rnav.knowledge import bundled_matrix
from o2rnav.nav import FusionConfig
from o2rnav.scene import SceneParams, generate_scene
from o2rnav.sim import (EpisodeResult, EpisodeSpec, ProtocolError, SceneSim, SimConfig, UnsatisfiableEpisode,
                        load_episodes, make_report, new_state, optimal_length, run_batch, run_episode,
                        sample_episodes, save_episodes, sense, step_action, trajectory_length, update_map)

from oracles import dijkstra16

RES = 0.1
MATRIX = bundled_matrix()


def grid_scene(H, W, walls=(), beds=(), room="bedroom"):
    g = new_grid(H, W, RES, [ChannelSpec("occupancy", "obstacle"), ChannelSpec("object", category="bed"),
                             ChannelSpec("room", category=room)])
    occ = np.zeros((H, W), bool)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    for sl in walls:
        occ[sl] = True
    for sl in beds:
        occ[sl] = True
        g["object_bed"][sl] = 1
    g["obstacle"][:] = occ
    g["room_" + room][:] = ~occ
    g.meta = {"scene_id": "fixture"}
    return SceneSim.build(g, 0.18)


def at(r, c, theta=0.0):
    return Pose2D((c + 0.5) * RES, (r + 0.5) * RES, theta)


# ---------------------------------------------------------------- sensing


def test_wall_ahead_limits_view():
    sim = grid_scene(40, 40, walls=[np.s_[5:35, 23]])
    obs = sense(at(20, 20), sim, SimConfig())
    assert obs.visible[20, 23]  # the wall face itself is seen
    assert not obs.visible[:, 24:].any()
    assert obs.visible[20, 21:23].all()


def test_full_circle_view_is_range_disk():
    sim = grid_scene(80, 80)
    cfg = SimConfig(fov_deg=360, sensing_range=2.0)
    obs = sense(at(40, 40), sim, cfg)
    rr, cc = np.mgrid[:80, :80]
    d = np.hypot(rr - 40, cc - 40) * RES
    assert obs.visible[d < 2.0 - RES].all()
    assert not obs.visible[d > 2.0 + RES].any()


def test_object_behind_wall_is_hidden():
    sim = grid_scene(40, 40, walls=[np.s_[1:39, 25]], beds=[np.s_[19:22, 30:33]])
    state = new_state(sim, at(20, 20))
    update_map(state, sense(state.pose, sim, SimConfig()), sim)
    assert not state.live_map["object_bed"].any()


def test_update_map_idempotent_union_and_labels():
    sim = grid_scene(40, 40, beds=[np.s_[19:22, 30:33]])
    cfg = SimConfig()
    east = sense(at(20, 20, 0.0), sim, cfg)
    west = sense(at(20, 20, math.pi), sim, cfg)
    s = new_state(sim, at(20, 20))
    update_map(s, east, sim)
    once = s.live_map.data.copy()
    update_map(s, east, sim)
    assert np.array_equal(once, s.live_map.data)
    update_map(s, west, sim)
    assert np.array_equal(s.live_map["explored"] > 0.5, east.visible | west.visible)
    assert (s.live_map["object_bed"][19:22, 30] == 1).all()
    assert (s.live_map["room_bedroom"][east.visible & ~sim.occupancy] == 1).all()


# ---------------------------------------------------------------- kinematics


def test_step_action_rules():
    sim = grid_scene(20, 20)
    cfg = SimConfig()
    s = new_state(sim, at(10, 10))
    step_action(s, "move_forward", sim, cfg)
    assert s.pose.x == pytest.approx(1.05 + 0.25) and s.pose.y == pytest.approx(1.05)
    for _ in range(12):
        step_action(s, "turn_left", sim, cfg)
    assert math.isclose(math.cos(s.pose.theta), 1.0, abs_tol=1e-9)
    blocked = new_state(sim, at(10, 17))  # 0.25 m ahead lies inside the eroded wall margin
    step_action(blocked, "move_forward", sim, cfg)
    assert blocked.pose == at(10, 17) and blocked.collision_count == 1
    step_action(s, "stop", sim, cfg)
    with pytest.raises(ProtocolError):
        step_action(s, "turn_left", sim, cfg)
    assert s.step_count == 14 and len(s.trajectory) == 15


# ---------------------------------------------------------------- optimal length


def test_optimal_length_corridor():
    sim = grid_scene(12, 70, beds=[np.s_[1:11, 55:57]])
    assert optimal_length(sim, at(6, 6), "bed") == pytest.approx(4.0, rel=0.05)
    assert optimal_length(sim, at(6, 50), "bed") == 0.25  # inside the success circle


def test_optimal_length_takes_nearer_geodesic_instance():
    # bed A is 1.5 m away straight-line but behind a wall; bed B is farther but open
    sim = grid_scene(40, 60, walls=[np.s_[1:30, 30]], beds=[np.s_[10:13, 33:36], np.s_[35:38, 5:8]])
    start = at(11, 20)
    L = optimal_length(sim, start, "bed")
    trav = sim.traversable
    per = []
    for inst in (np.s_[10:13, 33:36], np.s_[35:38, 5:8]):
        one = np.zeros_like(trav)
        one[inst] = True
        from o2rnav.fmm import footprint_field
        region = trav & (footprint_field(sim.occupancy, one, RES).values < 1.0)
        per.append(dijkstra16(trav, [tuple(c) for c in np.argwhere(region)], RES)[11, 20])
    assert L == pytest.approx(min(per), rel=0.031)
    assert per[1] < per[0]


def test_sealed_target_is_unsatisfiable():
    walls = [np.s_[25, 25:39], np.s_[25:39, 25]]
    sim = grid_scene(40, 40, walls=walls, beds=[np.s_[31:33, 31:33]])
    with pytest.raises(UnsatisfiableEpisode):
        optimal_length(sim, at(10, 10), "bed")
    with pytest.raises(UnsatisfiableEpisode):
        run_episode(EpisodeSpec("fixture", at(10, 10), "bed"), FusionConfig(), MATRIX, sim)


# ---------------------------------------------------------------- episodes


def test_near_visible_target_succeeds_quickly():
    sim = grid_scene(30, 40, beds=[np.s_[13:17, 25:29]])
    spec = EpisodeSpec("fixture", at(15, 15, 0.0), "bed", seed=1)
    res = run_episode(spec, FusionConfig(), MATRIX, sim)
    assert res.success and res.stop_issued and res.steps <= 10
    assert res.spl > 0.5
    assert res.final_distance < 1.0


def test_exploring_episode_invariants():
    sim = grid_scene(60, 60, walls=[np.s_[1:45, 30]], beds=[np.s_[5:8, 50:53]])
    spec = EpisodeSpec("fixture", at(50, 10, -math.pi / 2), "bed", seed=3)
    a = run_episode(spec, FusionConfig(), MATRIX, sim, record=True)
    b = run_episode(spec, FusionConfig(), MATRIX, sim)
    assert a.to_json() == b.to_json()
    assert a.path_length == pytest.approx(trajectory_length(a.trajectory))
    assert a.success and a.failure_reason is None
    assert a.final_distance < spec.success_radius
    assert a.steps <= spec.max_steps
    assert len(a.snapshots) >= 1


def test_explored_area_grows_monotonically():
    sim = grid_scene(50, 50, walls=[np.s_[10:40, 25]])
    cfg = SimConfig()
    s = new_state(sim, at(25, 10))
    prev = np.zeros(sim.scene.shape, bool)
    for action in ["turn_left"] * 3 + ["move_forward"] * 5 + ["turn_right"] * 6:
        update_map(s, sense(s.pose, sim, cfg), sim)
        now = s.live_map["explored"] > 0.5
        assert (now | prev).sum() == now.sum()
        prev = now
        step_action(s, action, sim, cfg)


# ---------------------------------------------------------------- configs and batches


def test_sim_config_bounds_and_unknown_keys():
    with pytest.raises(ValueError, match="forward_step"):
        SimConfig(forward_step=0)
    with pytest.raises(ValueError, match="unknown"):
        SimConfig.from_json({"warp": 9})


def test_episode_files_round_trip(tmp_path):
    specs = [EpisodeSpec("s1", Pose2D(1.0, 2.0, 0.5), "bed", 7), EpisodeSpec("s2", Pose2D(3, 4, -1), "toilet")]
    save_episodes(specs, tmp_path / "e.json")
    assert load_episodes(tmp_path / "e.json") == specs
    with pytest.raises(ValueError):
        EpisodeSpec("s", Pose2D(0, 0, 0), "bed", max_steps=0)


def test_empty_batch_report():
    rep = make_report([])
    assert rep["summary"]["sr"] is None and rep["summary"]["spl"] is None


def test_all_perfect_results_give_spl_one():
    rs = [EpisodeResult("s", "bed", k, True, 3.0, 3.0, 12, True, None) for k in range(4)]
    assert make_report(rs)["summary"]["spl"] == 1.0


@pytest.fixture(scope="module")
def small_batch():
    layouts = [generate_scene(s, SceneParams(bounds_m=(10.0, 10.0), resolution=0.1)) for s in (1, 2)]
    specs = sample_episodes(layouts, ["bed", "toilet"], 4, seed=5, min_distance=2.0)
    return layouts, specs


def test_batch_independent_of_parallelism(small_batch):
    layouts, specs = small_batch
    one = run_batch(specs, FusionConfig(), MATRIX, layouts, parallelism=1)
    two = run_batch(specs, FusionConfig(), MATRIX, layouts, parallelism=2)
    assert one == two
    assert one["summary"]["spl"] <= one["summary"]["sr"]


def test_sampled_episodes_are_satisfiable_and_reproducible(small_batch):
    layouts, specs = small_batch
    again = sample_episodes(layouts, ["bed", "toilet"], 4, seed=5, min_distance=2.0)
    assert again == specs
    sims = {l.id: SceneSim.build(l, 0.18) for l in layouts}
    for s in specs:
        assert optimal_length(sims[s.scene_id], s.start, s.target) >= 2.0


def test_unknown_scene_is_rejected(small_batch):
    layouts, specs = small_batch
    bad = [EpisodeSpec("nowhere", specs[0].start, "bed")]
    with pytest.raises(UnsatisfiableEpisode):
        run_batch(bad, FusionConfig(), MATRIX, layouts)
