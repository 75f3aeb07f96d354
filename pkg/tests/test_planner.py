import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import map_from_states
from oracles import all_simple_path_lengths, brute_force_distances, frustum_unknown_count
from owlsim.mapping import GainSensorModel, VoxelState
from owlsim.planner import (
    Box,
    ExplorationGraph,
    GlobalGraph,
    LocalPlan,
    PlannerConfig,
    PlannerError,
    build_local_graph,
    check_homing,
    cluster_and_evaluate,
    compute_local_box,
    dijkstra,
    exploration_gain,
    improve_path_safety,
    plan_global_reposition,
    plan_local,
    shortest_paths,
    update_global_graph,
    volumetric_gain,
)
from owlsim.vehicle import UnknownPolicy, cuboid_in_free_space

EDGE = 0.2


def _corridor(length=10.0, width=2.0, height=2.0, unknown_from=None):
    """Free corridor along +x from the origin, Occupied one-voxel walls around it.

    Voxels with x >= ``unknown_from`` (inside the corridor) are left Unknown.
    """
    n = (round(length / EDGE), round(width / EDGE), round(height / EDGE))
    states = np.full((n[0] + 2, n[1] + 2, n[2] + 2), VoxelState.OCCUPIED, dtype=np.uint8)
    states[1:-1, 1:-1, 1:-1] = VoxelState.FREE
    if unknown_from is not None:
        k = 1 + round(unknown_from / EDGE)
        states[k:-1, 1:-1, 1:-1] = VoxelState.UNKNOWN
    # window voxel 1 is global voxel 0, so the interior starts at the origin
    return map_from_states(states, EDGE, (-1, -1, -1)), np.array([length, width, height])


def _dense_edge_ok(snapshot, a, b, geom, policy, step=0.02):
    n = max(2, int(math.ceil(np.linalg.norm(b - a) / step)) + 1)
    return all(cuboid_in_free_space(a + t * (b - a), geom, snapshot, policy) for t in np.linspace(0, 1, n))


def test_config_validation():
    for bad in ({"epsilon_g": 0.0}, {"rho": 0.0}, {"k_trigger": 0}, {"lambda_discount": -1.0},
                {"local_box_min": (5, 5, 5), "local_box_max": (4, 4, 4)}, {"cuboid_margin": -0.1}):
        with pytest.raises(ValueError):
            PlannerConfig(**bad)
    cfg = PlannerConfig(unknown_policy="optimistic", robot_cuboid={"cuboid_extent": (0.4, 0.4, 0.2)})
    assert cfg.unknown_policy == UnknownPolicy.OPTIMISTIC
    assert np.allclose(cfg.geometry.half, [0.2, 0.2, 0.1])
    assert np.allclose(PlannerConfig(cuboid_margin=0.1).geometry.cuboid_extent, [0.58, 0.58, 0.44])


# ---------------------------------------------------------------- local box


def test_local_box_empty_cloud_uses_min_extents():
    cfg = PlannerConfig()
    box = compute_local_box(np.zeros((0, 3)), (1.0, 2.0, 3.0), cfg)
    assert np.allclose(box.extent, cfg.local_box_min)
    assert np.allclose(box.center, [1.0, 2.0, 3.0])


def test_local_box_narrow_corridor_cloud():
    rng = np.random.default_rng(0)
    x = rng.uniform(-40, 40, 4000)
    y = rng.choice([-1.2, 1.2], 4000)
    z = rng.uniform(-1.0, 1.0, 4000)
    # the default lateral minimum (4 m) would hide the corridor width
    cfg = PlannerConfig(local_box_min=(1.0, 1.0, 1.0))
    box = compute_local_box(np.c_[x, y, z], (0.0, 0.0, 0.0), cfg)
    assert abs(box.extent[1] - 2.4) <= EDGE
    assert box.extent[0] == pytest.approx(cfg.local_box_max[0])


def test_local_box_spherical_cloud_is_near_cubic():
    rng = np.random.default_rng(1)
    d = rng.normal(size=(5000, 3))
    pts = 5.0 * d / np.linalg.norm(d, axis=1, keepdims=True)
    ext = compute_local_box(pts, (0.0, 0.0, 0.0), PlannerConfig(local_box_max=(30, 30, 30))).extent
    assert np.all(np.abs(ext - ext.mean()) <= 0.1 * ext.mean())


# ---------------------------------------------------------------- local graph


def test_graph_is_root_only_when_box_is_occupied():
    states = np.full((20, 20, 20), VoxelState.OCCUPIED, dtype=np.uint8)
    states[8:12, 8:12, 8:12] = VoxelState.FREE
    m = map_from_states(states)
    root = np.array([2.0, 2.0, 2.0])
    g = build_local_graph(m, Box(np.full(3, 0.2), np.full(3, 3.8)), root, PlannerConfig(num_samples=200),
                          np.random.default_rng(0))
    assert len(g) == 1 and g.root == 0


def test_root_in_non_free_space_raises():
    states = np.full((20, 20, 20), VoxelState.FREE, dtype=np.uint8)
    states[10, 10, 10] = VoxelState.OCCUPIED
    m = map_from_states(states)
    with pytest.raises(PlannerError, match="non-free"):
        build_local_graph(m, Box(np.zeros(3), np.full(3, 4.0)), (2.1, 2.1, 2.1), PlannerConfig(),
                          np.random.default_rng(0))


def test_corridor_graph_spans_and_every_edge_is_free():
    m, size = _corridor()
    cfg = PlannerConfig(num_samples=200)
    root = np.array([0.5, 1.0, 1.0])
    g = build_local_graph(m, Box(np.zeros(3), size), root, cfg, np.random.default_rng(3))
    xs = g.positions()[:, 0]
    assert xs.max() - xs.min() >= 0.8 * size[0]
    tree = shortest_paths(g)
    assert set(tree.dist) == set(g.vertices)
    for a, b, _ in g.edges():
        geom = cfg.robot_cuboid if 0 in (a, b) else cfg.geometry
        assert _dense_edge_ok(m, g.vertices[a].position, g.vertices[b].position, geom, cfg.unknown_policy)


def test_graph_is_deterministic_for_a_seed():
    m, size = _corridor()
    cfg = PlannerConfig(num_samples=100)
    a = build_local_graph(m, Box(np.zeros(3), size), (0.5, 1.0, 1.0), cfg, np.random.default_rng(9))
    b = build_local_graph(m, Box(np.zeros(3), size), (0.5, 1.0, 1.0), cfg, np.random.default_rng(9))
    assert np.array_equal(a.positions(), b.positions())
    assert a.edges() == b.edges()


# ---------------------------------------------------------------- shortest paths


def _random_graph(rng, n):
    edges = [(i, int(rng.integers(0, i)), float(rng.uniform(0.1, 5))) for i in range(1, n)]
    for _ in range(int(rng.integers(0, n * 2)) if n > 1 else 0):
        a, b = (int(v) for v in rng.choice(n, 2, replace=False))
        edges.append((a, b, float(rng.uniform(0.1, 5))))
    return edges


def _as_graph(n, edges):
    g = ExplorationGraph()
    for _ in range(n):
        g.add_vertex(np.zeros(3))
    for a, b, w in edges:
        if b not in g.adjacency[a] or w < g.adjacency[a][b]:
            g.add_edge(a, b, w)
    return g


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 10))
def test_dijkstra_matches_brute_force(seed, n):
    rng = np.random.default_rng(seed)
    edges = _random_graph(rng, n)
    tree = shortest_paths(_as_graph(n, edges))
    oracle = brute_force_distances(n, edges, 0)
    assert set(tree.dist) == set(oracle)
    for v, d in oracle.items():
        assert tree.dist[v] == pytest.approx(d, rel=1e-12, abs=1e-12)


def test_dijkstra_eight_vertices_vs_all_simple_paths():
    rng = np.random.default_rng(8)
    edges = _random_graph(rng, 8)
    g = _as_graph(8, edges)
    tree = shortest_paths(g)
    for t in range(1, 8):
        assert tree.dist[t] == pytest.approx(min(all_simple_path_lengths(8, g.edges(), 0, t)))


def test_dijkstra_single_vertex_and_tie_break():
    g = ExplorationGraph()
    g.add_vertex(np.zeros(3))
    tree = shortest_paths(g)
    assert tree.dist == {0: 0.0} and tree.leaves() == []
    square = _as_graph(4, [(0, 2, 1.0), (0, 1, 1.0), (2, 3, 1.0), (1, 3, 1.0)])
    assert dijkstra(square.adjacency, 0).parent[3] == 1


# ---------------------------------------------------------------- gains


def test_volumetric_gain_examples():
    cfg = PlannerConfig(gain_sensor=GainSensorModel(360.0, 90.0, 1.5))
    free = map_from_states(np.full((20, 20, 20), VoxelState.FREE, dtype=np.uint8))
    vp = np.array([2.03, 2.02, 2.01])
    assert volumetric_gain(vp, 0.0, free, cfg) == 0
    unknown = map_from_states(np.zeros((20, 20, 20), dtype=np.uint8))
    g1 = volumetric_gain(vp, 0.0, unknown, cfg)
    assert g1 == frustum_unknown_count(np.zeros((20, 20, 20)), (0, 0, 0), EDGE, vp, 0.0, 360, 90, 1.5)
    cfg2 = PlannerConfig(epsilon_g=2.0, gain_sensor=cfg.gain_sensor)
    assert volumetric_gain(vp, 0.0, unknown, cfg2) == 2 * g1


def test_exploration_gain_examples():
    cfg = PlannerConfig()
    assert exploration_gain([0, 1, 2], {1: 0.0, 2: 0.0}, {0: 0, 1: 1, 2: 2}, cfg) == 0
    assert exploration_gain([0, 1, 2], {1: 2.0, 2: 3.0}, {0: 0, 1: 1, 2: 2}, cfg) == 5
    disc = PlannerConfig(lambda_discount=0.5)
    got = exploration_gain([0, 1, 2], {1: 2.0, 2: 3.0}, {0: 0, 1: 1.0, 2: 2.0}, disc)
    assert got == pytest.approx(2 * math.exp(-0.5) + 3 * math.exp(-1.0))
    assert got == pytest.approx(2.317, abs=1e-3)


def _star(points):
    g = ExplorationGraph()
    g.add_vertex(np.array([2.0, 2.0, 2.0]))
    for p in points:
        v = g.add_vertex(np.asarray(p, dtype=float))
        g.add_edge(0, v)
    return g


def test_clustering_rules():
    unknown = map_from_states(np.zeros((20, 20, 20), dtype=np.uint8))
    sensor = GainSensorModel(360.0, 90.0, 1.0)
    g = _star([(1.0, 1.0, 1.0), (1.1, 1.0, 1.0), (3.0, 3.0, 3.0)])
    tree = shortest_paths(g)
    res = cluster_and_evaluate(tree.leaves(), g, tree, unknown, PlannerConfig(rho=1.0, gain_sensor=sensor))
    assert res.evaluations == 2
    assert res.gains[1] == res.gains[2] and res.representatives[2] == 1
    g = _star([(1.0, 1.0, 1.0), (1.1, 1.0, 1.0), (3.0, 3.0, 3.0)])
    res = cluster_and_evaluate(tree.leaves(), g, tree, unknown, PlannerConfig(rho=1e-9, gain_sensor=sensor))
    assert res.evaluations == 3
    for v in (1, 2, 3):
        exact = volumetric_gain(g.vertices[v].position, 0.0, unknown, PlannerConfig(gain_sensor=sensor))
        assert res.gains[v] == exact


# ---------------------------------------------------------------- plan_local


def _local_cfg(**kw):
    base = dict(num_samples=250, gain_threshold=1.0, gain_sensor=GainSensorModel(360.0, 90.0, 3.0),
                local_box_min=(10.0, 2.0, 2.0), local_box_max=(10.0, 2.0, 2.0))
    base.update(kw)
    return PlannerConfig(**base)


def test_plan_local_nogain_when_explored():
    m, _ = _corridor()
    plan = plan_local(m, (0.5, 1.0, 1.0), np.zeros((0, 3)), _local_cfg(), np.random.default_rng(0))
    assert isinstance(plan, LocalPlan) and not plan.found


def test_plan_local_heads_for_unknown_boundary():
    m, _ = _corridor(unknown_from=5.0)
    cfg = _local_cfg(rho=1.0)
    plan = plan_local(m, (0.5, 1.0, 1.0), np.zeros((0, 3)), cfg, np.random.default_rng(4))
    assert plan.found
    assert abs(plan.path[-1][0] - 5.0) <= 2 * cfg.rho
    # every commanded waypoint passes the cuboid check under the active policy
    for p in plan.path[1:]:
        assert cuboid_in_free_space(p, cfg.geometry, m, cfg.unknown_policy)


def test_plan_local_selects_exhaustive_argmax():
    m, _ = _corridor(unknown_from=5.0)
    cfg = _local_cfg(rho=1e-9)
    plan = plan_local(m, (0.5, 1.0, 1.0), np.zeros((0, 3)), cfg, np.random.default_rng(5))
    tree, g = plan.tree, plan.graph
    exact = {v: volumetric_gain(g.vertices[v].position, 0.0, m, cfg) for v in tree.leaves()}
    oracle = min(tree.leaves(), key=lambda v: (-exact[v], tree.dist[v], v))
    assert plan.best_leaf == oracle
    assert plan.gain == exact[oracle]


def test_plan_local_is_invariant_to_gain_scaling():
    m, _ = _corridor(unknown_from=5.0)
    robot = (0.5, 1.0, 1.0)
    a = plan_local(m, robot, np.zeros((0, 3)), _local_cfg(gain_threshold=0.0), np.random.default_rng(6))
    b = plan_local(m, robot, np.zeros((0, 3)), _local_cfg(gain_threshold=0.0, epsilon_g=3.7),
                   np.random.default_rng(6))
    assert a.best_leaf == b.best_leaf
    assert np.array_equal(a.path, b.path)
    assert b.gain == pytest.approx(3.7 * a.gain)


def test_safety_step_never_reduces_clearance():
    m, size = _corridor(width=3.0, height=2.4)
    cfg = PlannerConfig()
    rng = np.random.default_rng(2)
    for _ in range(20):
        pts = [np.array([0.5, 1.5, 1.2])]
        while len(pts) < 5:
            c = pts[-1] + rng.uniform(-1.2, 1.2, 3)
            if cuboid_in_free_space(c, cfg.geometry, m, cfg.unknown_policy) and m.segment_allowed(
                    pts[-1], c, cfg.geometry.half, int(cfg.unknown_policy)):
                pts.append(c)
        pts = np.array(pts)
        out = improve_path_safety(pts, m, cfg)
        assert np.array_equal(out[0], pts[0]) and np.array_equal(out[-1], pts[-1])
        for before, after in zip(pts, out):
            assert m.clearance(after, cfg.safety_clearance_max) >= m.clearance(before, cfg.safety_clearance_max)
            assert np.linalg.norm(after - before) <= 0.5 * cfg.edge_radius + 1e-9
        for a, b in zip(out[:-1], out[1:]):
            assert m.segment_allowed(a, b, cfg.geometry.half, int(cfg.unknown_policy))


# ---------------------------------------------------------------- global graph


def _free_map(n=(60, 20, 20)):
    return map_from_states(np.full(n, VoxelState.FREE, dtype=np.uint8), EDGE, (-1, -1, -1))


def _plan(points, gains):
    pts = np.asarray(points, dtype=float)
    return LocalPlan(True, path=pts, path_gains=list(gains))


def test_first_update_and_dedup():
    m = _free_map()
    cfg = PlannerConfig(frontier_gain_threshold=10.0)
    home = np.array([0.5, 1.5, 1.5])
    glob = GlobalGraph.with_home(home)
    path = [home, (2.0, 1.5, 1.5), (3.5, 1.5, 1.5), (5.0, 1.5, 1.5)]
    update_global_graph(glob, _plan(path, [0, 1, 2, 3]), home, m, cfg)
    assert len(glob) == 4 and glob.home == 0
    n = len(glob)
    update_global_graph(glob, _plan(path, [0, 1, 2, 3]), home, m, cfg)
    assert len(glob) == n
    dist = dijkstra(glob.adjacency, glob.home).dist
    assert set(dist) == set(glob.vertices)


def test_frontier_flag_and_demotion():
    states = np.full((60, 20, 20), VoxelState.FREE, dtype=np.uint8)
    states[30:, :, :] = VoxelState.UNKNOWN
    m = map_from_states(states, EDGE, (-1, -1, -1))
    cfg = PlannerConfig(frontier_gain_threshold=50.0, gain_sensor=GainSensorModel(360.0, 90.0, 2.0))
    home = np.array([0.5, 1.5, 1.5])
    glob = GlobalGraph.with_home(home)
    tip = np.array([5.5, 1.5, 1.5])
    g_tip = volumetric_gain(tip, 0.0, m, cfg)
    assert g_tip > cfg.frontier_gain_threshold
    update_global_graph(glob, _plan([home, (3.0, 1.5, 1.5), tip], [0, 0, g_tip]), home, m, cfg)
    f = glob.frontiers
    assert len(f) == 1 and np.allclose(glob.vertices[f[0]].position, tip)
    # the region gets mapped: recomputed gain (oracle) falls below threshold -> demoted
    mapped = _free_map()
    assert frustum_unknown_count(np.full((60, 20, 20), 1), (-1, -1, -1), EDGE, tip, 0.0, 360, 90, 2.0) == 0
    update_global_graph(glob, None, home, mapped, cfg)
    assert glob.frontiers == []


def _line_graph(frontiers):
    """Home at x=0.5 and frontier vertices along +x, all in free space."""
    glob = GlobalGraph.with_home(np.array([0.5, 1.5, 1.5]))
    prev = glob.home
    for x, gain in frontiers:
        v = glob.add_vertex(np.array([x, 1.5, 1.5]), volumetric_gain=gain, is_frontier=gain > 0)
        glob.add_edge(prev, v)
        prev = v
    return glob


def test_reposition_rules():
    m = _free_map()
    cfg = PlannerConfig()
    robot = np.array([0.5, 1.5, 1.5])
    assert not plan_global_reposition(_line_graph([(2.5, 0.0)]), robot, 600, 1.0, cfg, m).found
    glob = _line_graph([(2.5, 100.0), (4.5, 100.0)])
    rep = plan_global_reposition(glob, robot, 600, 1.0, cfg, m)
    assert rep.found and rep.frontier == 1
    assert np.allclose(rep.path[-1], glob.vertices[1].position)
    # a frontier that cannot be reached and returned from in time is excluded even if its gain is maximal
    glob = _line_graph([(2.5, 10.0), (10.5, 1e6)])
    rep = plan_global_reposition(glob, robot, 15.0, 1.0, cfg, m)
    assert rep.frontier == 1
    assert not plan_global_reposition(_line_graph([(10.5, 1e6)]), robot, 15.0, 1.0, cfg, m).found


def test_homing_decision_and_inclusive_boundary():
    m = _free_map()
    cfg = PlannerConfig()
    glob = _line_graph([(2.5, 0.0), (3.5, 0.0)])
    robot = np.array([3.5, 1.5, 1.5])  # 3 m from home along the graph
    d = check_homing(glob, robot, 0.0, 600.0, 0.5, 60.0, m, cfg)  # T_home = 6 s
    assert not d.return_now and d.t_home == pytest.approx(6.0)
    assert check_homing(glob, robot, 34.0, 100.0, 0.5, 60.0, m, cfg).return_now
    assert not check_homing(glob, robot, 33.99, 100.0, 0.5, 60.0, m, cfg).return_now
    assert np.allclose(d.path[-1], glob.vertices[glob.home].position)


def test_homing_requires_connectable_robot():
    states = np.full((60, 20, 20), VoxelState.FREE, dtype=np.uint8)
    states[20, :, :] = VoxelState.OCCUPIED
    m = map_from_states(states, EDGE, (-1, -1, -1))
    glob = _line_graph([(2.5, 0.0)])
    with pytest.raises(PlannerError, match="not connectable"):
        check_homing(glob, np.array([5.0, 1.5, 1.5]), 0.0, 600.0, 1.0, 60.0, m, PlannerConfig())
