"""Local exploration planning: sampled graph, volumetric gain, best-path selection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import Pose
from ..mapping import OccupancyMap
from ..vehicle import UnknownPolicy, cuboid_in_free_space
from .config import PlannerConfig, PlannerError
from .graph import ExplorationGraph, ShortestPathTree, path_length, shortest_paths


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)


def compute_local_box(aggregated_cloud, robot_pos, cfg: PlannerConfig) -> Box:
    """Box around the robot sized by the 5th-95th percentile span of recent hits."""
    p = np.asarray(robot_pos, dtype=float)
    lo_ext = np.asarray(cfg.local_box_min)
    hi_ext = np.asarray(cfg.local_box_max)
    pts = np.asarray(aggregated_cloud, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        ext = lo_ext.copy()
    else:
        span = np.percentile(pts, 95, axis=0) - np.percentile(pts, 5, axis=0)
        ext = np.clip(span, lo_ext, hi_ext)
    return Box(p - ext / 2.0, p + ext / 2.0)


def build_local_graph(
    snapshot: OccupancyMap,
    box: Box,
    robot_pos,
    cfg: PlannerConfig,
    rng: np.random.Generator,
    policy: UnknownPolicy | None = None,
) -> ExplorationGraph:
    """Sample collision-free vertices in the box and connect them to prior ones."""
    policy = cfg.unknown_policy if policy is None else UnknownPolicy(policy)
    geom = cfg.geometry
    half = geom.half
    root = np.asarray(robot_pos, dtype=float)
    # the robot itself only needs the bare cuboid clear; the margin is for targets
    root_half = cfg.robot_cuboid.half
    if not cuboid_in_free_space(root, cfg.robot_cuboid, snapshot, policy):
        raise PlannerError("robot in non-free space")
    graph = ExplorationGraph()
    graph.root = graph.add_vertex(root)
    samples = rng.uniform(box.lo, box.hi, size=(cfg.num_samples, 3))
    positions = [root]
    r2 = cfg.edge_radius ** 2
    for s in samples:
        if not cuboid_in_free_space(s, geom, snapshot, policy):
            continue
        pos_arr = np.asarray(positions)
        d2 = np.einsum("ij,ij->i", pos_arr - s, pos_arr - s)
        near = np.flatnonzero(d2 <= r2)
        links = [int(j) for j in near
                 if snapshot.segment_allowed(pos_arr[j], s, root_half if j == 0 else half, int(policy))]
        if not links:
            continue
        vid = graph.add_vertex(s)
        positions.append(s)
        for j in links:
            graph.add_edge(vid, j, float(math.sqrt(d2[j])))
    return graph


def _vertex_yaw(graph: ExplorationGraph, tree: ShortestPathTree, v: int) -> float:
    par = tree.parent.get(v)
    if par is None:
        return 0.0
    d = graph.vertices[v].position - graph.vertices[par].position
    return math.atan2(d[1], d[0])


def volumetric_gain(position, yaw: float, snapshot: OccupancyMap, cfg: PlannerConfig) -> float:
    """epsilon_g times the visible unknown-voxel count from the viewpoint."""
    return cfg.epsilon_g * snapshot.count_unknown(position, yaw, cfg.gain_sensor)


def exploration_gain(path, gains: dict[int, float], dists: dict[int, float], cfg: PlannerConfig) -> float:
    """Accumulated gain along a vertex path, discounted by exp(-lambda * distance)."""
    total = 0.0
    for v in path:
        g = gains.get(v, 0.0)
        if g:
            total += g * math.exp(-cfg.lambda_discount * dists.get(v, 0.0))
    return total


@dataclass
class ClusterResult:
    gains: dict[int, float]
    representatives: dict[int, int]  # leaf -> representative leaf
    evaluations: int


def cluster_and_evaluate(
    leaves, graph: ExplorationGraph, tree: ShortestPathTree, snapshot: OccupancyMap, cfg: PlannerConfig
) -> ClusterResult:
    """Greedy radius-rho clustering; representatives get exact gains, members copy them."""
    gains: dict[int, float] = {}
    reps: dict[int, int] = {}
    rep_ids: list[int] = []
    evaluations = 0
    for v in sorted(leaves):
        pos = graph.vertices[v].position
        best, best_d = None, math.inf
        for r in rep_ids:
            d = float(np.linalg.norm(graph.vertices[r].position - pos))
            if d < cfg.rho and d < best_d:
                best, best_d = r, d
        if best is None:
            gains[v] = volumetric_gain(pos, _vertex_yaw(graph, tree, v), snapshot, cfg)
            evaluations += 1
            rep_ids.append(v)
            reps[v] = v
        else:
            gains[v] = gains[best]
            reps[v] = best
        graph.vertices[v].volumetric_gain = gains[v]
        graph.vertices[v].cluster_rep = reps[v]
    return ClusterResult(gains, reps, evaluations)


def improve_path_safety(points, snapshot: OccupancyMap, cfg: PlannerConfig, policy=None) -> np.ndarray:
    """Move interior waypoints (within half an edge radius) to maximise clearance.

    A move is accepted only if it strictly increases the waypoint's clearance
    and keeps the waypoint and both adjoining edges collision-free.
    """
    policy = cfg.unknown_policy if policy is None else UnknownPolicy(policy)
    pts = np.array(points, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        return pts
    geom = cfg.geometry
    half = geom.half
    cap = cfg.safety_clearance_max
    offsets = _candidate_offsets(0.5 * cfg.edge_radius, snapshot.voxel_edge)
    for i in range(1, len(pts) - 1):
        current = snapshot.clearance(pts[i], cap)
        if current >= cap:
            continue
        cands = pts[i] + offsets
        scores = np.array([snapshot.clearance(c, cap) for c in cands])
        for k in np.argsort(-scores, kind="stable"):
            if scores[k] <= current:
                break
            c = cands[k]
            if (cuboid_in_free_space(c, geom, snapshot, policy)
                    and snapshot.segment_allowed(pts[i - 1], c, half, int(policy))
                    and snapshot.segment_allowed(c, pts[i + 1], half, int(policy))):
                pts[i] = c
                break
    return pts


def _candidate_offsets(radius: float, step: float) -> np.ndarray:
    dirs = np.array(
        [(x, y, z) for x in (-1, 0, 1) for y in (-1, 0, 1) for z in (-1, 0, 1) if (x, y, z) != (0, 0, 0)],
        dtype=float,
    )
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.arange(step, radius + 1e-9, step)
    return (dirs[None, :, :] * radii[:, None, None]).reshape(-1, 3)


def path_clearance(points, snapshot: OccupancyMap, cap: float) -> float:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return min(snapshot.clearance(p, cap) for p in pts)


@dataclass
class LocalPlan:
    found: bool
    path: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    vertex_ids: list[int] = field(default_factory=list)
    gain: float = 0.0
    path_gains: list[float] = field(default_factory=list)
    best_leaf: int | None = None
    graph: ExplorationGraph | None = None
    tree: ShortestPathTree | None = None
    evaluations: int = 0
    extra_paths: list[tuple[np.ndarray, list[float | None]]] = field(default_factory=list)

    @property
    def vertex_count(self) -> int:
        return 0 if self.graph is None else len(self.graph)

    @property
    def edge_count(self) -> int:
        return 0 if self.graph is None else len(self.graph.edges())


def plan_local(
    snapshot: OccupancyMap,
    robot_pos,
    aggregated_cloud,
    cfg: PlannerConfig,
    rng: np.random.Generator,
    policy: UnknownPolicy | None = None,
) -> LocalPlan:
    """Box -> graph -> Dijkstra -> leaf gains -> best ExplorationGain -> safety step.

    Returns ``LocalPlan(found=False)`` (NoGain) when the best gain is below the
    threshold. PlannerError from graph building propagates.
    """
    policy = cfg.unknown_policy if policy is None else UnknownPolicy(policy)
    box = compute_local_box(aggregated_cloud, robot_pos, cfg)
    graph = build_local_graph(snapshot, box, robot_pos, cfg, rng, policy)
    tree = shortest_paths(graph)
    if cfg.leaf_only_gain:
        leaves = tree.leaves()
        evaluated = cluster_and_evaluate(leaves, graph, tree, snapshot, cfg)
        gains, evaluations = evaluated.gains, evaluated.evaluations
    else:
        gains = {}
        for v in sorted(graph.vertices):
            if v == graph.root:
                continue
            gains[v] = volumetric_gain(graph.vertices[v].position, _vertex_yaw(graph, tree, v), snapshot, cfg)
            graph.vertices[v].volumetric_gain = gains[v]
        leaves = sorted(gains)
        evaluations = len(gains)

    best, best_key = None, None
    for v in leaves:
        path = tree.path_to(v)
        g = exploration_gain(path, gains, tree.dist, cfg)
        key = (-g, tree.dist[v], v)
        if best_key is None or key < best_key:
            best, best_key = v, key
    result = LocalPlan(False, graph=graph, tree=tree, evaluations=evaluations)
    if best is None:
        return result
    best_gain = -best_key[0]
    result.gain = best_gain
    result.best_leaf = best
    if best_gain < cfg.gain_threshold:
        return result
    ids = tree.path_to(best)
    raw = np.array([graph.vertices[v].position for v in ids])
    result.path = improve_path_safety(raw, snapshot, cfg, policy)
    result.vertex_ids = ids
    result.found = True
    yaw_prev = 0.0
    path_gains = []
    for k, p in enumerate(result.path):
        if k == 0:
            path_gains.append(volumetric_gain(p, yaw_prev, snapshot, cfg))
            continue
        d = p - result.path[k - 1]
        yaw_prev = math.atan2(d[1], d[0])
        if ids[k] == best:
            path_gains.append(gains[best])
        else:
            path_gains.append(volumetric_gain(p, yaw_prev, snapshot, cfg))
    result.path_gains = path_gains
    result.extra_paths = _extra_paths(graph, tree, leaves, gains, best, cfg)
    return result


def _extra_paths(graph, tree, leaves, gains, best, cfg) -> list[tuple[np.ndarray, list[float | None]]]:
    """Paths to further frontier-grade leaves, greedily spaced apart from each other and the best leaf."""
    if cfg.extra_frontier_paths == 0:
        return []
    chosen = [graph.vertices[best].position]
    out = []
    cands = sorted((v for v in leaves if gains.get(v, 0.0) > cfg.frontier_gain_threshold),
                   key=lambda v: (-gains[v], tree.dist[v], v))
    for v in cands:
        if len(out) >= cfg.extra_frontier_paths:
            break
        pos = graph.vertices[v].position
        if min(float(np.linalg.norm(pos - c)) for c in chosen) < cfg.extra_path_separation:
            continue
        chosen.append(pos)
        ids = tree.path_to(v)
        pts = np.array([graph.vertices[u].position for u in ids])
        out.append((pts, [None] * (len(ids) - 1) + [gains[v]]))
    return out


def viewpoint(position, yaw=0.0) -> Pose:
    return Pose(np.asarray(position, dtype=float), yaw)
