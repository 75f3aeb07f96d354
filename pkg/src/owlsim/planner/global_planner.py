"""Sparse global graph: frontier bookkeeping, repositioning and endurance homing."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..mapping import OccupancyMap
from ..vehicle import UnknownPolicy
from .config import PlannerConfig, PlannerError
from .graph import ExplorationGraph, dijkstra
from .local import LocalPlan, volumetric_gain


@dataclass
class GlobalGraph(ExplorationGraph):
    home: int = 0

    @property
    def frontiers(self) -> list[int]:
        return sorted(v for v, vx in self.vertices.items() if vx.is_frontier)

    @classmethod
    def with_home(cls, home_pos) -> "GlobalGraph":
        g = cls()
        g.home = g.add_vertex(home_pos)
        g.root = g.home
        return g

    def nearest(self, pos, limit: float = math.inf) -> list[tuple[float, int]]:
        p = np.asarray(pos, dtype=float)
        ids = sorted(self.vertices)
        pts = np.array([self.vertices[i].position for i in ids])
        d = np.linalg.norm(pts - p, axis=1)
        order = np.argsort(d, kind="stable")
        return [(float(d[k]), ids[k]) for k in order if d[k] <= limit]


def _connect_new(glob: GlobalGraph, pos, prefer, snapshot: OccupancyMap, cfg: PlannerConfig,
                 half=None, policy=None) -> int | None:
    half = cfg.geometry.half if half is None else half
    policy = int(cfg.unknown_policy) if policy is None else int(policy)
    links = []
    if prefer is not None and snapshot.segment_allowed(glob.vertices[prefer].position, pos, half, policy):
        links.append(prefer)
    for d, v in glob.nearest(pos, cfg.edge_radius * 2.0):
        if len(links) >= cfg.global_connect_neighbors:
            break
        if v in links:
            continue
        if snapshot.segment_allowed(glob.vertices[v].position, pos, half, policy):
            links.append(v)
    if not links:
        return None
    vid = glob.add_vertex(pos)
    for v in links:
        glob.add_edge(vid, v)
    return vid


def _attach(glob: GlobalGraph, pos, gain, prefer, snapshot, cfg, half=None, policy=None) -> int | None:
    half = cfg.geometry.half if half is None else half
    policy = int(cfg.unknown_policy) if policy is None else int(policy)
    vid = None
    for _, cand in glob.nearest(pos, 0.5 * cfg.rho)[:1]:
        # reuse a nearby vertex only if it stays connected to the chain being appended
        if prefer is None or prefer == cand or cand in glob.adjacency[prefer]:
            vid = cand
        elif snapshot.segment_allowed(glob.vertices[prefer].position, glob.vertices[cand].position,
                                      half, policy):
            glob.add_edge(prefer, cand)
            vid = cand
    if vid is None:
        vid = _connect_new(glob, pos, prefer, snapshot, cfg, half, policy)
        if vid is None:
            return None
    if gain is not None and vid != glob.home:
        glob.vertices[vid].volumetric_gain = float(gain)
        glob.vertices[vid].is_frontier = gain > cfg.frontier_gain_threshold
    return vid


def refresh_frontiers(glob: GlobalGraph, snapshot: OccupancyMap, cfg: PlannerConfig,
                      center=None, radius: float | None = None) -> list[int]:
    """Recompute frontier gains on the current map; demote those below threshold."""
    demoted = []
    for v in glob.frontiers:
        vx = glob.vertices[v]
        if center is not None and radius is not None:
            if np.linalg.norm(vx.position - np.asarray(center)) > radius:
                continue
        vx.volumetric_gain = volumetric_gain(vx.position, 0.0, snapshot, cfg)
        if vx.volumetric_gain <= cfg.frontier_gain_threshold:
            vx.is_frontier = False
            demoted.append(v)
    return demoted


def update_global_graph(
    glob: GlobalGraph,
    local_best: LocalPlan | None,
    robot_pos,
    snapshot: OccupancyMap,
    cfg: PlannerConfig,
) -> GlobalGraph:
    """Append the robot state and the local path(s); refresh nearby frontiers."""
    prev = None
    for half, policy in _fallbacks(cfg):
        prev = _attach(glob, robot_pos, None, None, snapshot, cfg, half, policy)
        if prev is not None:
            break
    if prev is None:
        # the robot could not see any vertex; fall back to its nearest one
        prev = glob.nearest(robot_pos)[0][1]
    if local_best is not None and local_best.found:
        _append_path(glob, local_best.path, local_best.path_gains, prev, robot_pos, snapshot, cfg)
        for pts, gains in local_best.extra_paths:
            _append_path(glob, pts, gains, prev, robot_pos, snapshot, cfg)
    refresh_frontiers(glob, snapshot, cfg, robot_pos, cfg.frontier_recheck_radius)
    return glob


def _append_path(glob: GlobalGraph, points, gains, prev: int, robot_pos, snapshot, cfg) -> None:
    """Append a local path (starting at the robot) vertex by vertex, stopping at the first gap."""
    for k, p in enumerate(points[1:], start=1):
        gain = gains[k] if k < len(gains) else None
        # the first edge leaves the robot, which only needs the bare cuboid clear
        if k == 1:
            options = [(cfg.robot_cuboid.half, int(cfg.unknown_policy))] + _fallbacks(cfg)[1:]
        else:
            # interior edges keep the margin and the policy; only edges touching the robot relax them
            options = _fallbacks(cfg)[:1]
        cur = _attach_first(glob, p, gain, prev, snapshot, cfg, options)
        if cur is None and k == 1 and not np.allclose(glob.vertices[prev].position, robot_pos):
            # the robot was merged into a nearby vertex; the path was planned from its exact position
            exact = _exact_robot_vertex(glob, robot_pos, prev, snapshot, cfg)
            if exact is not None:
                prev = exact
                cur = _attach_first(glob, p, gain, prev, snapshot, cfg, options)
        if cur is None:
            return
        prev = cur


def _attach_first(glob, pos, gain, prefer, snapshot, cfg, options) -> int | None:
    for half, policy in options:
        vid = _attach(glob, pos, gain, prefer, snapshot, cfg, half, policy)
        if vid is not None:
            return vid
    return None


def _exact_robot_vertex(glob: GlobalGraph, robot_pos, near: int, snapshot, cfg) -> int | None:
    """A vertex exactly at the robot, linked to the vertex it was merged into."""
    pos = np.asarray(robot_pos, dtype=float)
    for half, policy in _fallbacks(cfg)[::-1]:
        if snapshot.segment_allowed(glob.vertices[near].position, pos, half, policy):
            vid = glob.add_vertex(pos)
            glob.add_edge(vid, near)
            return vid
    return None


def _fallbacks(cfg: PlannerConfig) -> list[tuple[np.ndarray, int]]:
    """(half extents, policy) pairs to try when linking the robot position.

    The robot may drift inside the safety margin, so the bare cuboid is the
    last resort.
    """
    out = [(cfg.geometry.half, int(cfg.unknown_policy)), (cfg.geometry.half, int(UnknownPolicy.OPTIMISTIC))]
    if cfg.cuboid_margin > 0:
        out.append((cfg.robot_cuboid.half, int(UnknownPolicy.OPTIMISTIC)))
    return out


def _robot_links(glob: GlobalGraph, robot_pos, snapshot: OccupancyMap, cfg: PlannerConfig) -> dict[int, float]:
    """Collision-checked connections from the robot position to nearby vertices."""
    for half, policy in _fallbacks(cfg):
        links = {}
        for d, v in glob.nearest(robot_pos, cfg.edge_radius * 3.0):
            if d == 0.0 or snapshot.segment_allowed(robot_pos, glob.vertices[v].position, half, policy):
                links[v] = d
            if len(links) >= cfg.global_connect_neighbors:
                break
        if links:
            return links
    raise PlannerError("robot position is not connectable to the global graph")


def _robot_tree(glob: GlobalGraph, robot_pos, snapshot, cfg):
    links = _robot_links(glob, np.asarray(robot_pos, dtype=float), snapshot, cfg)
    adjacency = {v: dict(n) for v, n in glob.adjacency.items()}
    robot = -1
    adjacency[robot] = {}
    for v, d in links.items():
        adjacency[robot][v] = d
        adjacency[v][robot] = d
    return dijkstra(adjacency, robot), robot


def _path_points(glob: GlobalGraph, ids, robot_pos) -> np.ndarray:
    return np.array([np.asarray(robot_pos, dtype=float) if v == -1 else glob.vertices[v].position
                     for v in ids])


@dataclass
class Reposition:
    found: bool
    path: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    frontier: int | None = None
    score: float = 0.0


def plan_global_reposition(
    glob: GlobalGraph,
    robot_pos,
    remaining_endurance: float,
    nominal_speed: float,
    cfg: PlannerConfig,
    snapshot: OccupancyMap,
    exclude_radius: float = 0.0,
) -> Reposition:
    """Pick the frontier maximising gain x time left after reaching it and returning home."""
    frontiers = glob.frontiers
    if not frontiers:
        return Reposition(False)
    from_robot, robot = _robot_tree(glob, robot_pos, snapshot, cfg)
    from_home = dijkstra(glob.adjacency, glob.home)
    best, best_key = None, None
    for f in frontiers:
        if f not in from_robot.dist or f not in from_home.dist:
            continue
        if exclude_radius > 0 and np.linalg.norm(glob.vertices[f].position - robot_pos) < exclude_radius:
            continue
        t_reach = from_robot.dist[f] / nominal_speed
        t_home = from_home.dist[f] / nominal_speed
        t_remain = remaining_endurance - t_reach - t_home
        if t_remain <= 0:
            continue
        score = glob.vertices[f].volumetric_gain * t_remain
        key = (-score, f)
        if best_key is None or key < best_key:
            best, best_key = f, key
    if best is None:
        return Reposition(False)
    ids = from_robot.path_to(best)
    return Reposition(True, _path_points(glob, ids, robot_pos), best, -best_key[0])


@dataclass
class HomingDecision:
    return_now: bool
    path: np.ndarray
    t_home: float


def home_path(glob: GlobalGraph, robot_pos, snapshot, cfg) -> tuple[np.ndarray, float]:
    tree, robot = _robot_tree(glob, robot_pos, snapshot, cfg)
    ids = tree.path_to(glob.home)
    return _path_points(glob, ids, robot_pos), tree.dist[glob.home]


def check_homing(
    glob: GlobalGraph,
    robot_pos,
    elapsed: float,
    endurance: float,
    nominal_speed: float,
    margin: float,
    snapshot: OccupancyMap,
    cfg: PlannerConfig,
) -> HomingDecision:
    """ReturnNow iff endurance - elapsed <= T_home + margin (inclusive boundary)."""
    path, length = home_path(glob, robot_pos, snapshot, cfg)
    t_home = length / nominal_speed
    return HomingDecision(endurance - elapsed <= t_home + margin, path, t_home)
