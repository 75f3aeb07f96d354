"""Undirected weighted graphs and Dijkstra shortest-path trees."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class GraphVertex:
    id: int
    position: np.ndarray
    volumetric_gain: float = 0.0
    is_frontier: bool = False
    cluster_rep: int | None = None


@dataclass
class ExplorationGraph:
    vertices: dict[int, GraphVertex] = field(default_factory=dict)
    adjacency: dict[int, dict[int, float]] = field(default_factory=dict)
    root: int = 0

    def add_vertex(self, position, **kw) -> int:
        vid = max(self.vertices, default=-1) + 1
        self.vertices[vid] = GraphVertex(vid, np.asarray(position, dtype=float).copy(), **kw)
        self.adjacency[vid] = {}
        return vid

    def add_edge(self, a: int, b: int, length: float | None = None) -> None:
        if a == b:
            return
        if a not in self.vertices or b not in self.vertices:
            raise KeyError(f"edge ({a}, {b}) refers to a missing vertex")
        if length is None:
            length = float(np.linalg.norm(self.vertices[a].position - self.vertices[b].position))
        self.adjacency[a][b] = length
        self.adjacency[b][a] = length

    def edges(self) -> list[tuple[int, int, float]]:
        return [(a, b, w) for a, nbrs in self.adjacency.items() for b, w in nbrs.items() if a < b]

    def positions(self) -> np.ndarray:
        ids = sorted(self.vertices)
        return np.array([self.vertices[i].position for i in ids]).reshape(-1, 3)

    def __len__(self) -> int:
        return len(self.vertices)


@dataclass
class ShortestPathTree:
    source: int
    dist: dict[int, float]
    parent: dict[int, int | None]

    def path_to(self, v: int) -> list[int]:
        if v not in self.dist:
            raise KeyError(f"vertex {v} unreachable from {self.source}")
        out = [v]
        while self.parent[out[-1]] is not None:
            out.append(self.parent[out[-1]])
        return out[::-1]

    def leaves(self) -> list[int]:
        """Vertices that are nobody's parent (the source alone is not a leaf)."""
        has_child = {p for p in self.parent.values() if p is not None}
        return sorted(v for v in self.dist if v not in has_child and v != self.source)


def dijkstra(adjacency: dict[int, dict[int, float]], source: int) -> ShortestPathTree:
    """Exact shortest paths; among equal-length routes the smaller parent id wins."""
    dist = {source: 0.0}
    parent: dict[int, int | None] = {source: None}
    done: set[int] = set()
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, w in adjacency[u].items():
            if v in done:
                continue
            nd = d + w
            old = dist.get(v, math.inf)
            if nd < old or (nd == old and u < parent[v]):
                dist[v] = nd
                parent[v] = u
                heapq.heappush(heap, (nd, v))
    return ShortestPathTree(source, dist, parent)


def shortest_paths(graph: ExplorationGraph) -> ShortestPathTree:
    return dijkstra(graph.adjacency, graph.root)


def path_length(points) -> float:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())
