"""Rolling log-odds occupancy map and the spatial queries built on it."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from . import kernels
from .fileio import FileFormatError, format_payload, parse_payload, write_ply
from .geometry import Pose


class VoxelState(IntEnum):
    UNKNOWN = kernels.UNKNOWN
    FREE = kernels.FREE
    OCCUPIED = kernels.OCCUPIED


class StopAt(IntEnum):
    OCCUPIED = kernels.STOP_OCCUPIED
    NOT_FREE = kernels.STOP_NOT_FREE


@dataclass(frozen=True)
class LogOddsParams:
    l_hit: float = 0.85
    l_miss: float = -0.4
    l_min: float = -2.0
    l_max: float = 3.5
    l_occ_thresh: float = 0.7
    l_free_thresh: float = -0.7

    def __post_init__(self):
        if not self.l_free_thresh < self.l_occ_thresh:
            raise ValueError("l_free_thresh must be below l_occ_thresh")
        if not self.l_min < 0.0 < self.l_max:
            raise ValueError("need l_min < 0 < l_max so unwritten voxels are Unknown")
        if not self.l_free_thresh < 0.0 < self.l_occ_thresh:
            raise ValueError("zero log-odds must classify as Unknown")


@dataclass(frozen=True)
class MapBounds:
    extent: tuple[float, float, float] = (60.0, 60.0, 12.0)
    shift_margin: float = 5.0

    def __post_init__(self):
        if min(self.extent) <= 0:
            raise ValueError("map extent must be positive")
        if not self.shift_margin < min(self.extent) / 2:
            raise ValueError("shift_margin must be below half the smallest extent")


@dataclass(frozen=True)
class GainSensorModel:
    """Frustum used for volumetric gain: FOV in degrees, range in metres."""

    fov_azimuth: float = 360.0
    fov_elevation: float = 90.0
    max_range: float = 5.0


@dataclass(frozen=True)
class RayHit:
    point: np.ndarray
    voxel: tuple[int, int, int]
    distance: float


class OccupancyMap:
    """Voxel log-odds grid held in a circular buffer over a rolling window.

    Global voxel ``g`` covers ``[g*e, (g+1)*e)`` in the world frame and is stored
    at ``g mod dims`` while ``window_lo <= g < window_lo + dims``.
    """

    def __init__(
        self,
        voxel_edge: float = 0.2,
        dims=(300, 300, 60),
        center=(0.0, 0.0, 0.0),
        params: LogOddsParams | None = None,
    ):
        self.voxel_edge = float(voxel_edge)
        self.params = params or LogOddsParams()
        dims = tuple(int(d) for d in dims)
        if min(dims) < 1:
            raise ValueError("map dims must be positive")
        self.log_odds = np.zeros(dims, dtype=np.float32)
        c = np.floor(np.asarray(center, dtype=float) / self.voxel_edge).astype(np.int64)
        self.window_lo = c - np.array(dims, dtype=np.int64) // 2
        self._p32 = tuple(
            np.float32(v)
            for v in (self.params.l_occ_thresh, self.params.l_free_thresh, self.params.l_hit,
                      self.params.l_miss, self.params.l_min, self.params.l_max)
        )

    @classmethod
    def from_bounds(cls, bounds: MapBounds, center, voxel_edge=0.2, params=None) -> "OccupancyMap":
        dims = tuple(max(1, int(round(x / voxel_edge))) for x in bounds.extent)
        return cls(voxel_edge, dims, center, params)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.log_odds.shape)

    @property
    def lower(self) -> np.ndarray:
        return self.window_lo * self.voxel_edge

    @property
    def upper(self) -> np.ndarray:
        return (self.window_lo + np.array(self.dims)) * self.voxel_edge

    @property
    def center_origin(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def snapshot(self) -> "OccupancyMap":
        snap = OccupancyMap.__new__(OccupancyMap)
        snap.voxel_edge = self.voxel_edge
        snap.params = self.params
        snap.log_odds = self.log_odds.copy()
        snap.log_odds.setflags(write=False)
        snap.window_lo = self.window_lo.copy()
        snap._p32 = self._p32
        return snap

    def view(self) -> "OccupancyMap":
        """Read-only map sharing storage with this one.

        Valid as a snapshot only while the owner does not integrate; the
        single-threaded mission loop plans between updates, so it uses this to
        avoid copying the whole grid per planning call.
        """
        snap = OccupancyMap.__new__(OccupancyMap)
        snap.voxel_edge = self.voxel_edge
        snap.params = self.params
        snap.log_odds = self.log_odds.view()
        snap.log_odds.setflags(write=False)
        snap.window_lo = self.window_lo.copy()
        snap._p32 = self._p32
        return snap

    # ---------------------------------------------------------------- voxel access

    def voxel_of(self, point) -> tuple[int, int, int]:
        return tuple(int(v) for v in np.floor(np.asarray(point, dtype=float) / self.voxel_edge))

    def voxel_center(self, g) -> np.ndarray:
        return (np.asarray(g, dtype=float) + 0.5) * self.voxel_edge

    def in_window(self, g) -> bool:
        g = np.asarray(g)
        return bool(np.all(g >= self.window_lo) and np.all(g < self.window_lo + self.dims))

    def _slot(self, g):
        return tuple(int(v) % n for v, n in zip(g, self.dims))

    def log_odds_at(self, g) -> float | None:
        if not self.in_window(g):
            return None
        return float(self.log_odds[self._slot(g)])

    def set_log_odds(self, g, value: float) -> None:
        if not self.in_window(g):
            raise IndexError(f"voxel {g} outside the map window")
        v = min(max(value, self.params.l_min), self.params.l_max)
        self.log_odds[self._slot(g)] = v

    def state_of_voxel(self, g) -> VoxelState:
        v = self.log_odds_at(g)
        if v is None:
            return VoxelState.UNKNOWN
        occ, free = self._p32[0], self._p32[1]
        if np.float32(v) >= occ:
            return VoxelState.OCCUPIED
        if np.float32(v) <= free:
            return VoxelState.FREE
        return VoxelState.UNKNOWN

    def state_at(self, point) -> VoxelState:
        return self.state_of_voxel(self.voxel_of(point))

    def states_of_voxels(self, g: np.ndarray) -> np.ndarray:
        """Vectorised state lookup for an (N, 3) integer array; Unknown outside the window."""
        g = np.asarray(g, dtype=np.int64).reshape(-1, 3)
        dims = np.array(self.dims, dtype=np.int64)
        inside = np.all((g >= self.window_lo) & (g < self.window_lo + dims), axis=1)
        out = np.zeros(len(g), dtype=np.uint8)
        slots = np.mod(g[inside], dims)
        vals = self.log_odds[slots[:, 0], slots[:, 1], slots[:, 2]]
        sub = np.zeros(len(vals), dtype=np.uint8)
        sub[vals <= self._p32[1]] = VoxelState.FREE
        sub[vals >= self._p32[0]] = VoxelState.OCCUPIED
        out[inside] = sub
        return out

    def window_states(self) -> np.ndarray:
        """Tri-state codes for the whole window in global order (x, y, z ascending)."""
        occ, free = self._p32[0], self._p32[1]
        lo = self.log_odds
        rolled = np.roll(lo, tuple(-(int(w) % n) for w, n in zip(self.window_lo, self.dims)), axis=(0, 1, 2))
        out = np.zeros(self.dims, dtype=np.uint8)
        out[rolled <= free] = VoxelState.FREE
        out[rolled >= occ] = VoxelState.OCCUPIED
        return out

    def count_state(self, state: VoxelState) -> int:
        occ, free = self._p32[0], self._p32[1]
        if state == VoxelState.OCCUPIED:
            return int(np.count_nonzero(self.log_odds >= occ))
        if state == VoxelState.FREE:
            return int(np.count_nonzero(self.log_odds <= free))
        return int(self.log_odds.size - np.count_nonzero((self.log_odds >= occ) | (self.log_odds <= free)))

    # ---------------------------------------------------------------- updates

    def integrate_points(self, origin, ends: np.ndarray, hits: np.ndarray) -> None:
        """Integrate rays from ``origin`` to world-frame ``ends``."""
        if self.log_odds.flags.writeable is False:
            raise ValueError("snapshots are read-only")
        ends = np.ascontiguousarray(ends, dtype=float).reshape(-1, 3)
        if len(ends) == 0:
            return
        occ, free, l_hit, l_miss, l_min, l_max = self._p32
        kernels.integrate_rays(
            self.log_odds, self.window_lo, self.voxel_edge, np.asarray(origin, dtype=float),
            ends, np.ascontiguousarray(hits, dtype=np.bool_), l_hit, l_miss, l_min, l_max,
        )

    def clear_box(self, center, extent) -> None:
        """Mark voxels intersecting a box as observed free (space the robot occupies)."""
        c = np.asarray(center, dtype=float)
        h = 0.5 * np.asarray(extent, dtype=float)
        e = self.voxel_edge
        g0 = np.floor((c - h) / e).astype(int)
        g1 = np.ceil((c + h) / e).astype(int) - 1
        for gx in range(g0[0], g1[0] + 1):
            for gy in range(g0[1], g1[1] + 1):
                for gz in range(g0[2], g1[2] + 1):
                    if self.in_window((gx, gy, gz)):
                        self.set_log_odds((gx, gy, gz), self.params.l_min)

    # ---------------------------------------------------------------- queries

    def raycast(self, origin, direction, max_range: float, stop_at: StopAt = StopAt.OCCUPIED):
        o = np.asarray(origin, dtype=float)
        d = np.asarray(direction, dtype=float)
        occ, free = self._p32[0], self._p32[1]
        hit, t, gx, gy, gz = kernels.raycast(
            self.log_odds, self.window_lo, self.voxel_edge, occ, free, o, d, float(max_range), int(stop_at)
        )
        if not hit:
            return None
        return RayHit(o + t * d, (gx, gy, gz), float(t))

    def box_allowed(self, lo_corner, hi_corner, policy: int) -> bool:
        occ, free = self._p32[0], self._p32[1]
        return bool(kernels.box_allowed(
            self.log_odds, self.window_lo, self.voxel_edge, occ, free,
            np.asarray(lo_corner, dtype=float), np.asarray(hi_corner, dtype=float), int(policy),
        ))

    def segment_allowed(self, p0, p1, half, policy: int) -> bool:
        occ, free = self._p32[0], self._p32[1]
        return bool(kernels.segment_allowed(
            self.log_odds, self.window_lo, self.voxel_edge, occ, free,
            np.asarray(p0, dtype=float), np.asarray(p1, dtype=float),
            np.asarray(half, dtype=float), int(policy),
        ))

    def clearance(self, point, max_dist: float) -> float:
        occ, free = self._p32[0], self._p32[1]
        return float(kernels.clearance(
            self.log_odds, self.window_lo, self.voxel_edge, occ, free,
            np.asarray(point, dtype=float), float(max_dist),
        ))

    def count_unknown(self, position, yaw: float, sensor: GainSensorModel) -> int:
        occ, free = self._p32[0], self._p32[1]
        return int(kernels.count_unknown(
            self.log_odds, self.window_lo, self.voxel_edge, occ, free,
            np.asarray(position, dtype=float), float(yaw),
            math.radians(sensor.fov_azimuth), math.radians(sensor.fov_elevation), float(sensor.max_range),
        ))

    # ---------------------------------------------------------------- rolling window

    def shift_window(self, shift_voxels) -> None:
        """Move the window by whole voxels, clearing the storage that is re-exposed."""
        shift_voxels = np.asarray(shift_voxels, dtype=np.int64)
        for ax in range(3):
            s = int(shift_voxels[ax])
            if s == 0:
                continue
            n = self.dims[ax]
            old_lo = int(self.window_lo[ax])
            if abs(s) >= n:
                fresh = range(old_lo + s, old_lo + s + n)
            elif s > 0:
                fresh = range(old_lo + n, old_lo + n + s)
            else:
                fresh = range(old_lo + s, old_lo)
            slots = np.array([g % n for g in fresh], dtype=np.int64)
            index = [slice(None)] * 3
            index[ax] = slots
            self.log_odds[tuple(index)] = 0.0
            self.window_lo[ax] = old_lo + s

    # ---------------------------------------------------------------- exports

    def occupied_centers(self) -> np.ndarray:
        states = self.window_states()
        idx = np.argwhere(states == VoxelState.OCCUPIED)
        return (idx + self.window_lo + 0.5) * self.voxel_edge

    def export_ply(self, path: str | Path) -> None:
        write_ply(path, self.occupied_centers())

    def save(self, path: str | Path) -> None:
        lines = [
            MAP_MAGIC,
            "ORIGIN " + " ".join(repr(float(v)) for v in self.lower),
            f"VOXEL_EDGE {self.voxel_edge!r}",
            "DIMS " + " ".join(str(d) for d in self.dims),
        ]
        lines.extend(format_payload(self.window_states()))
        Path(path).write_text("\n".join(lines) + "\n")


MAP_MAGIC = "OWLMAP 1"


@dataclass
class MapDump:
    origin: np.ndarray
    voxel_edge: float
    states: np.ndarray = field(repr=False)

    def occupied_centers(self) -> np.ndarray:
        idx = np.argwhere(self.states == VoxelState.OCCUPIED)
        return self.origin + (idx + 0.5) * self.voxel_edge


def load_map_dump(path: str | Path) -> MapDump:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != MAP_MAGIC:
        raise FileFormatError(f"missing magic {MAP_MAGIC!r}", 1)
    header = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("RLE"):
        toks = lines[i].split()
        header[toks[0]] = toks[1:]
        i += 1
    try:
        origin = np.array([float(v) for v in header["ORIGIN"]])
        edge = float(header["VOXEL_EDGE"][0])
        dims = tuple(int(v) for v in header["DIMS"])
    except (KeyError, ValueError, IndexError):
        raise FileFormatError("incomplete map header", i) from None
    states = parse_payload(lines, i, dims, {0, 1, 2})
    return MapDump(origin, edge, states)


# --------------------------------------------------------------------------- operations


def integrate_scan(occ_map: OccupancyMap, cloud, pose: Pose) -> OccupancyMap:
    """Ray-integrate a sensor-frame point cloud taken at ``pose`` into the map."""
    pts = np.asarray(cloud.points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        return occ_map
    world_pts = pts @ pose.rotation().T + pose.position
    occ_map.integrate_points(pose.position, world_pts, np.asarray(cloud.hit_mask, dtype=bool))
    return occ_map


def maybe_shift_map(occ_map: OccupancyMap, robot_pos, bounds: MapBounds) -> tuple[OccupancyMap, np.ndarray]:
    """Recentre the window along every axis whose face is within the shift margin.

    Returns the map and the applied shift in metres (zero when nothing moved).
    """
    p = np.asarray(robot_pos, dtype=float)
    e = occ_map.voxel_edge
    lower, upper = occ_map.lower, occ_map.upper
    shift = np.zeros(3, dtype=np.int64)
    robot_voxel = np.floor(p / e).astype(np.int64)
    for ax in range(3):
        if p[ax] - lower[ax] < bounds.shift_margin or upper[ax] - p[ax] < bounds.shift_margin:
            new_lo = robot_voxel[ax] - occ_map.dims[ax] // 2
            shift[ax] = new_lo - occ_map.window_lo[ax]
    if shift.any():
        occ_map.shift_window(shift)
    return occ_map, shift.astype(float) * e


def raycast_map(occ_map: OccupancyMap, origin, direction, max_range: float,
                stop_at: StopAt = StopAt.OCCUPIED) -> RayHit | None:
    d = np.asarray(direction, dtype=float)
    n = float(np.linalg.norm(d))
    if abs(n - 1.0) > 1e-6:
        raise ValueError("direction must be a unit vector")
    return occ_map.raycast(origin, d, max_range, stop_at)


def count_unknown_in_frustum(occ_map: OccupancyMap, viewpoint: Pose, sensor: GainSensorModel) -> int:
    return occ_map.count_unknown(viewpoint.position, viewpoint.yaw, sensor)
