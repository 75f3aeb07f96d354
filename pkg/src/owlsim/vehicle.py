"""Point-mass multirotor proxy with a cuboid body and slide-on-contact collisions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import kernels
from .geometry import wrap_angle
from .world import WorldGrid

PENETRATION_GAP = 1e-7


class UnknownPolicy(IntEnum):
    STRICT = kernels.STRICT
    OPTIMISTIC = kernels.OPTIMISTIC


@dataclass
class RobotGeometry:
    cuboid_extent: tuple[float, float, float] = (0.38, 0.38, 0.24)

    def __post_init__(self):
        self.cuboid_extent = tuple(float(v) for v in self.cuboid_extent)
        if min(self.cuboid_extent) <= 0:
            raise ValueError("cuboid extents must be positive")

    @property
    def half(self) -> np.ndarray:
        return 0.5 * np.asarray(self.cuboid_extent)

    def inflated(self, margin: float) -> "RobotGeometry":
        return RobotGeometry(tuple(v + 2 * margin for v in self.cuboid_extent))


@dataclass
class RobotState:
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw: float = 0.0
    yaw_rate: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3)
        self.yaw = wrap_angle(self.yaw)

    def copy(self) -> "RobotState":
        return RobotState(self.position.copy(), self.velocity.copy(), self.yaw, self.yaw_rate, self.time)


@dataclass(frozen=True)
class CollisionEvent:
    time: float
    position: tuple[float, float, float]
    normal: tuple[float, float, float]
    impact_speed: float


def cuboid_overlaps_solid(world: WorldGrid, center, geom: RobotGeometry, tol: float = 0.0) -> bool:
    """True if the cuboid, shrunk by ``tol`` per side, intersects a Solid cell."""
    c = np.asarray(center, dtype=float)
    h = geom.half - tol
    return bool(kernels.world_box_solid(world.solid, world.origin, world.voxel_edge, c - h, c + h))


def step_dynamics(
    state: RobotState,
    accel_cmd,
    yaw_rate_cmd: float,
    dt: float,
    world: WorldGrid,
    geom: RobotGeometry,
    max_speed: float = 1.0,
) -> tuple[RobotState, list[CollisionEvent]]:
    """Semi-implicit Euler step with axis-separated contact resolution.

    The motion is split into substeps of at most half a world voxel. Within a
    substep each axis moves in turn; a move that would intersect Solid is
    stopped at the blocking face, the velocity along that axis is zeroed and a
    CollisionEvent is recorded. There is no restitution and no friction.
    """
    if not 0.0 < dt <= 0.1:
        raise ValueError(f"dt must be in (0, 0.1], got {dt}")
    a = np.asarray(accel_cmd, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("accel_cmd must be finite")

    vel = state.velocity + a * dt
    speed = float(np.linalg.norm(vel))
    if speed > max_speed:
        vel *= max_speed / speed
    pos = state.position.copy()
    events: list[CollisionEvent] = []

    travel = float(np.linalg.norm(vel)) * dt
    n_sub = max(1, int(math.ceil(travel / (0.5 * world.voxel_edge))))
    h = geom.half
    sub_dt = dt / n_sub
    t0 = state.time
    for s in range(n_sub):
        for ax in range(3):
            delta = vel[ax] * sub_dt
            if delta == 0.0:
                continue
            new = pos.copy()
            new[ax] += delta
            sign = 1 if delta > 0 else -1
            front = pos[ax] + sign * h[ax]
            face = kernels.world_blocking_face(
                world.solid, world.origin, world.voxel_edge, new - h, new + h, ax, sign, front
            )
            if math.isnan(face):
                pos = new
                continue
            pos[ax] = face - sign * (h[ax] + PENETRATION_GAP)
            normal = [0.0, 0.0, 0.0]
            normal[ax] = -float(sign)
            events.append(
                CollisionEvent(t0 + (s + 1) * sub_dt, tuple(pos), tuple(normal), abs(float(vel[ax])))
            )
            vel[ax] = 0.0

    yaw = wrap_angle(state.yaw + yaw_rate_cmd * dt)
    return RobotState(pos, vel, yaw, float(yaw_rate_cmd), state.time + dt), events


def cuboid_in_free_space(center, geom: RobotGeometry, occ_map, policy: UnknownPolicy) -> bool:
    """Every map voxel intersecting the cuboid is Free (strict) or not Occupied."""
    c = np.asarray(center, dtype=float)
    h = geom.half
    return occ_map.box_allowed(c - h, c + h, int(policy))
