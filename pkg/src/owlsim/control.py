"""Fixed-gain PID position control with proportional yaw, plus polyline tracking."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import wrap_angle


@dataclass
class ControllerConfig:
    kp: tuple[float, float, float] = (4.0, 4.0, 6.0)
    ki: tuple[float, float, float] = (0.5, 0.5, 1.0)
    kd: tuple[float, float, float] = (3.0, 3.0, 4.0)
    kp_yaw: float = 2.0
    i_min: tuple[float, float, float] = (-1.0, -1.0, -1.0)
    i_max: tuple[float, float, float] = (1.0, 1.0, 1.0)
    acceptance_radius: float = 0.3
    reference_speed: float = 1.0
    corner_decel: float = 1.0

    def __post_init__(self):
        for name in ("kp", "ki", "kd", "i_min", "i_max"):
            setattr(self, name, tuple(float(v) for v in getattr(self, name)))
        gains = self.kp + self.ki + self.kd + (self.kp_yaw,)
        if min(gains) < 0:
            raise ValueError("controller gains must be non-negative")
        if any(lo >= hi for lo, hi in zip(self.i_min, self.i_max)):
            raise ValueError("need i_min < i_max on every axis")
        if self.acceptance_radius <= 0 or self.reference_speed <= 0:
            raise ValueError("acceptance radius and reference speed must be positive")
        if self.corner_decel < 0:
            raise ValueError("corner_decel must be >= 0 (0 disables the slow-down)")


@dataclass
class Reference:
    position: np.ndarray
    yaw: float = 0.0
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass
class ControllerState:
    integrals: np.ndarray = field(default_factory=lambda: np.zeros(3))
    prev_error: np.ndarray | None = None
    reference: Reference | None = None
    waypoint_index: int = 1

    def copy(self) -> "ControllerState":
        ref = None
        if self.reference is not None:
            ref = Reference(self.reference.position.copy(), self.reference.yaw,
                            self.reference.velocity.copy())
        prev = None if self.prev_error is None else self.prev_error.copy()
        return ControllerState(self.integrals.copy(), prev, ref, self.waypoint_index)


def control_step(
    state: ControllerState,
    ref: Reference,
    est_position,
    est_velocity,
    est_yaw: float,
    dt: float,
    cfg: ControllerConfig,
) -> tuple[np.ndarray, float, ControllerState]:
    """One evaluation of the PID/P law. Returns (accel_cmd, yaw_rate_cmd, new_state).

    The integral is accumulated with the trapezoid rule and then clamped to
    [i_min, i_max]; the derivative term is the reference-minus-estimate
    velocity, so a step in the reference produces no derivative kick.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    e = np.asarray(ref.position, dtype=float) - np.asarray(est_position, dtype=float)
    prev = e if state.prev_error is None else state.prev_error
    integ = state.integrals + 0.5 * (prev + e) * dt
    integ = np.minimum(np.maximum(integ, cfg.i_min), cfg.i_max)
    ev = np.asarray(ref.velocity, dtype=float) - np.asarray(est_velocity, dtype=float)
    accel = np.asarray(cfg.kp) * e + np.asarray(cfg.ki) * integ + np.asarray(cfg.kd) * ev
    yaw_rate = cfg.kp_yaw * wrap_angle(ref.yaw - est_yaw)
    new = ControllerState(integ, e, ref, state.waypoint_index)
    return accel, yaw_rate, new


class TrackStatus(Enum):
    IN_PROGRESS = "in_progress"
    DONE = "done"


def start_path(state: ControllerState, path) -> ControllerState:
    """Reset the tracker onto a new path, keeping the integrators."""
    pts = np.asarray(path, dtype=float).reshape(-1, 3)
    yaw = state.reference.yaw if state.reference is not None else 0.0
    if len(pts) > 1:
        yaw = _segment_yaw(pts[0], pts[1], yaw)
    new = state.copy()
    new.reference = Reference(pts[0].copy(), yaw, np.zeros(3))
    new.waypoint_index = 0 if len(pts) == 1 else 1
    return new


def _segment_yaw(a, b, fallback: float) -> float:
    d = np.asarray(b) - np.asarray(a)
    if math.hypot(d[0], d[1]) < 1e-6:
        return fallback
    return math.atan2(d[1], d[0])


def _carrot_speed(pts: np.ndarray, idx: int, to_go: np.ndarray, dist: float, prev_speed: float, dt: float,
                  cfg: ControllerConfig) -> float:
    """Reference speed, reduced before sharp turns and the final waypoint.

    The carrot accelerates and brakes at ``corner_decel``; it may pass
    waypoint ``idx`` at v_ref * max(0, cos(turn)) and stops at the last one,
    so a point mass tracking it does not overshoot corners.
    """
    v = cfg.reference_speed
    if cfg.corner_decel == 0.0 or dist == 0.0:
        return v
    v = min(v, prev_speed + cfg.corner_decel * dt)
    v_pass = 0.0
    if idx < len(pts) - 1:
        nxt = pts[idx + 1] - pts[idx]
        n = float(np.linalg.norm(nxt))
        if n > 0.0:
            v_pass = v * max(0.0, float(np.dot(to_go, nxt)) / (dist * n))
    return min(v, math.sqrt(v_pass * v_pass + 2.0 * cfg.corner_decel * dist))


def track_path(
    state: ControllerState,
    path,
    est_position,
    est_velocity,
    est_yaw: float,
    dt: float,
    cfg: ControllerConfig,
) -> tuple[np.ndarray, float, ControllerState, TrackStatus]:
    """Advance a carrot along the polyline at the reference speed and track it.

    The carrot stops at the active waypoint until the estimate is within the
    acceptance radius; then the next waypoint becomes active.
    """
    pts = np.asarray(path, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("path must be non-empty")
    if state.reference is None:
        state = start_path(state, pts)
    est_position = np.asarray(est_position, dtype=float)
    idx = min(state.waypoint_index, len(pts) - 1)
    ref = state.reference

    while np.linalg.norm(est_position - pts[idx]) <= cfg.acceptance_radius and (
        idx < len(pts) - 1 and np.linalg.norm(ref.position - pts[idx]) < 1e-9
    ):
        idx += 1
    if idx == len(pts) - 1 and np.linalg.norm(est_position - pts[idx]) <= cfg.acceptance_radius and (
        np.linalg.norm(ref.position - pts[idx]) < 1e-9 or len(pts) == 1
    ):
        hold = Reference(pts[idx].copy(), ref.yaw, np.zeros(3))
        accel, yaw_rate, new = control_step(state, hold, est_position, est_velocity, est_yaw, dt, cfg)
        new.waypoint_index = idx
        return accel, yaw_rate, new, TrackStatus.DONE

    target = pts[idx]
    to_go = target - ref.position
    dist = float(np.linalg.norm(to_go))
    speed = _carrot_speed(pts, idx, to_go, dist, float(np.linalg.norm(ref.velocity)), dt, cfg)
    step = speed * dt
    if dist > step:
        tangent = to_go / dist
        new_pos = ref.position + tangent * step
        vel = tangent * speed
    else:
        new_pos = target.copy()
        vel = np.zeros(3)
    yaw = ref.yaw
    if idx > 0:
        yaw = _segment_yaw(pts[idx - 1], pts[idx], ref.yaw)
    new_ref = Reference(new_pos, yaw, vel)
    accel, yaw_rate, new = control_step(state, new_ref, est_position, est_velocity, est_yaw, dt, cfg)
    new.waypoint_index = idx
    return accel, yaw_rate, new, TrackStatus.IN_PROGRESS
