"""Simulated onboard sensors: LiDAR, forward camera detector, odometry, Bluetooth."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .fileio import write_ply
from .geometry import Pose, wrap_angle
from .world import ARTIFACT_CLASSES, WorldGrid

NOMINAL_ARTIFACT_RADIUS = 0.25


@dataclass(frozen=True)
class LidarModel:
    """Spinning LiDAR. ``beams`` is the native channel count; ``channels`` of
    them are used, evenly strided, so a reduced cloud keeps a subset of rows."""

    fov_azimuth: float = 360.0
    fov_elevation: float = 90.0
    beams: int = 64
    channels: int = 64
    azimuth_steps: int = 512
    max_range: float = 50.0
    rate: float = 10.0
    range_noise: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.fov_azimuth <= 360.0:
            raise ValueError("fov_azimuth must be in (0, 360]")
        if not 0.0 < self.fov_elevation < 180.0:
            raise ValueError("fov_elevation must be in (0, 180)")
        if self.channels < 1 or self.beams < 1 or self.azimuth_steps < 1:
            raise ValueError("channel and step counts must be positive")
        if self.beams % self.channels:
            raise ValueError("channels must divide the native beam count")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")

    def elevations(self) -> np.ndarray:
        """Elevation angles (rad) of the active rows, bottom to top."""
        half = math.radians(self.fov_elevation) / 2.0
        if self.beams == 1:
            rows = np.zeros(1)
        else:
            rows = np.linspace(-half, half, self.beams)
        return rows[:: self.beams // self.channels]

    def azimuths(self) -> np.ndarray:
        fov = math.radians(self.fov_azimuth)
        if self.fov_azimuth >= 360.0:
            return np.arange(self.azimuth_steps) * (fov / self.azimuth_steps) - math.pi
        if self.azimuth_steps == 1:
            return np.zeros(1)
        return np.linspace(-fov / 2.0, fov / 2.0, self.azimuth_steps)

    def directions(self) -> np.ndarray:
        """Unit ray directions in the sensor frame, shape (channels*azimuth_steps, 3)."""
        el = self.elevations()[:, None]
        az = self.azimuths()[None, :]
        d = np.stack(
            [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el) * np.ones_like(az)], axis=-1
        )
        return d.reshape(-1, 3)


@dataclass(frozen=True)
class CameraModel:
    fov_h: float = 85.0
    fov_v: float = 64.0
    image_w: int = 640
    image_h: int = 480
    max_detect_range: float = 10.0
    rate: float = 3.0

    def __post_init__(self):
        if not (0 < self.fov_h < 180 and 0 < self.fov_v < 180):
            raise ValueError("camera FOV must be in (0, 180)")
        if self.image_w < 16 or self.image_h < 16:
            raise ValueError("image dims must be >= 16")

    @property
    def fx(self) -> float:
        return 0.5 * self.image_w / math.tan(math.radians(self.fov_h) / 2.0)

    @property
    def fy(self) -> float:
        return 0.5 * self.image_h / math.tan(math.radians(self.fov_v) / 2.0)

    @property
    def cx(self) -> float:
        return 0.5 * self.image_w

    @property
    def cy(self) -> float:
        return 0.5 * self.image_h

    def project(self, pose: Pose, point) -> tuple[float, float, float] | None:
        """World point -> (u, v, depth) for a forward camera aligned with yaw."""
        rel = np.asarray(point, dtype=float) - pose.position
        c, s = math.cos(pose.yaw), math.sin(pose.yaw)
        fwd = c * rel[0] + s * rel[1]
        left = -s * rel[0] + c * rel[1]
        up = rel[2]
        if fwd <= 1e-9:
            return None
        return self.cx - self.fx * left / fwd, self.cy - self.fy * up / fwd, fwd

    def pixel_ray(self, pose: Pose, u: float, v: float) -> np.ndarray:
        """Unit world-frame ray through pixel (u, v)."""
        left = -(u - self.cx) / self.fx
        up = -(v - self.cy) / self.fy
        c, s = math.cos(pose.yaw), math.sin(pose.yaw)
        d = np.array([c - s * left, s + c * left, up])
        return d / np.linalg.norm(d)


@dataclass
class PointCloud:
    stamp: float
    origin_pose: Pose
    points: np.ndarray  # sensor frame, (N, 3)
    hit_mask: np.ndarray

    def world_points(self, hits_only: bool = True) -> np.ndarray:
        pts = self.points[self.hit_mask] if hits_only else self.points
        return pts @ self.origin_pose.rotation().T + self.origin_pose.position

    def save_ply(self, path) -> None:
        write_ply(path, self.world_points())


@dataclass(frozen=True)
class Detection:
    stamp: float
    artifact_class: str
    bbox: tuple[float, float, float, float]  # u_min, v_min, u_max, v_max
    truth_id: int | None = None


@dataclass(frozen=True)
class DetectionNoise:
    p_miss: float = 0.0
    p_misclass: float = 0.0
    false_positive_rate: float = 0.0
    bbox_sigma_px: float = 0.0


@dataclass(frozen=True)
class OdomNoise:
    drift_sigma: float = 0.0  # m / sqrt(s), random walk
    white_sigma: float = 0.0  # m
    yaw_white_sigma: float = 0.0  # rad


def _artifact_arrays(world: WorldGrid, radius: float):
    if not world.artifacts:
        return np.zeros((0, 3)), np.zeros(0)
    centers = np.array([a.center for a in world.artifacts], dtype=float)
    return centers, np.full(len(centers), radius)


def scan_lidar(
    world: WorldGrid,
    pose: Pose,
    model: LidarModel,
    rng: np.random.Generator | None = None,
    stamp: float = 0.0,
    artifact_radius: float = NOMINAL_ARTIFACT_RADIUS,
) -> PointCloud:
    """Cast the LiDAR lattice against the world; artifacts are solid spheres."""
    dirs_s = model.directions()
    dirs_w = np.ascontiguousarray(dirs_s @ pose.rotation().T)
    centers, radii = _artifact_arrays(world, artifact_radius)
    ranges = kernels.world_cast_batch(
        world.solid, world.origin, world.voxel_edge, pose.position, dirs_w, model.max_range,
        centers, radii,
    )
    hit = ranges >= 0.0
    r = np.where(hit, ranges, model.max_range)
    if model.range_noise > 0.0 and rng is not None:
        noisy = r + rng.normal(0.0, model.range_noise, size=r.shape)
        r = np.where(hit, np.clip(noisy, 0.0, model.max_range), r)
    return PointCloud(stamp, pose.copy(), dirs_s * r[:, None], hit)


def _line_of_sight(world: WorldGrid, a, b) -> bool:
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    dist = float(np.linalg.norm(d))
    if dist == 0.0:
        return True
    t = kernels.world_cast(world.solid, world.origin, world.voxel_edge,
                           np.asarray(a, dtype=float), d / dist, dist)
    return t < 0.0


def visible_artifacts(world: WorldGrid, pose: Pose, camera: CameraModel):
    """(artifact, u, v, depth) for every artifact in the frustum with line of sight."""
    out = []
    for art in world.artifacts:
        proj = camera.project(pose, art.center)
        if proj is None:
            continue
        u, v, depth = proj
        if not (0.0 <= u < camera.image_w and 0.0 <= v < camera.image_h):
            continue
        if np.linalg.norm(np.asarray(art.center) - pose.position) > camera.max_detect_range:
            continue
        if not _line_of_sight(world, pose.position, art.center):
            continue
        out.append((art, u, v, depth))
    return out


def _clip_box(camera: CameraModel, u0, v0, u1, v1):
    u0, u1 = max(0.0, min(u0, u1)), min(float(camera.image_w), max(u0, u1))
    v0, v1 = max(0.0, min(v0, v1)), min(float(camera.image_h), max(v0, v1))
    if u1 - u0 <= 0.0 or v1 - v0 <= 0.0:
        return None
    return (u0, v0, u1, v1)


def detect_artifacts(
    world: WorldGrid,
    pose: Pose,
    camera: CameraModel,
    noise: DetectionNoise,
    rng: np.random.Generator,
    stamp: float = 0.0,
    artifact_radius: float = NOMINAL_ARTIFACT_RADIUS,
) -> list[Detection]:
    """Ground-truth detector: frustum + range + occlusion, then noise injection."""
    dets: list[Detection] = []
    for art, u, v, depth in visible_artifacts(world, pose, camera):
        # random draws happen in a fixed order so streams stay aligned across configs
        miss = rng.random()
        flip = rng.random()
        wrong = int(rng.integers(len(ARTIFACT_CLASSES) - 1))
        jitter = rng.normal(0.0, 1.0, size=4)
        if miss < noise.p_miss:
            continue
        cls = art.cls
        if flip < noise.p_misclass:
            others = [c for c in ARTIFACT_CLASSES if c != art.cls]
            cls = others[wrong]
        hw = camera.fx * artifact_radius / depth
        hh = camera.fy * artifact_radius / depth
        box = np.array([u - hw, v - hh, u + hw, v + hh]) + noise.bbox_sigma_px * jitter
        clipped = _clip_box(camera, *box)
        if clipped is None:
            continue
        dets.append(Detection(stamp, cls, clipped, art.id))
    if noise.false_positive_rate > 0.0 and rng.random() < noise.false_positive_rate:
        w = float(rng.uniform(10, camera.image_w / 4))
        h = float(rng.uniform(10, camera.image_h / 4))
        u0 = float(rng.uniform(0, camera.image_w - w))
        v0 = float(rng.uniform(0, camera.image_h - h))
        cls = ARTIFACT_CLASSES[int(rng.integers(len(ARTIFACT_CLASSES)))]
        dets.append(Detection(stamp, cls, (u0, v0, u0 + w, v0 + h), None))
    return dets


class Odometry:
    """Pose estimate = truth + random-walk drift + white noise."""

    def __init__(self, noise: OdomNoise, rng: np.random.Generator):
        self.noise = noise
        self.rng = rng
        self.drift = np.zeros(3)

    def read(self, true_pose: Pose, dt: float) -> Pose:
        n = self.noise
        if n.drift_sigma > 0.0:
            self.drift += self.rng.normal(0.0, n.drift_sigma * math.sqrt(dt), size=3)
        pos = true_pose.position + self.drift
        yaw = true_pose.yaw
        if n.white_sigma > 0.0:
            pos = pos + self.rng.normal(0.0, n.white_sigma, size=3)
        if n.yaw_white_sigma > 0.0:
            yaw = wrap_angle(yaw + self.rng.normal(0.0, n.yaw_white_sigma))
        return Pose(pos, yaw)


def read_odometry(true_pose: Pose, noise: OdomNoise, rng: np.random.Generator,
                  odometry: Odometry | None = None, dt: float = 0.01) -> Pose:
    """One odometry reading. Pass a persistent ``odometry`` to accumulate drift."""
    odometry = odometry if odometry is not None else Odometry(noise, rng)
    return odometry.read(true_pose, dt)


def scan_bluetooth(world: WorldGrid, pose: Pose, radius: float) -> list[int]:
    """Ids of Bluetooth-enabled artifacts within a closed ball; walls do not block."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    out = []
    for art in world.artifacts:
        if art.bluetooth and np.linalg.norm(np.asarray(art.center) - pose.position) <= radius:
            out.append(art.id)
    return out
