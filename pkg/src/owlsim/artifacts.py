"""Artifact localization from detections, multi-view consensus and reporting."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Pose
from .mapping import OccupancyMap, StopAt
from .sensing import NOMINAL_ARTIFACT_RADIUS, CameraModel, Detection
from .world import ARTIFACT_CLASSES


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


@dataclass(frozen=True)
class HypothesisConfig:
    """Consensus and Bayes-filter settings. Thresholds are posterior probabilities.

    ``range_gate`` > 0 drops localization hits farther than that from the depth
    implied by the bbox width and ``nominal_radius``; 0 keeps every hit.
    """

    radius: float = 1.0
    p_true_pos: float = 0.9
    p_false_pos: float = 0.2
    freeze_threshold: float = 0.95
    class_thresholds: dict[str, float] = field(default_factory=dict)
    grid_n: int = 5
    range_gate: float = 0.0
    nominal_radius: float = NOMINAL_ARTIFACT_RADIUS

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if not (0.0 < self.p_false_pos < self.p_true_pos < 1.0):
            raise ValueError("need 0 < p_false_pos < p_true_pos < 1")
        for p in [self.freeze_threshold, *self.class_thresholds.values()]:
            if not 0.5 < p < 1.0:
                raise ValueError("freeze thresholds must lie in (0.5, 1)")
        unknown = set(self.class_thresholds) - set(ARTIFACT_CLASSES)
        if unknown:
            raise ValueError(f"unknown artifact classes {sorted(unknown)}")
        if self.grid_n < 2:
            raise ValueError("grid_n must be >= 2")
        if self.range_gate < 0 or self.nominal_radius <= 0:
            raise ValueError("range_gate must be >= 0 and nominal_radius > 0")

    def threshold(self, cls: str) -> float:
        return self.class_thresholds.get(cls, self.freeze_threshold)

    @property
    def hit_increment(self) -> float:
        return math.log(self.p_true_pos / self.p_false_pos)

    @property
    def miss_increment(self) -> float:
        return math.log((1.0 - self.p_true_pos) / (1.0 - self.p_false_pos))


def localize_detection(
    det: Detection,
    pose: Pose,
    camera: CameraModel,
    snapshot: OccupancyMap,
    grid_n: int = 5,
    range_gate: float = 0.0,
    nominal_radius: float = NOMINAL_ARTIFACT_RADIUS,
) -> np.ndarray | None:
    """Cast a grid_n x grid_n pixel lattice over the bbox; per-coordinate median of hits.

    A hit is the centre of the first Occupied voxel along the pixel ray. With
    ``range_gate`` > 0, hits whose range differs from the bbox-implied depth
    by more than the gate count as misses. Returns None (NoReturn) when fewer
    than a quarter of the rays hit within the camera's detection range.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    u0, v0, u1, v1 = det.bbox
    depth = None
    if range_gate > 0 and u1 > u0:
        depth = camera.fx * nominal_radius / (0.5 * (u1 - u0))
    frac = (np.arange(grid_n) + 0.5) / grid_n
    us = u0 + frac * (u1 - u0)
    vs = v0 + frac * (v1 - v0)
    e = snapshot.voxel_edge
    hits = []
    for v in vs:
        for u in us:
            ray = camera.pixel_ray(pose, float(u), float(v))
            hit = snapshot.raycast(pose.position, ray, camera.max_detect_range, StopAt.OCCUPIED)
            if hit is None:
                continue
            if depth is not None and abs(hit.distance - depth) > range_gate:
                continue
            hits.append((np.asarray(hit.voxel, dtype=float) + 0.5) * e)
    if 4 * len(hits) < grid_n * grid_n:
        return None
    return np.median(np.array(hits), axis=0)


@dataclass
class ArtifactHypothesis:
    id: int
    center: np.ndarray
    radius: float
    detection_count: int = 1
    class_log_odds: dict[str, float] = field(default_factory=lambda: {c: 0.0 for c in ARTIFACT_CLASSES})
    frozen: bool = False
    frozen_class: str | None = None
    point_sum: np.ndarray = field(default=None, repr=False)
    reported: bool = False
    first_stamp: float = 0.0
    class_history: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).copy()
        if self.point_sum is None:
            self.point_sum = self.center * self.detection_count

    def posterior(self, cls: str) -> float:
        return 1.0 / (1.0 + math.exp(-self.class_log_odds[cls]))

    def probabilities(self) -> dict[str, float]:
        return {c: self.posterior(c) for c in ARTIFACT_CLASSES}


def _apply_class_update(h: ArtifactHypothesis, cls: str, cfg: HypothesisConfig) -> None:
    for c in ARTIFACT_CLASSES:
        h.class_log_odds[c] += cfg.hit_increment if c == cls else cfg.miss_increment
    # freeze on the class with the largest margin over its threshold, ties by class order
    best, best_margin = None, -math.inf
    for c in ARTIFACT_CLASSES:
        margin = h.class_log_odds[c] - logit(cfg.threshold(c))
        if margin >= 0.0 and margin > best_margin:
            best, best_margin = c, margin
    if best is not None:
        h.frozen = True
        h.frozen_class = best


def update_hypotheses(
    hyps: list[ArtifactHypothesis],
    cls: str,
    point,
    cfg: HypothesisConfig,
    stamp: float = 0.0,
) -> list[ArtifactHypothesis]:
    """Absorb a localized detection into the nearest sphere or spawn a new one.

    A point inside a frozen sphere is discarded: that artifact has already
    been decided, and spawning a duplicate would re-report it.
    """
    p = np.asarray(point, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("detection point must be finite")
    if cls not in ARTIFACT_CLASSES:
        raise ValueError(f"unknown artifact class {cls!r}")
    nearest, nearest_d = None, math.inf
    for h in hyps:
        d = float(np.linalg.norm(h.center - p))
        if d <= h.radius and d < nearest_d:
            nearest, nearest_d = h, d
    if nearest is not None and nearest.frozen:
        return hyps
    if nearest is None:
        h = ArtifactHypothesis(len(hyps), p, cfg.radius, first_stamp=stamp)
        hyps.append(h)
    else:
        h = nearest
        h.detection_count += 1
        h.point_sum = h.point_sum + p
        h.center = h.point_sum / h.detection_count
    h.class_history.append(cls)
    _apply_class_update(h, cls, cfg)
    return hyps


@dataclass
class ArtifactReport:
    stamp: float
    artifact_class: str
    location: np.ndarray
    class_probabilities: dict[str, float]
    detection_count: int
    source: str = "visual"
    thumbnail_ref: str | None = None

    def to_json(self) -> dict:
        return {
            "stamp": self.stamp,
            "class": self.artifact_class,
            "x": float(self.location[0]),
            "y": float(self.location[1]),
            "z": float(self.location[2]),
            "probabilities": self.class_probabilities,
            "detection_count": self.detection_count,
            "source": self.source,
            "thumbnail_ref": self.thumbnail_ref,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ArtifactReport":
        return cls(
            float(d.get("stamp", 0.0)),
            d["class"],
            np.array([d["x"], d["y"], d["z"]], dtype=float),
            dict(d.get("probabilities", {})),
            int(d.get("detection_count", 1)),
            d.get("source", "visual"),
            d.get("thumbnail_ref"),
        )


def report_frozen(hyps: list[ArtifactHypothesis], stamp: float = 0.0) -> list[ArtifactReport]:
    """One report per frozen hypothesis that has not been reported yet."""
    out = []
    for h in hyps:
        if h.frozen and not h.reported:
            h.reported = True
            out.append(ArtifactReport(stamp, h.frozen_class, h.center.copy(), h.probabilities(),
                                      h.detection_count, thumbnail_ref=f"hyp-{h.id}"))
    return out


@dataclass
class BluetoothLog:
    sums: dict[int, np.ndarray] = field(default_factory=dict)
    counts: dict[int, int] = field(default_factory=dict)
    last_stamp: dict[int, float] = field(default_factory=dict)


def record_bluetooth(log: BluetoothLog, scan_result, pose: Pose, stamp: float) -> BluetoothLog:
    for dev in scan_result:
        log.sums[dev] = log.sums.get(dev, np.zeros(3)) + pose.position
        log.counts[dev] = log.counts.get(dev, 0) + 1
        log.last_stamp[dev] = stamp
    return log


def finalize_bluetooth(log: BluetoothLog) -> list[ArtifactReport]:
    out = []
    for dev in sorted(log.counts):
        loc = log.sums[dev] / log.counts[dev]
        probs = {c: (1.0 if c == "cellphone" else 0.0) for c in ARTIFACT_CLASSES}
        out.append(ArtifactReport(log.last_stamp[dev], "cellphone", loc, probs, log.counts[dev],
                                  source="bluetooth", thumbnail_ref=f"bt-{dev}"))
    return out


def append_reports(path: str | Path, reports: list[ArtifactReport]) -> None:
    with open(path, "a") as fh:
        for r in reports:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")


def read_reports(path: str | Path) -> list[ArtifactReport]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            out.append(ArtifactReport.from_json(json.loads(line)))
    return out
