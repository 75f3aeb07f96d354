"""Mission runner: configuration, the fixed-timestep loop, metrics and exports."""
from __future__ import annotations

import dataclasses
import json
import math
import time
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .artifacts import (
    ArtifactReport,
    BluetoothLog,
    HypothesisConfig,
    finalize_bluetooth,
    localize_detection,
    record_bluetooth,
    report_frozen,
    update_hypotheses,
)
from .control import ControllerConfig, ControllerState, TrackStatus, start_path, track_path
from .geometry import Pose
from .mapping import LogOddsParams, MapBounds, OccupancyMap, VoxelState, integrate_scan, maybe_shift_map
from .planner import (
    GlobalGraph,
    PlannerConfig,
    PlannerError,
    check_homing,
    home_path,
    improve_path_safety,
    path_length,
    plan_global_reposition,
    plan_local,
    refresh_frontiers,
    update_global_graph,
)
from .sensing import (
    CameraModel,
    DetectionNoise,
    LidarModel,
    Odometry,
    OdomNoise,
    detect_artifacts,
    scan_bluetooth,
    scan_lidar,
)
from .vehicle import RobotGeometry, RobotState, UnknownPolicy, step_dynamics
from .world import GroundTruthArtifact, TunnelSpec, WorldGrid, generate_tunnel_world, load_world, reachable_air

SCENARIO_DIR = Path(__file__).parent / "scenarios"

# fixed offsets that fan the master seed out to independent subsystem streams
SEED_LIDAR, SEED_DETECTOR, SEED_ODOMETRY, SEED_PLANNER = 11, 12, 13, 14


class ExitCode(IntEnum):
    SUCCESS = 0
    CONFIG_ERROR = 2
    MISSION_FAILURE = 3
    INVARIANT_VIOLATION = 4


class ConfigError(ValueError):
    pass


class MissionInvariantError(RuntimeError):
    def __init__(self, message: str, dump: dict):
        super().__init__(message)
        self.dump = dump


class Mode(IntEnum):
    EXPLORE = 0
    REPOSITION = 1
    HOMING = 2
    LANDED = 3


@dataclass
class WorldSource:
    """Either a world file or a generator spec with its seed."""

    file: str | None = None
    generate: dict | None = None
    seed: int = 0

    def __post_init__(self):
        if (self.file is None) == (self.generate is None):
            raise ValueError("world needs exactly one of 'file' or 'generate'")


@dataclass
class MissionConfig:
    world: WorldSource
    name: str = "mission"
    endurance: float = 600.0
    speed: float = 1.0
    dt: float = 0.01
    lidar: LidarModel = field(default_factory=LidarModel)
    camera: CameraModel = field(default_factory=CameraModel)
    detection_noise: DetectionNoise = field(default_factory=DetectionNoise)
    odometry_noise: OdomNoise = field(default_factory=OdomNoise)
    bluetooth_radius: float = 3.0
    bluetooth_rate: float = 1.0
    voxel_edge: float = 0.2
    map_bounds: MapBounds = field(default_factory=MapBounds)
    log_odds: LogOddsParams = field(default_factory=LogOddsParams)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    hypotheses: HypothesisConfig = field(default_factory=HypothesisConfig)
    homing_margin: float = 60.0
    homing_check_period: float = 1.0
    explored_period: float = 1.0
    trajectory_period: float = 0.1
    replan_hold: float = 0.2
    stuck_timeout: float = 10.0
    aggregate_scans: int = 3
    score_tol: float = 2.0
    seed: int = 0
    output_dir: str = "owl_run"
    base_dir: str = field(default=".", repr=False)

    def __post_init__(self):
        if self.endurance < 0:
            raise ValueError("endurance must be >= 0")
        if self.speed <= 0:
            raise ValueError("speed must be positive")
        if not 0.0 < self.dt <= 0.1:
            raise ValueError("dt must be in (0, 0.1]")
        for name in ("bluetooth_radius", "bluetooth_rate", "voxel_edge", "homing_check_period",
                     "explored_period", "trajectory_period", "score_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.homing_margin < 0 or self.replan_hold < 0:
            raise ValueError("homing_margin and replan_hold must be >= 0")
        for name, rate in (("lidar", self.lidar.rate), ("camera", self.camera.rate),
                           ("bluetooth", self.bluetooth_rate)):
            if rate <= 0:
                raise ValueError(f"{name} rate must be positive")
            if self.ticks(1.0 / rate) < 1:
                raise ValueError(f"{name} period is shorter than the simulation step")
        # the vehicle speed cap doubles as the tracking reference speed
        self.controller = dataclasses.replace(self.controller, reference_speed=self.speed)

    def ticks(self, period: float) -> int:
        """A period realised as a whole number of simulation steps."""
        return int(round(period / self.dt))


_NESTED = {
    "world": WorldSource,
    "lidar": LidarModel,
    "camera": CameraModel,
    "detection_noise": DetectionNoise,
    "odometry_noise": OdomNoise,
    "map_bounds": MapBounds,
    "log_odds": LogOddsParams,
    "planner": PlannerConfig,
    "controller": ControllerConfig,
    "hypotheses": HypothesisConfig,
}


def _build(cls, data, where: str):
    if isinstance(data, cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    extra = sorted(set(data) - known)
    if extra:
        raise ConfigError(f"{where}: unknown keys {extra}")
    kwargs = dict(data)
    for k, v in kwargs.items():
        if isinstance(v, list):
            kwargs[k] = tuple(v)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(data: dict, base_dir: str | Path = ".") -> MissionConfig:
    """Build and validate a MissionConfig; every failure becomes ConfigError."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if "world" not in data:
        raise ConfigError("config: missing 'world'")
    d = dict(data)
    for key, cls in _NESTED.items():
        if key in d:
            d[key] = _build(cls, d[key], key)
    d["base_dir"] = str(base_dir)
    return _build(MissionConfig, d, "config")


def load_config(path: str | Path, overrides: dict | None = None) -> MissionConfig:
    p = Path(path)
    if not p.exists():
        p = SCENARIO_DIR / Path(path).name
    try:
        data = json.loads(p.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if overrides:
        data.update(overrides)
    return config_from_dict(data, p.parent)


def resolve_world(cfg: MissionConfig) -> WorldGrid:
    src = cfg.world
    try:
        if src.generate is not None:
            return generate_tunnel_world(TunnelSpec.from_dict(src.generate), src.seed)
        for cand in (Path(cfg.base_dir) / src.file, Path(src.file), SCENARIO_DIR / Path(src.file).name):
            if cand.exists():
                return load_world(cand)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"world: {exc}") from None
    raise ConfigError(f"world file {src.file!r} not found")


# --------------------------------------------------------------------------- scoring


@dataclass
class ArtifactScore:
    true_positives: int
    false_positives: int
    false_negatives: int
    precision: float
    recall: float
    matches: list[tuple[int, int | None]]  # (report index, ground-truth id or None)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def score_artifacts(reports: list[ArtifactReport], truth: list[GroundTruthArtifact], tol: float) -> ArtifactScore:
    """Greedy one-to-one matching: a report claims the nearest unclaimed same-class artifact within tol.

    With no reports precision is 1 by convention; with no ground truth recall is 1.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    claimed: set[int] = set()
    matches = []
    for i, r in enumerate(reports):
        best, best_d = None, math.inf
        for a in truth:
            if a.id in claimed or a.cls != r.artifact_class:
                continue
            d = float(np.linalg.norm(np.asarray(a.center) - r.location))
            if d <= tol and d < best_d:
                best, best_d = a.id, d
        if best is not None:
            claimed.add(best)
        matches.append((i, best))
    tp = len(claimed)
    fp = len(reports) - tp
    fn = len(truth) - tp
    precision = tp / len(reports) if reports else 1.0
    recall = tp / len(truth) if truth else 1.0
    return ArtifactScore(tp, fp, fn, precision, recall, matches)


# --------------------------------------------------------------------------- metrics


@dataclass
class MissionMetrics:
    outcome: str = "running"
    travelled_distance: float = 0.0
    flight_time: float = 0.0
    explored_free_voxels: int = 0
    reachable_free_voxels: int = 0
    explored_fraction: float = 0.0
    collision_count: int = 0
    max_impact_speed: float = 0.0
    homing_triggered: bool = False
    homing_trigger_time: float | None = None
    homing_success: bool = False
    final_distance_to_home: float = 0.0
    planning_iterations: int = 0
    map_shifts: int = 0
    artifact_reports: list[dict] = field(default_factory=list)
    artifact_score: dict | None = None
    bluetooth_score: dict | None = None

    @property
    def exit_code(self) -> ExitCode:
        return ExitCode.SUCCESS if self.outcome == "landed" else ExitCode.MISSION_FAILURE

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class MissionResult:
    metrics: MissionMetrics
    output_dir: Path | None
    wall_clock: float
    explored_history: list[tuple[float, float]]
    shift_log: list[dict]
    reports: list[ArtifactReport]


# --------------------------------------------------------------------------- runner


def _fmt(v: float) -> str:
    return repr(float(v))


class Mission:
    """The simulation loop. One instance runs one mission; everything is seeded."""

    def __init__(self, cfg: MissionConfig, world: WorldGrid | None = None):
        self.cfg = cfg
        self.world = world if world is not None else resolve_world(cfg)
        if self.world.start is None:
            raise ConfigError("world has no start position")
        seed = int(cfg.seed)
        self.rng_lidar = np.random.default_rng([seed, SEED_LIDAR])
        self.rng_det = np.random.default_rng([seed, SEED_DETECTOR])
        self.rng_plan = np.random.default_rng([seed, SEED_PLANNER])
        self.odometry = Odometry(cfg.odometry_noise, np.random.default_rng([seed, SEED_ODOMETRY]))

        self.geom: RobotGeometry = cfg.planner.robot_cuboid
        home = self.world.start.copy()
        self.home = home
        self.state = RobotState(home.copy())
        self.map = OccupancyMap.from_bounds(cfg.map_bounds, home, cfg.voxel_edge, cfg.log_odds)
        # the robot occupies its own volume, so those voxels start as observed free
        self.map.clear_box(home, self.geom.cuboid_extent)
        self.graph = GlobalGraph.with_home(home)
        self.ctrl = ControllerState()

        self.mode = Mode.EXPLORE
        self.path: np.ndarray | None = None
        self.path_started = 0.0
        self.hold_until = -1.0
        self.nogain = 0
        self.k = 0
        self.recent_hits: deque = deque(maxlen=max(1, cfg.aggregate_scans))

        self.hyps = []
        self.bt_log = BluetoothLog()
        self.reports: list[ArtifactReport] = []

        self.metrics = MissionMetrics()
        self.trace: list[dict] = []
        self.events = []
        self.rows: list[str] = []
        self.shift_log: list[dict] = []
        self.explored_history: list[tuple[float, float]] = []

        reach = reachable_air(self.world)
        cells = np.argwhere(reach)
        centers = self.world.origin + (cells + 0.5) * self.world.voxel_edge
        self.reach_voxels = np.floor(centers / cfg.voxel_edge).astype(np.int64)
        self.explored = np.zeros(len(cells), dtype=bool)

        self.lidar_ticks = cfg.ticks(1.0 / cfg.lidar.rate)
        self.det_ticks = cfg.ticks(1.0 / cfg.camera.rate)
        self.bt_ticks = cfg.ticks(1.0 / cfg.bluetooth_rate)
        self.homing_ticks = cfg.ticks(cfg.homing_check_period)
        self.explored_ticks = cfg.ticks(cfg.explored_period)
        self.traj_ticks = max(1, cfg.ticks(cfg.trajectory_period))

    # ---------------------------------------------------------------- helpers

    @property
    def t(self) -> float:
        return self.k * self.cfg.dt

    def _dump(self) -> dict:
        return {
            "t": self.t,
            "mode": self.mode.name,
            "position": self.state.position.tolist(),
            "velocity": self.state.velocity.tolist(),
            "yaw": self.state.yaw,
            "integrals": self.ctrl.integrals.tolist(),
            "path": None if self.path is None else self.path.tolist(),
            "global_vertices": len(self.graph),
        }

    def _invariant(self, ok: bool, message: str) -> None:
        if not ok:
            raise MissionInvariantError(message, self._dump())

    def _update_explored(self) -> None:
        states = self.map.states_of_voxels(self.reach_voxels)
        self.explored |= states == VoxelState.FREE
        frac = float(self.explored.mean()) if len(self.explored) else 1.0
        if self.explored_history:
            self._invariant(frac >= self.explored_history[-1][1], "explored fraction decreased")
        self.explored_history.append((self.t, frac))

    def _log_row(self) -> None:
        s = self.state
        vals = [self.t, *s.position, s.yaw, *s.velocity]
        self.rows.append(",".join(_fmt(v) for v in vals) + f",{self.mode.name.lower()}")

    # ---------------------------------------------------------------- sensing

    def _lidar(self, true_pose: Pose, est: Pose) -> None:
        cloud = scan_lidar(self.world, true_pose, self.cfg.lidar, self.rng_lidar, self.t)
        b = self.cfg.map_bounds
        lower, upper = self.map.lower, self.map.upper
        p = est.position
        if np.any(p - lower < b.shift_margin) or np.any(upper - p < b.shift_margin):
            self._update_explored()
            self.map, shift = maybe_shift_map(self.map, p, b)
            self.metrics.map_shifts += 1
            self.shift_log.append({"t": self.t, "shift": shift.tolist(), "position": p.tolist()})
            self._invariant(
                bool(np.all(p - self.map.lower >= b.shift_margin) and np.all(self.map.upper - p >= b.shift_margin)),
                "robot within shift margin after a map shift",
            )
        integrate_scan(self.map, cloud, est)
        pts = cloud.points[cloud.hit_mask] @ est.rotation().T + est.position
        self.recent_hits.append(pts)

    def _detect(self, true_pose: Pose, est: Pose) -> None:
        dets = detect_artifacts(self.world, true_pose, self.cfg.camera, self.cfg.detection_noise,
                                self.rng_det, self.t)
        hcfg = self.cfg.hypotheses
        for det in dets:
            point = localize_detection(det, est, self.cfg.camera, self.map, hcfg.grid_n,
                                       hcfg.range_gate, hcfg.nominal_radius)
            if point is None:
                continue
            update_hypotheses(self.hyps, det.artifact_class, point, hcfg, self.t)
        self.reports.extend(report_frozen(self.hyps, self.t))

    # ---------------------------------------------------------------- planning

    def _trace(self, trigger: str, **kw) -> None:
        entry = {"t": self.t, "trigger": trigger, "mode": self.mode.name.lower(),
                 "global_vertices": len(self.graph), "frontiers": len(self.graph.frontiers)}
        entry.update(kw)
        self.trace.append(entry)

    def _set_path(self, path, mode: Mode) -> None:
        path = np.asarray(path, dtype=float).reshape(-1, 3)
        if mode in (Mode.REPOSITION, Mode.HOMING):
            # global-graph vertices include past robot positions, which may hug a wall
            path = improve_path_safety(path, self.map.view(), self.cfg.planner)
        self.path = path
        self.mode = mode
        self.path_started = self.t
        self.ctrl = start_path(self.ctrl, self.path)

    def _start_homing(self, path, reason: str, snap) -> None:
        if path is None:
            try:
                path, _ = home_path(self.graph, self.est.position, snap, self.cfg.planner)
            except PlannerError as exc:
                self._invariant(False, f"cannot connect to the global graph for homing: {exc}")
        if not self.metrics.homing_triggered:
            self.metrics.homing_triggered = True
            self.metrics.homing_trigger_time = self.t
        self._set_path(path, Mode.HOMING)
        self._trace("homing", reason=reason, path_length=path_length(self.path))

    def _check_homing(self, snap) -> bool:
        cfg = self.cfg
        try:
            dec = check_homing(self.graph, self.est.position, self.t, cfg.endurance, cfg.speed,
                               cfg.homing_margin, snap, cfg.planner)
        except PlannerError as exc:
            self._invariant(False, f"homing check failed: {exc}")
        if dec.return_now:
            self._start_homing(dec.path, "endurance", snap)
            return True
        return False

    def _plan(self) -> None:
        cfg = self.cfg
        pcfg = cfg.planner
        pos = self.est.position
        snap = self.map.view()
        self.metrics.planning_iterations += 1
        if self._check_homing(snap):
            return
        cloud = self._aggregated_cloud()
        local = None
        for policy in (pcfg.unknown_policy, UnknownPolicy.OPTIMISTIC):
            try:
                local = plan_local(snap, pos, cloud, pcfg, self.rng_plan, policy)
                break
            except PlannerError:
                continue
        update_global_graph(self.graph, local, pos, snap, pcfg)
        found = local is not None and local.found
        self._trace(
            "local",
            found=found,
            vertices=0 if local is None else local.vertex_count,
            edges=0 if local is None else local.edge_count,
            best_gain=0.0 if local is None else local.gain,
            leaf=None if local is None else local.best_leaf,
            evaluations=0 if local is None else local.evaluations,
        )
        if found:
            self.nogain = 0
            self._set_path(local.path, Mode.EXPLORE)
            return
        self.nogain += 1
        if self.nogain < pcfg.k_trigger:
            self._hold()
            return
        self.nogain = 0
        # frontiers next to a spot where local planning keeps failing are stale
        for v in self.graph.frontiers:
            if np.linalg.norm(self.graph.vertices[v].position - pos) <= pcfg.rho:
                self.graph.vertices[v].is_frontier = False
        refresh_frontiers(self.graph, snap, pcfg)
        rep = plan_global_reposition(self.graph, pos, cfg.endurance - self.t, cfg.speed, pcfg, snap)
        self._trace("global", found=rep.found, frontier=rep.frontier, score=rep.score)
        if rep.found:
            self._set_path(rep.path, Mode.REPOSITION)
        else:
            self._start_homing(None, "no_frontier", snap)

    def _aggregated_cloud(self) -> np.ndarray:
        """Recent hits, one point per map voxel so dense near-field returns do
        not dominate the percentile span of the local box."""
        if not self.recent_hits:
            return np.zeros((0, 3))
        pts = np.concatenate(list(self.recent_hits))
        keys = np.floor(pts / self.cfg.voxel_edge).astype(np.int64)
        _, first = np.unique(keys, axis=0, return_index=True)
        return pts[np.sort(first)]

    def _hold(self) -> None:
        # hover at the last reference point: it was collision-checked at plan time,
        # whereas the current position may still carry momentum toward a wall
        ref = self.ctrl.reference
        spot = self.est.position if ref is None else ref.position
        self._set_path(np.asarray(spot)[None, :], Mode.EXPLORE)
        self.hold_until = self.t + self.cfg.replan_hold

    def _path_blocked(self) -> bool:
        """Remaining path segments now cross Occupied voxels."""
        if self.path is None or len(self.path) < 2:
            return False
        half = self.geom.half
        i = max(1, self.ctrl.waypoint_index)
        pts = [self.est.position] + list(self.path[i:])
        for a, b in zip(pts[:-1], pts[1:]):
            if not self.map.segment_allowed(a, b, half, int(UnknownPolicy.OPTIMISTIC)):
                return True
        return False

    def _overdue(self) -> bool:
        budget = 3.0 * path_length(self.path) / self.cfg.speed + self.cfg.stuck_timeout
        return self.t - self.path_started > budget

    # ---------------------------------------------------------------- loop

    def _land(self) -> None:
        self.mode = Mode.LANDED
        self.state = RobotState(self.state.position, np.zeros(3), self.state.yaw, 0.0, self.state.time)
        self.metrics.outcome = "landed"
        self.metrics.homing_success = True

    def run(self) -> MissionMetrics:
        cfg = self.cfg
        dt = cfg.dt
        m = self.metrics
        self._log_row()
        while True:
            true_pose = Pose(self.state.position, self.state.yaw)
            self.est = self.odometry.read(true_pose, dt)
            if self.k % self.lidar_ticks == 0:
                self._lidar(true_pose, self.est)
                if self.mode != Mode.HOMING and self._path_blocked():
                    self.path = None
            if self.k % self.explored_ticks == 0:
                self._update_explored()
            if self.k % self.det_ticks == 0:
                self._detect(true_pose, self.est)
            if self.k % self.bt_ticks == 0:
                record_bluetooth(self.bt_log, scan_bluetooth(self.world, true_pose, cfg.bluetooth_radius),
                                 self.est, self.t)
            if (self.k % self.homing_ticks == 0 and self.k > 0 and self.path is not None
                    and self.mode in (Mode.EXPLORE, Mode.REPOSITION)):
                self._check_homing(self.map.view())
            if self.path is not None and self.mode in (Mode.EXPLORE, Mode.REPOSITION) and self._overdue():
                self.path = None
            if self.path is None:
                self._plan()

            accel, yaw_rate, self.ctrl, status = track_path(
                self.ctrl, self.path, self.est.position, self.state.velocity, self.est.yaw, dt, cfg.controller
            )
            self._invariant(
                bool(np.all(self.ctrl.integrals >= np.asarray(cfg.controller.i_min) - 1e-12)
                     and np.all(self.ctrl.integrals <= np.asarray(cfg.controller.i_max) + 1e-12)),
                "controller integral outside its clamp",
            )
            if status == TrackStatus.DONE:
                if self.mode == Mode.HOMING:
                    self._land()
                    break
                if self.t >= self.hold_until:
                    self.path = None
            if self.t >= cfg.endurance:
                m.outcome = "endurance_exhausted"
                break

            prev = self.state.position
            self.state, events = step_dynamics(self.state, accel, yaw_rate, dt, self.world, self.geom, cfg.speed)
            self.events.extend(events)
            self._invariant(bool(np.all(np.isfinite(self.state.position))), "non-finite robot position")
            m.travelled_distance += float(np.linalg.norm(self.state.position - prev))
            for ev in events:
                m.collision_count += 1
                m.max_impact_speed = max(m.max_impact_speed, ev.impact_speed)
            self.k += 1
            if self.k % self.traj_ticks == 0:
                self._log_row()

        if self.k % self.traj_ticks != 0 or self.mode == Mode.LANDED:
            self._log_row()
        self._update_explored()
        m.flight_time = self.t
        m.explored_free_voxels = int(self.explored.sum())
        m.reachable_free_voxels = int(len(self.explored))
        m.explored_fraction = self.explored_history[-1][1]
        m.final_distance_to_home = float(np.linalg.norm(self.state.position - self.home))
        bt_reports = finalize_bluetooth(self.bt_log)
        visual = list(self.reports)
        self.reports = visual + bt_reports
        m.artifact_reports = [r.to_json() for r in self.reports]
        m.artifact_score = score_artifacts(visual, self.world.artifacts, cfg.score_tol).to_json()
        bt_truth = [a for a in self.world.artifacts if a.bluetooth]
        m.bluetooth_score = score_artifacts(bt_reports, bt_truth, cfg.score_tol).to_json()
        return m

    # ---------------------------------------------------------------- exports

    def write_outputs(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trajectory.csv").write_text("t,x,y,z,yaw,vx,vy,vz,mode\n" + "\n".join(self.rows) + "\n")
        with open(out / "planner_trace.jsonl", "w") as fh:
            for e in self.trace:
                fh.write(json.dumps(e, sort_keys=True) + "\n")
        with open(out / "artifacts.jsonl", "w") as fh:
            for r in self.reports:
                fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")
        (out / "metrics.json").write_text(json.dumps(self.metrics.to_json(), indent=2, sort_keys=True) + "\n")
        self.map.save(out / "map.owlmap")
        return out


def run_mission(cfg: MissionConfig, out_dir: str | Path | None = None, world: WorldGrid | None = None,
                write: bool = True) -> MissionResult:
    """Run one mission and write its exports. Raises MissionInvariantError on violations
    (after writing ``state_dump.json`` to the output directory)."""
    t0 = time.perf_counter()
    mission = Mission(cfg, world)
    target = Path(out_dir if out_dir is not None else cfg.output_dir)
    try:
        metrics = mission.run()
    except MissionInvariantError as exc:
        if write:
            target.mkdir(parents=True, exist_ok=True)
            (target / "state_dump.json").write_text(json.dumps({"error": str(exc), **exc.dump}, indent=2))
        raise
    written = mission.write_outputs(target) if write else None
    return MissionResult(metrics, written, time.perf_counter() - t0, mission.explored_history,
                         mission.shift_log, mission.reports)
