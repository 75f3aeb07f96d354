from __future__ import annotations

from dataclasses import dataclass, field

from ..mapping import GainSensorModel
from ..vehicle import RobotGeometry, UnknownPolicy


class PlannerError(RuntimeError):
    pass


@dataclass
class PlannerConfig:
    """Tunables of the local/global exploration planner.

    Gain thresholds are in the same units as the gains: unknown-voxel counts
    scaled by ``epsilon_g``. ``extra_frontier_paths`` lets each local step also
    hand the global graph paths to that many further high-gain leaves (spaced
    ``extra_path_separation`` apart), so side branches the robot passes by
    stay on record as frontiers.
    """

    epsilon_g: float = 1.0
    rho: float = 1.0
    k_trigger: int = 3
    gain_threshold: float = 50.0
    frontier_gain_threshold: float = 200.0
    local_box_min: tuple[float, float, float] = (4.0, 4.0, 2.0)
    local_box_max: tuple[float, float, float] = (30.0, 30.0, 10.0)
    num_samples: int = 300
    edge_radius: float = 2.0
    robot_cuboid: RobotGeometry = field(default_factory=RobotGeometry)
    cuboid_margin: float = 0.0
    unknown_policy: UnknownPolicy = UnknownPolicy.STRICT
    leaf_only_gain: bool = True
    lambda_discount: float = 0.0
    gain_sensor: GainSensorModel = field(default_factory=GainSensorModel)
    safety_clearance_max: float = 1.0
    frontier_recheck_radius: float = 15.0
    global_connect_neighbors: int = 5
    extra_frontier_paths: int = 0
    extra_path_separation: float = 4.0

    def __post_init__(self):
        if isinstance(self.robot_cuboid, dict):
            self.robot_cuboid = RobotGeometry(**self.robot_cuboid)
        if isinstance(self.gain_sensor, dict):
            self.gain_sensor = GainSensorModel(**self.gain_sensor)
        if isinstance(self.unknown_policy, str):
            self.unknown_policy = UnknownPolicy[self.unknown_policy.upper()]
        self.unknown_policy = UnknownPolicy(self.unknown_policy)
        self.local_box_min = tuple(float(v) for v in self.local_box_min)
        self.local_box_max = tuple(float(v) for v in self.local_box_max)
        if self.epsilon_g <= 0:
            raise ValueError("epsilon_g must be > 0")
        if self.rho <= 0:
            raise ValueError("rho must be > 0")
        if self.k_trigger < 1:
            raise ValueError("k_trigger must be >= 1")
        if any(a > b or a <= 0 for a, b in zip(self.local_box_min, self.local_box_max)):
            raise ValueError("local box extents need 0 < min <= max")
        if self.lambda_discount < 0:
            raise ValueError("lambda_discount must be >= 0")
        if self.num_samples < 0 or self.edge_radius <= 0:
            raise ValueError("num_samples >= 0 and edge_radius > 0 required")
        if self.extra_frontier_paths < 0 or self.extra_path_separation <= 0:
            raise ValueError("extra_frontier_paths >= 0 and extra_path_separation > 0 required")
        if self.cuboid_margin < 0:
            raise ValueError("cuboid_margin must be >= 0")

    @property
    def geometry(self) -> RobotGeometry:
        """The cuboid actually checked for collisions (extents plus margin)."""
        if self.cuboid_margin == 0.0:
            return self.robot_cuboid
        return self.robot_cuboid.inflated(self.cuboid_margin)
