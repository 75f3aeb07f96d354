"""Ground-truth voxel worlds: procedural tunnel networks and the world file format."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .fileio import FileFormatError, format_payload, parse_payload

ARTIFACT_CLASSES = (
    "survivor",
    "fire_extinguisher",
    "drill",
    "backpack",
    "vent",
    "helmet",
    "rope",
    "cellphone",
)

AIR = 0
SOLID = 1


class WorldError(ValueError):
    pass


class GenerationError(WorldError):
    """A TunnelSpec that cannot be realised on its grid."""


@dataclass(frozen=True)
class GroundTruthArtifact:
    id: int
    cls: str
    center: tuple[float, float, float]
    bluetooth: bool = False

    def __post_init__(self):
        if self.cls not in ARTIFACT_CLASSES:
            raise WorldError(f"unknown artifact class {self.cls!r}")


@dataclass
class WorldGrid:
    origin: np.ndarray
    voxel_edge: float
    solid: np.ndarray  # (nx, ny, nz) uint8, 1 = Solid
    artifacts: list[GroundTruthArtifact] = field(default_factory=list)
    start: np.ndarray | None = None

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float).reshape(3)
        self.solid = np.ascontiguousarray(self.solid, dtype=np.uint8)
        self.solid.setflags(write=False)
        if self.start is not None:
            self.start = np.asarray(self.start, dtype=float).reshape(3)
        self.validate()

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.solid.shape)

    @property
    def upper(self) -> np.ndarray:
        return self.origin + np.array(self.dims) * self.voxel_edge

    def cell_of(self, point) -> tuple[int, int, int]:
        q = (np.asarray(point, dtype=float) - self.origin) / self.voxel_edge
        return tuple(int(v) for v in np.floor(q))

    def cell_center(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.voxel_edge

    def in_bounds(self, idx) -> bool:
        return all(0 <= i < n for i, n in zip(idx, self.dims))

    def validate(self) -> None:
        if not self.voxel_edge > 0:
            raise WorldError("voxel_edge must be positive")
        if self.solid.ndim != 3 or min(self.solid.shape) < 1:
            raise WorldError("cells must form a 3-D grid with positive dims")
        s = self.solid
        if not (s[0].all() and s[-1].all() and s[:, 0].all() and s[:, -1].all()
                and s[:, :, 0].all() and s[:, :, -1].all()):
            raise WorldError("boundary shell of the grid must be Solid")
        for a in self.artifacts:
            idx = self.cell_of(a.center)
            if not self.in_bounds(idx) or s[idx]:
                raise WorldError(f"artifact {a.id} center {a.center} is not inside an Air cell")
        if self.start is not None:
            idx = self.cell_of(self.start)
            if not self.in_bounds(idx) or s[idx]:
                raise WorldError("start position is not inside an Air cell")

    def air_count(self) -> int:
        return int(self.solid.size - np.count_nonzero(self.solid))


def is_solid(world: WorldGrid, point) -> bool:
    """True iff ``point`` lies in a Solid cell; outside the grid counts as Solid."""
    idx = world.cell_of(point)
    if not world.in_bounds(idx):
        return True
    return bool(world.solid[idx])


def reachable_air(world: WorldGrid, start=None) -> np.ndarray:
    """6-connected flood fill over Air from ``start`` (defaults to world.start)."""
    start = world.start if start is None else start
    seed = world.cell_of(start)
    return _flood(world.solid == AIR, seed)


def _flood(air: np.ndarray, seed) -> np.ndarray:
    seen = np.zeros(air.shape, dtype=bool)
    if not air[seed]:
        return seen
    seen[seed] = True
    queue = deque([seed])
    nx, ny, nz = air.shape
    while queue:
        x, y, z = queue.popleft()
        for dx, dy, dz in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
            a, b, c = x + dx, y + dy, z + dz
            if 0 <= a < nx and 0 <= b < ny and 0 <= c < nz and air[a, b, c] and not seen[a, b, c]:
                seen[a, b, c] = True
                queue.append((a, b, c))
    return seen


def cast_ray(world: WorldGrid, origin, direction, max_range: float) -> float | None:
    """Range to the first Solid cell along a unit direction, None on a miss."""
    t = kernels.world_cast(
        world.solid, world.origin, world.voxel_edge,
        np.asarray(origin, dtype=float), np.asarray(direction, dtype=float), float(max_range),
    )
    return None if t < 0 else float(t)


# --------------------------------------------------------------------------- generation


@dataclass
class TunnelSpec:
    """Parameters of a procedurally carved tunnel network (lengths in metres)."""

    extent: tuple[float, float, float] = (80.0, 80.0, 6.0)
    voxel_edge: float = 0.2
    segments: int = 8
    segment_length: tuple[float, float] = (20.0, 30.0)
    width: tuple[float, float] = (1.6, 2.4)
    height: tuple[float, float] = (2.0, 2.6)
    leg_length: tuple[float, float] = (4.0, 10.0)
    turn_prob: float = 0.35
    room_prob: float = 0.5
    room_size: tuple[float, float] = (3.0, 5.0)
    wall: float = 1.0
    floor: float = 0.4
    total_length: float | None = None
    artifacts: int = 0
    artifact_separation: float = 4.0
    artifact_start_clearance: float = 5.0

    @classmethod
    def from_dict(cls, d: dict) -> "TunnelSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise GenerationError(f"unknown TunnelSpec keys: {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kw)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self.__dict__.items()}


@dataclass
class Leg:
    segment: int
    start: np.ndarray  # 2-D centre line start (m)
    end: np.ndarray
    width: float
    height: float

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.end - self.start))

    @property
    def heading(self) -> np.ndarray:
        return (self.end - self.start) / max(self.length, 1e-12)


@dataclass
class TunnelLayout:
    legs: list[Leg]
    rooms: list[tuple[np.ndarray, float, float]]  # centre, side, height
    start: np.ndarray

    @property
    def total_length(self) -> float:
        return sum(leg.length for leg in self.legs)


ROOM_LABEL = 1 << 20

_HEADINGS = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])


def _check_spec(spec: TunnelSpec) -> None:
    e = spec.voxel_edge
    if spec.segments < 1:
        raise GenerationError("segments must be >= 1")
    if e <= 0:
        raise GenerationError("voxel_edge must be positive")
    if spec.width[0] < 3 * e - 1e-9:
        raise GenerationError(f"width {spec.width[0]} m is below 3 voxels ({3 * e} m)")
    if spec.height[0] < 3 * e - 1e-9:
        raise GenerationError(f"height {spec.height[0]} m is below 3 voxels ({3 * e} m)")
    if spec.width[0] > spec.width[1] or spec.height[0] > spec.height[1]:
        raise GenerationError("range minimum exceeds maximum")
    if spec.segment_length[0] <= 0 or spec.leg_length[0] <= 0:
        raise GenerationError("segment and leg lengths must be positive")
    need_xy = spec.width[1] + 2 * spec.wall + 2 * e
    if min(spec.extent[0], spec.extent[1]) < need_xy + spec.leg_length[0]:
        raise GenerationError(
            f"extent {spec.extent[:2]} cannot hold a {spec.width[1]} m corridor with walls"
        )
    if spec.extent[2] < spec.floor + spec.height[1] + 2 * e:
        raise GenerationError(f"extent z {spec.extent[2]} m below floor + max height")


class _Carver:
    def __init__(self, spec: TunnelSpec):
        self.spec = spec
        e = spec.voxel_edge
        self.e = e
        self.dims = tuple(int(round(x / e)) for x in spec.extent)
        self.air = np.zeros(self.dims, dtype=bool)
        self.owner = np.full(self.dims[:2], -1, dtype=np.int64)
        self.z0 = int(round(spec.floor / e)) + 1

    def _xy_range(self, lo: np.ndarray, hi: np.ndarray):
        """Cells whose centres lie in [lo, hi): a box of width w spans round(w / e) cells."""
        e = self.e
        eps = 1e-6
        i0 = max(1, int(math.ceil(lo[0] / e - 0.5 - eps)))
        i1 = min(self.dims[0] - 2, int(math.ceil(hi[0] / e - 0.5 - eps)) - 1)
        j0 = max(1, int(math.ceil(lo[1] / e - 0.5 - eps)))
        j1 = min(self.dims[1] - 2, int(math.ceil(hi[1] / e - 0.5 - eps)) - 1)
        return i0, i1, j0, j1

    def leg_box(self, start, end, width):
        half = 0.5 * width
        lo = np.minimum(start, end) - half
        hi = np.maximum(start, end) + half
        return lo, hi

    def fits(self, lo, hi, height) -> bool:
        m = self.spec.wall + self.e
        return (
            lo[0] >= m and lo[1] >= m
            and hi[0] <= self.spec.extent[0] - m and hi[1] <= self.spec.extent[1] - m
            and self.z0 + int(round(height / self.e)) <= self.dims[2] - 1
        )

    def clashes(self, lo, hi, allowed: set[int]) -> bool:
        """Would the box, grown by the wall thickness, touch air carved by a feature
        outside ``allowed``? Features are leg indices; rooms use ``ROOM_LABEL + k``."""
        w = self.spec.wall
        i0, i1, j0, j1 = self._xy_range(lo - w, hi + w)
        if i1 < i0 or j1 < j0:
            return False
        labels = np.unique(self.owner[i0 : i1 + 1, j0 : j1 + 1])
        return any(int(v) >= 0 and int(v) not in allowed for v in labels)

    def carve(self, lo, hi, height, label: int):
        i0, i1, j0, j1 = self._xy_range(lo, hi)
        k1 = min(self.dims[2] - 2, self.z0 + int(round(height / self.e)) - 1)
        self.air[i0 : i1 + 1, j0 : j1 + 1, self.z0 : k1 + 1] = True
        block = self.owner[i0 : i1 + 1, j0 : j1 + 1]
        block[block < 0] = label


def _walk_segment(cv, rng, spec, seg, pos, heading_idx, width, height, target, first_allowed, base):
    """Axis-biased random walk; carves and returns the legs it managed to place.

    ``base`` is the global index the first new leg will get. The first leg may
    touch the features in ``first_allowed`` (its parent); later legs only their
    predecessor, so corridors never merge side by side.
    """
    e = spec.voxel_edge
    legs: list[Leg] = []
    done = 0.0
    while done < target - 1e-9:
        want = min(float(rng.uniform(*spec.leg_length)), target - done)
        if not legs:
            options = [heading_idx]
        else:
            side_turns = [(heading_idx + 1) % 4, (heading_idx + 3) % 4]
            rng.shuffle(side_turns)
            if rng.random() < spec.turn_prob:
                options = side_turns + [heading_idx]
            else:
                options = [heading_idx] + side_turns
        allowed = set(first_allowed) if not legs else {base + len(legs) - 1}
        placed = False
        for h in options:
            for length in (want, 0.5 * want, 2.0 * width):
                if length < max(width, 2 * e):
                    continue
                end = (np.floor((pos + _HEADINGS[h] * length) / e) + 0.5) * e
                lo, hi = cv.leg_box(pos, end, width)
                if not cv.fits(lo, hi, height) or cv.clashes(lo, hi, allowed):
                    continue
                cv.carve(lo, hi, height, base + len(legs))
                legs.append(Leg(seg, pos.copy(), end.copy(), width, height))
                done += float(np.linalg.norm(end - pos))
                pos = end
                heading_idx = h
                placed = True
                break
            if placed:
                break
        if not placed:
            break
    return legs


def carve_tunnels(spec: TunnelSpec, seed: int) -> tuple[np.ndarray, TunnelLayout]:
    """Carve the corridor network; returns (air mask, layout)."""
    _check_spec(spec)
    rng = np.random.default_rng(seed)
    cv = _Carver(spec)
    e = spec.voxel_edge
    legs: list[Leg] = []
    rooms: list[tuple[np.ndarray, float, float]] = []

    w0 = spec.width[1]
    start = np.array([spec.wall + e + w0, spec.extent[1] / 2.0])
    start = (np.floor(start / e) + 0.5) * e

    target_total = spec.total_length if spec.total_length else None
    seg = 0
    failures = 0
    while True:
        built = sum(leg.length for leg in legs)
        if seg >= spec.segments and (target_total is None or built >= target_total):
            break
        if failures > 20 * max(spec.segments, 1):
            break
        width = spec.width[1] if seg == 0 else float(rng.uniform(*spec.width))
        height = float(rng.uniform(*spec.height))
        target = float(rng.uniform(*spec.segment_length))
        if target_total is not None and seg >= spec.segments - 1:
            target = min(target, max(target_total - built, 2 * width))
        if seg == 0:
            pos, heading_idx, parent = start.copy(), 0, None
        else:
            parent_idx = int(rng.integers(len(legs)))
            parent = legs[parent_idx]
            f = float(rng.uniform(0.15, 0.85))
            pos = (np.floor((parent.start + f * (parent.end - parent.start)) / e) + 0.5) * e
            pidx = int(np.argmax(_HEADINGS @ parent.heading))
            heading_idx = (pidx + (1 if rng.random() < 0.5 else 3)) % 4
        room = None
        first_allowed: set[int] = set()
        if parent is not None:
            first_allowed = {parent_idx}
            # the legs meeting the parent at its corners share its walls
            for k in (parent_idx - 1, parent_idx + 1):
                if 0 <= k < len(legs) and legs[k].segment == parent.segment:
                    first_allowed.add(k)
            if rng.random() < spec.room_prob:
                side = max(float(rng.uniform(*spec.room_size)), width + 2 * e)
                room = (side, max(height, parent.height))
        seg_legs = _walk_segment(cv, rng, spec, seg, pos, heading_idx, width, height, target,
                                 first_allowed, len(legs))
        if not seg_legs:
            if seg == 0:
                raise GenerationError("first segment could not be placed inside the extent")
            failures += 1
            continue
        if room is not None:
            lo, hi = pos - room[0] / 2, pos + room[0] / 2
            if cv.fits(lo, hi, room[1]) and not cv.clashes(lo, hi, first_allowed | {len(legs)}):
                cv.carve(lo, hi, room[1], ROOM_LABEL + len(rooms))
                rooms.append((pos.copy(), room[0], room[1]))
        legs.extend(seg_legs)
        seg += 1

    start3 = np.array([start[0], start[1], (cv.z0 * e) + min(1.0, 0.5 * legs[0].height)])
    return cv.air, TunnelLayout(legs, rooms, start3)


def _place_artifacts(air: np.ndarray, spec: TunnelSpec, origin, start, rng) -> list[GroundTruthArtifact]:
    if spec.artifacts <= 0:
        return []
    e = spec.voxel_edge
    # every cell of the 3x3x3 neighbourhood must be Air; rest on the floor (solid two below)
    clear = air.copy()
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dz in (-1, 0, 1):
                clear &= np.roll(air, (dx, dy, dz), axis=(0, 1, 2))
    floor_mask = np.zeros_like(clear)
    floor_mask[:, :, 2:] = ~air[:, :, :-2]
    cand = np.argwhere(clear & floor_mask)
    if len(cand) == 0:
        raise GenerationError("no Air cell with one-voxel clearance for artifacts")
    order = rng.permutation(len(cand))
    placed: list[np.ndarray] = []
    out: list[GroundTruthArtifact] = []
    for k in order:
        c = origin + (cand[k] + 0.5) * e
        if np.linalg.norm(c[:2] - start[:2]) < spec.artifact_start_clearance:
            continue
        if any(np.linalg.norm(c - p) < spec.artifact_separation for p in placed):
            continue
        cls = ARTIFACT_CLASSES[int(rng.integers(len(ARTIFACT_CLASSES)))]
        out.append(GroundTruthArtifact(len(out), cls, tuple(float(v) for v in c), cls == "cellphone"))
        placed.append(c)
        if len(out) == spec.artifacts:
            break
    if len(out) < spec.artifacts:
        raise GenerationError(
            f"only {len(out)} of {spec.artifacts} artifacts fit with separation {spec.artifact_separation} m"
        )
    return out


def generate_tunnel_world(spec: TunnelSpec, seed: int) -> WorldGrid:
    """Deterministically carve a tunnel network and place artifacts in it."""
    air, layout = carve_tunnels(spec, seed)
    seed_cell = tuple(int(v) for v in np.floor(layout.start / spec.voxel_edge))
    reach = _flood(air, seed_cell)
    air &= reach  # guards the reachability invariant against carving corner cases
    origin = np.zeros(3)
    rng = np.random.default_rng([seed, 1])
    artifacts = _place_artifacts(air, spec, origin, layout.start, rng)
    return WorldGrid(origin, spec.voxel_edge, (~air).astype(np.uint8), artifacts, layout.start)


# --------------------------------------------------------------------------- file format

WORLD_MAGIC = "OWLWORLD 1"


def save_world(world: WorldGrid, path: str | Path) -> None:
    lines = [
        WORLD_MAGIC,
        "ORIGIN " + " ".join(repr(float(v)) for v in world.origin),
        f"VOXEL_EDGE {float(world.voxel_edge)!r}",
        "DIMS " + " ".join(str(d) for d in world.dims),
    ]
    if world.start is not None:
        lines.append("START " + " ".join(repr(float(v)) for v in world.start))
    lines.append(f"ARTIFACTS {len(world.artifacts)}")
    for a in world.artifacts:
        x, y, z = a.center
        lines.append(f"ARTIFACT {a.id} {a.cls} {x!r} {y!r} {z!r} {int(a.bluetooth)}")
    lines.extend(format_payload(world.solid))
    Path(path).write_text("\n".join(lines) + "\n")


def _floats(tokens, n, lineno, key):
    if len(tokens) != n + 1:
        raise FileFormatError(f"{key} expects {n} values", lineno)
    try:
        return [float(t) for t in tokens[1:]]
    except ValueError:
        raise FileFormatError(f"non-numeric {key} value", lineno) from None


def load_world(path: str | Path) -> WorldGrid:
    """Parse a world file; parse problems raise FileFormatError, invariants WorldError."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != WORLD_MAGIC:
        raise FileFormatError(f"missing magic {WORLD_MAGIC!r}", 1)
    origin = edge = dims = start = None
    artifacts: list[GroundTruthArtifact] = []
    expected_artifacts = None
    i = 1
    while i < len(lines) and not lines[i].startswith("RLE"):
        toks = lines[i].split()
        ln = i + 1
        if not toks:
            i += 1
            continue
        key = toks[0]
        if key == "ORIGIN":
            origin = _floats(toks, 3, ln, key)
        elif key == "VOXEL_EDGE":
            edge = _floats(toks, 1, ln, key)[0]
        elif key == "DIMS":
            try:
                dims = tuple(int(t) for t in toks[1:])
            except ValueError:
                raise FileFormatError("non-integer DIMS", ln) from None
            if len(dims) != 3 or min(dims) <= 0:
                raise FileFormatError("DIMS expects 3 positive integers", ln)
        elif key == "START":
            start = _floats(toks, 3, ln, key)
        elif key == "ARTIFACTS":
            expected_artifacts = int(toks[1])
        elif key == "ARTIFACT":
            if len(toks) != 7:
                raise FileFormatError("ARTIFACT expects: id class x y z bt", ln)
            try:
                art = GroundTruthArtifact(
                    int(toks[1]), toks[2], (float(toks[3]), float(toks[4]), float(toks[5])),
                    bool(int(toks[6])),
                )
            except (ValueError, WorldError) as exc:
                raise FileFormatError(f"bad ARTIFACT record: {exc}", ln) from None
            artifacts.append(art)
        else:
            raise FileFormatError(f"unknown header key {key!r}", ln)
        i += 1
    if origin is None or edge is None or dims is None:
        raise FileFormatError("header lacks ORIGIN, VOXEL_EDGE or DIMS", i + 1)
    if expected_artifacts is not None and expected_artifacts != len(artifacts):
        raise FileFormatError(
            f"ARTIFACTS says {expected_artifacts}, found {len(artifacts)} records", i + 1
        )
    solid = parse_payload(lines, i, dims, {AIR, SOLID})
    return WorldGrid(np.array(origin), edge, solid, artifacts, start)
