"""
Obstacle worlds: boxes and spheres around a straight rough path.

Axes: the default path runs along +x, y is lateral (left positive) and z is up.
World bounds, when present, behave like obstacles: leaving them is a collision.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from primnav.common import WorldParseError, WorldValidationError, get_logger

logger = get_logger(__name__)

Vec3 = tuple[float, float, float]

DEFAULT_VEHICLE_RADIUS = 0.3
DEFAULT_SWEEP_SAMPLES = 11
UNIT_TOLERANCE = 1e-9


def _vec3(values) -> Vec3:
    out = tuple(float(v) for v in values)
    if len(out) != 3:
        raise WorldValidationError(f"expected 3 coordinates, got {len(out)}")
    if not all(np.isfinite(out)):
        raise WorldValidationError(f"coordinates must be finite, got {out}")
    return out


@dataclass(frozen=True)
class Box:
    lo: Vec3
    hi: Vec3

    def __post_init__(self):
        object.__setattr__(self, "lo", _vec3(self.lo))
        object.__setattr__(self, "hi", _vec3(self.hi))
        if not all(a < b for a, b in zip(self.lo, self.hi)):
            raise WorldValidationError(f"box min {self.lo} must be below max {self.hi} on every axis")

    def contains(self, point) -> bool:
        p = np.asarray(point)
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))

    def statement(self, keyword: str = "box") -> str:
        return " ".join([keyword, *map(repr, self.lo + self.hi)])


@dataclass(frozen=True)
class Sphere:
    center: Vec3
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if not self.radius > 0:
            raise WorldValidationError(f"sphere radius must be positive, got {self.radius}")

    def statement(self) -> str:
        return " ".join(["sphere", *map(repr, self.center + (self.radius,))])


Obstacle = Box | Sphere


@dataclass(frozen=True)
class RoughPath:
    start: Vec3
    end: Vec3

    def __post_init__(self):
        object.__setattr__(self, "start", _vec3(self.start))
        object.__setattr__(self, "end", _vec3(self.end))
        if self.start == self.end:
            raise WorldValidationError("path start and end must differ")

    @cached_property
    def origin(self) -> np.ndarray:
        return np.array(self.start)

    @cached_property
    def length(self) -> float:
        return float(np.linalg.norm(np.subtract(self.end, self.start)))

    @cached_property
    def direction(self) -> np.ndarray:
        return np.subtract(self.end, self.start) / self.length

    @property
    def yaw(self) -> float:
        """Heading of the path projected on the horizontal plane."""
        return float(np.arctan2(self.direction[1], self.direction[0]))

    def point_at(self, distance: float) -> np.ndarray:
        return self.origin + float(np.clip(distance, 0.0, self.length)) * self.direction


@dataclass(frozen=True)
class _Geometry:
    box_lo: np.ndarray
    box_hi: np.ndarray
    sphere_centers: np.ndarray
    sphere_radii: np.ndarray


@dataclass(frozen=True)
class WorldSpec:
    name: str
    path_start: Vec3
    path_end: Vec3
    bounds: Box | None = None
    obstacles: tuple[Obstacle, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "path_start", _vec3(self.path_start))
        object.__setattr__(self, "path_end", _vec3(self.path_end))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.path_start == self.path_end:
            raise WorldValidationError(f"world {self.name!r}: path start and end must differ")
        if self.bounds is not None:
            for label, point in (("start", self.path_start), ("end", self.path_end)):
                if not self.bounds.contains(point):
                    raise WorldValidationError(f"world {self.name!r}: path {label} {point} lies outside bounds")

    @cached_property
    def path(self) -> RoughPath:
        return RoughPath(self.path_start, self.path_end)

    @cached_property
    def geometry(self) -> _Geometry:
        boxes = [o for o in self.obstacles if isinstance(o, Box)]
        spheres = [o for o in self.obstacles if isinstance(o, Sphere)]
        return _Geometry(
            box_lo=np.array([b.lo for b in boxes]).reshape(-1, 3),
            box_hi=np.array([b.hi for b in boxes]).reshape(-1, 3),
            sphere_centers=np.array([s.center for s in spheres]).reshape(-1, 3),
            sphere_radii=np.array([s.radius for s in spheres]),
        )

    def to_text(self) -> str:
        lines = ["# primnav world file, all units in meters", f"name {self.name}"]
        if self.bounds is not None:
            lines.append(self.bounds.statement("bounds"))
        lines.append(" ".join(["path", *map(repr, self.path_start + self.path_end)]))
        lines.extend(obstacle.statement() for obstacle in self.obstacles)
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# World files

_ARITY = {"bounds": 6, "path": 6, "box": 6, "sphere": 4}


def load_world(text: str) -> WorldSpec:
    name = "world"
    bounds: Box | None = None
    path: tuple[float, ...] | None = None
    obstacles: list[Obstacle] = []
    seen: set[str] = set()

    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        keyword, *tail = line.split(None, 1)
        rest = tail[0] if tail else ""
        if keyword == "name":
            if not rest.strip():
                raise WorldParseError(line_number, "name needs a value")
            name = rest.strip()
            continue
        if keyword not in _ARITY:
            raise WorldParseError(line_number, f"unknown statement {keyword!r}")
        fields = rest.split()
        if len(fields) != _ARITY[keyword]:
            raise WorldParseError(line_number, f"{keyword} takes {_ARITY[keyword]} numbers, got {len(fields)}")
        try:
            numbers = tuple(float(v) for v in fields)
        except ValueError as exc:
            raise WorldParseError(line_number, str(exc)) from exc
        if keyword in ("bounds", "path"):
            if keyword in seen:
                raise WorldParseError(line_number, f"duplicate {keyword} statement")
            seen.add(keyword)
        try:
            if keyword == "bounds":
                bounds = Box(numbers[:3], numbers[3:])
            elif keyword == "path":
                path = numbers
            elif keyword == "box":
                obstacles.append(Box(numbers[:3], numbers[3:]))
            else:
                obstacles.append(Sphere(numbers[:3], numbers[3]))
        except WorldValidationError as exc:
            raise WorldValidationError(f"line {line_number}: {exc}") from exc

    if path is None:
        raise WorldValidationError("world file has no path statement")
    return WorldSpec(name, path[:3], path[3:], bounds, tuple(obstacles))


def read_world(path: Path) -> WorldSpec:
    return load_world(Path(path).read_text())


def write_world(path: Path, world: WorldSpec) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(world.to_text())
    return path


# ---------------------------------------------------------------------------
# Queries


def clearance(world: WorldSpec, points: np.ndarray) -> np.ndarray:
    """
    Distance from each point (N, 3) to the nearest obstacle surface or bounds face.

    Box distances use the per-axis clamp (0 inside the box), sphere distances are
    |p - c| - r, and the bounds term is negative outside the bounds.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    geo = world.geometry
    best = np.full(points.shape[0], np.inf)
    if len(geo.box_lo):
        closest = np.clip(points[:, np.newaxis, :], geo.box_lo, geo.box_hi)
        best = np.minimum(best, np.linalg.norm(points[:, np.newaxis, :] - closest, axis=2).min(axis=1))
    if len(geo.sphere_radii):
        gap = np.linalg.norm(points[:, np.newaxis, :] - geo.sphere_centers, axis=2) - geo.sphere_radii
        best = np.minimum(best, gap.min(axis=1))
    if world.bounds is not None:
        inside = np.minimum(points - world.bounds.lo, np.subtract(world.bounds.hi, points)).min(axis=1)
        best = np.minimum(best, inside)
    return best


def collision_check(world: WorldSpec, point, radius: float = DEFAULT_VEHICLE_RADIUS) -> bool:
    return bool(clearance(world, point)[0] < radius)


def sweep_collision(world: WorldSpec, waypoints: np.ndarray, radius: float = DEFAULT_VEHICLE_RADIUS) -> int | None:
    """Index of the first colliding waypoint, or None when the whole sweep is free."""
    waypoints = np.asarray(waypoints, dtype=np.float64)
    if waypoints.shape[0] < 2:
        raise ValueError("a sweep needs at least 2 waypoints")
    hits = np.flatnonzero(clearance(world, waypoints) < radius)
    return int(hits[0]) if hits.size else None


def _slab_hits(origin: np.ndarray, inv_dirs: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    # (N, nb) nearest positive hit per box; exit distance when the origin is inside.
    with np.errstate(invalid="ignore"):
        t1 = (lo - origin) * inv_dirs[:, np.newaxis, :]
        t2 = (hi - origin) * inv_dirs[:, np.newaxis, :]
    t_near = np.fmax.reduce(np.fmin(t1, t2), axis=2)
    t_far = np.fmin.reduce(np.fmax(t1, t2), axis=2)
    t = np.where(t_near > 0, t_near, t_far)
    return np.where((t_near <= t_far) & (t > 0), t, np.inf)


def ray_distances(world: WorldSpec, origin, directions: np.ndarray) -> np.ndarray:
    """Nearest positive hit distance along each unit direction (N, 3); inf on a miss."""
    origin = np.asarray(origin, dtype=np.float64)
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    geo = world.geometry
    best = np.full(directions.shape[0], np.inf)

    box_lo, box_hi = geo.box_lo, geo.box_hi
    if world.bounds is not None:
        box_lo = np.vstack([box_lo, world.bounds.lo])
        box_hi = np.vstack([box_hi, world.bounds.hi])
    if len(box_lo):
        with np.errstate(divide="ignore"):
            inv_dirs = 1.0 / directions
        best = np.minimum(best, _slab_hits(origin, inv_dirs, box_lo, box_hi).min(axis=1))

    if len(geo.sphere_radii):
        oc = origin - geo.sphere_centers
        b = directions @ oc.T
        c = np.einsum("ij,ij->i", oc, oc) - geo.sphere_radii**2
        disc = b**2 - c
        root = np.sqrt(np.maximum(disc, 0.0))
        near, far = -b - root, -b + root
        t = np.where(near > 0, near, far)
        best = np.minimum(best, np.where((disc >= 0) & (t > 0), t, np.inf).min(axis=1))
    return best


def ray_intersect(world: WorldSpec, origin, direction) -> float | None:
    direction = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(direction) - 1.0) > UNIT_TOLERANCE:
        raise ValueError(f"ray direction must be a unit vector, got norm {np.linalg.norm(direction)}")
    distance = ray_distances(world, origin, direction)[0]
    return float(distance) if np.isfinite(distance) else None


def path_progress(path: RoughPath, position) -> float:
    along = float(np.dot(np.asarray(position) - path.origin, path.direction))
    return float(np.clip(along, 0.0, path.length))


def path_deviation(path: RoughPath, position) -> float:
    offset = np.asarray(position) - path.origin
    return float(np.linalg.norm(offset - np.dot(offset, path.direction) * path.direction))


# ---------------------------------------------------------------------------
# Builtin environments

PATH_LENGTH = 60.0
PATH_HEIGHT = 5.0
DEFAULT_BOUNDS = Box((-5.0, -10.0, 0.0), (70.0, 10.0, 12.0))
GATE_GAP = 3.0


def _straight_world(name: str, obstacles=()) -> WorldSpec:
    return WorldSpec(
        name,
        (0.0, 0.0, PATH_HEIGHT),
        (PATH_LENGTH, 0.0, PATH_HEIGHT),
        DEFAULT_BOUNDS,
        tuple(obstacles),
    )


def _corridor(half_width: float, wall: float = 1.0) -> list[Obstacle]:
    lo, hi = DEFAULT_BOUNDS.lo, DEFAULT_BOUNDS.hi
    return [
        Box((lo[0], half_width, lo[2]), (hi[0], half_width + wall, hi[2])),
        Box((lo[0], -half_width - wall, lo[2]), (hi[0], -half_width, hi[2])),
    ]


def _gates(positions, thickness: float, axis: int, first_offset: float) -> list[Obstacle]:
    """Walls across the path leaving a GATE_GAP opening, alternating sides along `axis` (1 = y, 2 = z)."""
    lo, hi = DEFAULT_BOUNDS.lo, DEFAULT_BOUNDS.hi
    center = PATH_HEIGHT if axis == 2 else 0.0
    gates: list[Obstacle] = []
    for n, x in enumerate(positions):
        gap_center = center + (first_offset if n % 2 == 0 else -first_offset)
        gap_lo, gap_hi = gap_center - GATE_GAP / 2, gap_center + GATE_GAP / 2
        below_lo, below_hi = list(lo), list(hi)
        below_lo[0], below_hi[0] = x, x + thickness
        above_lo, above_hi = list(below_lo), list(below_hi)
        below_hi[axis] = gap_lo
        above_lo[axis] = gap_hi
        gates.append(Box(below_lo, below_hi))
        gates.append(Box(above_lo, above_hi))
    return gates


def builtin_envs() -> dict[str, WorldSpec]:
    """The ten builtin worlds: seven training worlds followed by three unseen test worlds."""
    worlds = [
        _straight_world("obstacle-free"),
        _straight_world("wide-corridor", _corridor(half_width=4.0)),
        _straight_world("narrow-corridor", _corridor(half_width=2.0)),
        _straight_world("slalom-lr-1", _gates([10, 20, 30, 40, 50], 1.0, axis=1, first_offset=3.0)),
        _straight_world("slalom-lr-2", _gates([12, 24, 36, 48], 2.0, axis=1, first_offset=-3.0)),
        _straight_world("slalom-ud-1", _gates([10, 20, 30, 40, 50], 1.0, axis=2, first_offset=3.0)),
        _straight_world("slalom-ud-2", _gates([12, 24, 36, 48], 2.0, axis=2, first_offset=-3.0)),
        _straight_world(
            "mixed-1",
            _corridor(half_width=3.0)
            + [
                Box((15.0, -3.0, 0.0), (17.0, 0.5, 12.0)),
                Box((30.0, -0.5, 0.0), (32.0, 3.0, 12.0)),
                Sphere((48.0, 0.0, 5.0), 2.2),
            ],
        ),
        _straight_world(
            "mixed-2",
            [
                Box((10.0, -1.5, 0.0), (12.0, 1.5, 12.0)),
                Sphere((22.0, 2.0, 5.0), 1.5),
                Sphere((22.0, -3.0, 4.0), 1.0),
                Box((32.0, -4.0, 0.0), (34.0, 0.5, 8.0)),
                Sphere((45.0, 0.0, 6.0), 2.0),
                Box((52.0, 1.0, 0.0), (53.0, 5.0, 12.0)),
            ],
        ),
        _straight_world(
            "mixed-3",
            _corridor(half_width=4.0)
            + [
                Sphere((12.0, 1.5, 5.0), 1.5),
                Sphere((24.0, -2.0, 4.0), 1.2),
                Box((34.0, -4.0, 0.0), (36.0, 0.0, 4.0)),
                Sphere((46.0, 2.0, 6.0), 1.8),
                Sphere((54.0, -1.5, 5.0), 1.0),
            ],
        ),
    ]
    return {world.name: world for world in worlds}


ENV_NAMES = tuple(builtin_envs())
TRAINING_ENVS = ENV_NAMES[:7]
UNSEEN_ENVS = ENV_NAMES[7:]


def get_builtin(name: str) -> WorldSpec:
    """Look up a builtin world by name or by its 1-based alias `env1`..`env10`."""
    envs = builtin_envs()
    if name in envs:
        return envs[name]
    if name.startswith("env") and name[3:].isdigit() and 1 <= int(name[3:]) <= len(ENV_NAMES):
        return envs[ENV_NAMES[int(name[3:]) - 1]]
    raise WorldValidationError(f"unknown builtin world {name!r}; choose from {', '.join(ENV_NAMES)}")


def resolve_world(ref: str | Path) -> WorldSpec:
    """A world file path when one exists at `ref`, else a builtin world name."""
    candidate = Path(ref)
    if candidate.is_file():
        return read_world(candidate)
    return get_builtin(str(ref))
