"""
Cubic Bézier motion primitives.

A primitive is a body-frame end displacement. It is turned into a world-frame
cubic curve whose inner control points coincide with the endpoints, so every
primitive starts and stops with zero velocity and any sequence of them chains
smoothly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.special import comb

from primnav.common import ConfigurationError

DEGREE = 3
PRIMITIVE_COUNT = 18

# (dy, dz) offsets shared by the forward and the non-forward half of the table.
LATERAL_OFFSETS = ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1))


@dataclass(frozen=True)
class ControlPoints:
    points: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.shape != (DEGREE + 1, 3):
            raise ValueError(f"a cubic curve needs 4 control points in 3-D, got shape {points.shape}")
        object.__setattr__(self, "points", points)

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]


@dataclass(frozen=True)
class MotionPrimitive:
    id: int
    end_displacement: tuple[float, float, float]  # body frame: forward, left, up

    @property
    def is_forward(self) -> bool:
        return self.end_displacement[0] > 0


def bernstein(n: int, i: int, t: float) -> float:
    """(1 - t)^(n - i) t^i; the binomial weight is applied in `bezier_eval`."""
    if not 0 <= i <= n:
        raise ValueError(f"Bernstein index {i} outside [0, {n}]")
    return (1.0 - t) ** (n - i) * t**i


def _basis(t: np.ndarray) -> np.ndarray:
    # (len(t), 4) matrix of binomial-weighted cubic Bernstein terms.
    t = np.asarray(t, dtype=np.float64)[:, np.newaxis]
    i = np.arange(DEGREE + 1)
    return comb(DEGREE, i) * (1.0 - t) ** (DEGREE - i) * t**i


def bezier_eval(cp: ControlPoints, t: float) -> np.ndarray:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"curve parameter {t} outside [0, 1]")
    return _basis(np.array([t]))[0] @ cp.points


def sample_curve(cp: ControlPoints, n_samples: int) -> np.ndarray:
    """`n_samples` points (n_samples, 3) at evenly spaced t, first = P0 and last = P3."""
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples, got {n_samples}")
    samples = _basis(np.linspace(0.0, 1.0, n_samples)) @ cp.points
    # Pin the endpoints exactly.
    samples[0] = cp.points[0]
    samples[-1] = cp.points[-1]
    return samples


def yaw_rotation(yaw: float) -> np.ndarray:
    """Body-to-world rotation about +z."""
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def primitive_to_curve(start_position: np.ndarray, yaw: float, prim: MotionPrimitive) -> ControlPoints:
    start = np.asarray(start_position, dtype=np.float64)
    end = start + yaw_rotation(yaw) @ np.asarray(prim.end_displacement, dtype=np.float64)
    return ControlPoints(np.stack([start, start, end, end]))


def default_action_table(primitive_scale: float = 1.0) -> list[MotionPrimitive]:
    """Nine forward-moving primitives (ids 0-8) then nine non-forward ones (ids 9-17, 9 = hover)."""
    if primitive_scale <= 0:
        raise ConfigurationError(f"primitive_scale must be positive, got {primitive_scale}")
    s = float(primitive_scale)
    table = []
    for dx in (s, 0.0):
        for dy, dz in LATERAL_OFFSETS:
            table.append(MotionPrimitive(len(table), (dx, dy * s, dz * s)))
    return table


def parse_action_table(text: str, primitive_scale: float = 1.0) -> list[MotionPrimitive]:
    """
    Parse an action-set override: one `id dx dy dz` line per primitive, meters, `#` comments.

    Displacements are checked against `primitive_scale`; ids must be dense 0..17.
    """
    table: dict[int, MotionPrimitive] = {}
    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 4:
            raise ConfigurationError(f"action table line {line_number}: expected 'id dx dy dz'")
        try:
            prim_id = int(fields[0])
            displacement = tuple(float(v) for v in fields[1:])
        except ValueError as exc:
            raise ConfigurationError(f"action table line {line_number}: {exc}") from exc
        if prim_id in table:
            raise ConfigurationError(f"action table line {line_number}: duplicate id {prim_id}")
        if max(abs(v) for v in displacement) > primitive_scale + 1e-12:
            raise ConfigurationError(
                f"action table line {line_number}: displacement exceeds primitive_scale {primitive_scale}"
            )
        table[prim_id] = MotionPrimitive(prim_id, displacement)
    if sorted(table) != list(range(PRIMITIVE_COUNT)):
        raise ConfigurationError(f"action table must define ids 0..{PRIMITIVE_COUNT - 1} exactly once")
    displacements = {prim.end_displacement for prim in table.values()}
    if len(displacements) != PRIMITIVE_COUNT:
        raise ConfigurationError("action table contains repeated displacements")
    return [table[i] for i in range(PRIMITIVE_COUNT)]


@lru_cache(maxsize=16)
def action_set(primitive_scale: float = 1.0, override_path: Path | None = None) -> tuple[MotionPrimitive, ...]:
    """The 18 discrete actions, from the default table or an override file."""
    if override_path is not None:
        return tuple(parse_action_table(Path(override_path).read_text(), primitive_scale))
    return tuple(default_action_table(primitive_scale))
