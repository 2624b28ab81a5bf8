"""
Navigation MDP: one step executes one motion primitive.

A setpoint moves along the rough path at constant speed; the reward compares the
vehicle's distance to that setpoint before and after the step. Execution is
kinematic: the vehicle follows the sampled primitive curve exactly unless the
swept sphere hits something, in which case it stops at the last free waypoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import StrEnum
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import Field, model_validator

from primnav.common import EpisodeUsageError, WorldValidationError, get_logger
from primnav.depthcam import CameraIntrinsics, GaussianNoise, add_noise, render
from primnav.parameters import Meters, MetersPerSecond, Parameters, Seconds
from primnav.primitives import MotionPrimitive, action_set, primitive_to_curve, sample_curve, yaw_rotation
from primnav.world import (
    DEFAULT_SWEEP_SAMPLES,
    DEFAULT_VEHICLE_RADIUS,
    WorldSpec,
    collision_check,
    path_deviation,
    path_progress,
    sweep_collision,
)

logger = get_logger(__name__)

GOAL_TOLERANCE = 1e-9


class RewardParams(Parameters):
    r_lower: float = 0.0
    r_upper: float = 0.5
    delta_d_lower: Meters = -1.0
    delta_d_upper: Meters = 1.0
    deviation_punishment: float = -0.5
    collision_punishment: float = -1.0
    deviation_limit: Meters = 5.0
    d_min_clamp: Meters = 1.0

    @model_validator(mode="after")
    def _check(self):
        if not self.r_lower < self.r_upper:
            raise ValueError("r_lower must be below r_upper")
        if not self.delta_d_lower < self.delta_d_upper:
            raise ValueError("delta_d_lower must be below delta_d_upper")
        if not self.collision_punishment <= self.deviation_punishment < 0:
            raise ValueError("punishments must satisfy collision <= deviation < 0")
        if self.d_min_clamp <= 0:
            raise ValueError("d_min_clamp must be positive")
        return self


class EnvConfig(Parameters):
    reward: RewardParams = Field(default_factory=RewardParams)
    camera: CameraIntrinsics = Field(default_factory=CameraIntrinsics)
    primitive_scale: Meters = 1.0
    action_set_path: Path | None = None
    vehicle_radius: Meters = DEFAULT_VEHICLE_RADIUS
    sweep_samples: int = Field(default=DEFAULT_SWEEP_SAMPLES, ge=2)
    setpoint_speed: MetersPerSecond = 1.0
    step_duration: Seconds = 1.0
    max_steps: int = Field(default=120, ge=1)
    depth_noise_sigma: float = Field(default=0.0, ge=0.0)

    @model_validator(mode="after")
    def _check(self):
        for name in ("primitive_scale", "vehicle_radius", "setpoint_speed", "step_duration"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        return self

    def actions(self) -> tuple[MotionPrimitive, ...]:
        return action_set(self.primitive_scale, self.action_set_path)

    def action_metadata(self) -> dict[str, float | str | None]:
        """The settings that fix which primitive each action index flies, as checkpoint metadata."""
        path = self.action_set_path
        return {
            "primitive_scale": self.primitive_scale,
            "setpoint_speed": self.setpoint_speed,
            "action_set_path": str(Path(path).resolve()) if path is not None else None,
        }


class RewardEvent(StrEnum):
    NONE = "none"
    DEVIATION = "deviation"
    COLLISION = "collision"


class EpisodeStatus(StrEnum):
    RUNNING = "running"
    GOAL_REACHED = "goal_reached"
    CRASHED = "crashed"
    DEVIATED = "deviated"
    TIMED_OUT = "timed_out"


@dataclass(frozen=True)
class SimState:
    vehicle_position: np.ndarray
    setpoint_position: np.ndarray
    step_index: int = 0
    cumulative_reward: float = 0.0
    status: EpisodeStatus = EpisodeStatus.RUNNING

    @property
    def terminal(self) -> bool:
        return self.status != EpisodeStatus.RUNNING


@dataclass(frozen=True)
class Observation:
    depth: np.ndarray
    relative_position: np.ndarray


@dataclass(frozen=True)
class Transition:
    observation: Observation
    action: int
    reward: float
    next_observation: Observation
    terminal: bool


@dataclass(frozen=True)
class StepResult:
    state: SimState
    observation: Observation
    reward: float
    terminal: bool


def reward_fn(params: RewardParams, delta_d: float, d_t: float, event: RewardEvent = RewardEvent.NONE) -> float:
    """Distance-change reward discounted by the clamped current distance to the setpoint."""
    if event == RewardEvent.COLLISION:
        return params.collision_punishment
    if event == RewardEvent.DEVIATION:
        return params.deviation_punishment
    denominator = max(d_t, params.d_min_clamp)
    if delta_d > params.delta_d_upper:
        return params.r_lower / denominator
    if delta_d < params.delta_d_lower:
        return params.r_upper / denominator
    span = params.delta_d_upper - params.delta_d_lower
    interpolated = params.r_lower + (params.r_upper - params.r_lower) * (params.delta_d_upper - delta_d) / span
    return interpolated / denominator


def make_observation(
    state: SimState,
    world: WorldSpec,
    config: EnvConfig,
    rng: np.random.Generator | None = None,
) -> Observation:
    """Depth image at the vehicle pose plus the setpoint offset expressed in the body frame."""
    yaw = world.path.yaw
    depth = render(world, state.vehicle_position, yaw, config.camera)
    if rng is not None and config.depth_noise_sigma > 0:
        depth = add_noise(depth, GaussianNoise(config.depth_noise_sigma), rng)
    relative = yaw_rotation(yaw).T @ (state.setpoint_position - state.vehicle_position)
    return Observation(depth, relative)


def reset(
    world: WorldSpec, config: EnvConfig, rng: np.random.Generator | None = None
) -> tuple[SimState, Observation]:
    start = np.array(world.path_start)
    if collision_check(world, start, config.vehicle_radius):
        raise WorldValidationError(f"world {world.name!r}: path start {world.path_start} is in collision")
    state = SimState(vehicle_position=start, setpoint_position=start.copy())
    return state, make_observation(state, world, config, rng)


def step(
    state: SimState,
    action: int,
    world: WorldSpec,
    config: EnvConfig,
    rng: np.random.Generator | None = None,
) -> StepResult:
    if state.terminal:
        raise EpisodeUsageError(f"episode already ended with status {state.status}")
    actions = config.actions()
    if not 0 <= action < len(actions):
        raise ValueError(f"action {action} outside 0..{len(actions) - 1}")

    path = world.path
    curve = primitive_to_curve(state.vehicle_position, path.yaw, actions[action])
    waypoints = sample_curve(curve, config.sweep_samples)
    step_index = state.step_index + 1
    hit = sweep_collision(world, waypoints, config.vehicle_radius)

    if hit is not None:
        stop = waypoints[hit - 1] if hit > 0 else state.vehicle_position
        reward = reward_fn(config.reward, 0.0, 0.0, RewardEvent.COLLISION)
        new_state = replace(
            state,
            vehicle_position=stop.copy(),
            step_index=step_index,
            cumulative_reward=state.cumulative_reward + reward,
            status=EpisodeStatus.CRASHED,
        )
        return StepResult(new_state, make_observation(new_state, world, config, rng), reward, True)

    vehicle = waypoints[-1].copy()
    setpoint_progress = path_progress(path, state.setpoint_position) + config.setpoint_speed * config.step_duration
    setpoint = path.point_at(setpoint_progress)
    d_previous = float(np.linalg.norm(state.setpoint_position - state.vehicle_position))
    d_t = float(np.linalg.norm(setpoint - vehicle))

    status = EpisodeStatus.RUNNING
    if path_deviation(path, vehicle) > config.reward.deviation_limit:
        reward = reward_fn(config.reward, d_t - d_previous, d_t, RewardEvent.DEVIATION)
        status = EpisodeStatus.DEVIATED
    else:
        reward = reward_fn(config.reward, d_t - d_previous, d_t)
        if path_progress(path, vehicle) >= path.length - GOAL_TOLERANCE:
            status = EpisodeStatus.GOAL_REACHED
        elif step_index >= config.max_steps:
            status = EpisodeStatus.TIMED_OUT

    new_state = SimState(
        vehicle_position=vehicle,
        setpoint_position=setpoint,
        step_index=step_index,
        cumulative_reward=state.cumulative_reward + reward,
        status=status,
    )
    return StepResult(new_state, make_observation(new_state, world, config, rng), reward, new_state.terminal)


@dataclass
class EpisodeTrace:
    """Per-step vehicle positions, actions and rewards of one episode."""

    rows: list[tuple] = field(default_factory=list)

    COLUMNS = ("step", "x", "y", "z", "action", "reward", "status")

    def record(self, state: SimState, action: int | None, reward: float) -> None:
        x, y, z = (float(v) for v in state.vehicle_position)
        self.rows.append((state.step_index, x, y, z, "" if action is None else action, reward, str(state.status)))

    def write_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(self.rows, columns=list(self.COLUMNS)).to_csv(path, index=False)
        return path


class NavigationEnv:
    """Stateful wrapper around `reset`/`step` for one world."""

    def __init__(self, world: WorldSpec, config: EnvConfig, rng: np.random.Generator | None = None):
        self.world = world
        self.config = config
        self.rng = rng
        self.state: SimState | None = None

    def reset(self) -> Observation:
        self.state, observation = reset(self.world, self.config, self.rng)
        return observation

    def step(self, action: int) -> StepResult:
        if self.state is None:
            raise EpisodeUsageError("call reset() before step()")
        result = step(self.state, action, self.world, self.config, self.rng)
        self.state = result.state
        return result
