"""
Navigation evaluation: greedy rollouts per world, per-trial results and summaries.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable, Self

import numpy as np
import pandas as pd
from pydantic import Field

from primnav.common import get_logger
from primnav.dqn import QNetworkParams, forward
from primnav.env_rl import EnvConfig, EpisodeStatus, EpisodeTrace, NavigationEnv, Observation
from primnav.parameters import Meters, MetersPerSecond, Parameters
from primnav.report import Table, Title, display
from primnav.world import TRAINING_ENVS, UNSEEN_ENVS, WorldSpec, path_progress

logger = get_logger(__name__)

Policy = Callable[[Observation], int]

TRAINED_ENV_FIELDS = ("primitive_scale", "setpoint_speed", "action_set_path")

RESULT_COLUMNS = ["env", "trial", "navigation_distance_m", "navigation_time_s", "crash", "total_reward"]


class EvalConfig(Parameters):
    trials: int = Field(default=5, ge=1)
    max_steps: int = Field(default=120, ge=1)
    base_seed: int = 0
    noise_sigma: float = Field(default=0.02, ge=0.0)
    primitive_scale: Meters = 1.0
    setpoint_speed: MetersPerSecond = 1.0
    action_set_path: Path | None = None

    def env_config(self) -> EnvConfig:
        return EnvConfig(
            primitive_scale=self.primitive_scale,
            setpoint_speed=self.setpoint_speed,
            action_set_path=self.action_set_path,
            max_steps=self.max_steps,
            depth_noise_sigma=self.noise_sigma,
        )

    @classmethod
    def for_checkpoint(cls, metadata: dict[str, Any], **values: Any) -> Self:
        """
        Evaluation settings for a trained checkpoint.

        The primitive scale, setpoint speed and action table recorded at training
        time override `values`; Q-value index i must fly the primitive it was trained on.
        Checkpoints without these entries fall back to the defaults.
        """
        trained = {key: metadata[key] for key in TRAINED_ENV_FIELDS if metadata.get(key) is not None}
        for key, value in trained.items():
            if key in values and values[key] != value:
                logger.warning(f"Ignoring {key}={values[key]!r}: the checkpoint was trained with {value!r}")
        return cls.model_validate(values | trained)


@dataclass(frozen=True)
class EpisodeResult:
    env: str
    trial: int
    navigation_distance: float
    navigation_time: float
    crash: bool
    total_reward: float
    status: str
    steps: int


def greedy_policy(params: QNetworkParams) -> Policy:
    """Argmax over Q-values, lowest index on ties."""

    def act(observation: Observation) -> int:
        return int(np.argmax(forward(params, observation.depth, observation.relative_position)))

    return act


def run_trial(
    world: WorldSpec,
    policy: Policy,
    env_config: EnvConfig,
    rng: np.random.Generator,
    trial: int = 0,
    trace: EpisodeTrace | None = None,
) -> EpisodeResult:
    env = NavigationEnv(world, env_config, rng)
    observation = env.reset()
    if trace is not None:
        trace.record(env.state, None, 0.0)
    while True:
        action = policy(observation)
        result = env.step(action)
        if trace is not None:
            trace.record(result.state, action, result.reward)
        observation = result.observation
        if result.terminal:
            break
    state = env.state
    return EpisodeResult(
        env=world.name,
        trial=trial,
        navigation_distance=path_progress(world.path, state.vehicle_position),
        navigation_time=state.step_index * env_config.step_duration,
        crash=state.status == EpisodeStatus.CRASHED,
        total_reward=state.cumulative_reward,
        status=str(state.status),
        steps=state.step_index,
    )


def evaluate(
    params: QNetworkParams | None,
    world: WorldSpec,
    trials: int,
    config: EvalConfig | None = None,
    policy: Policy | None = None,
    trace_dir: Path | None = None,
) -> list[EpisodeResult]:
    """
    Run `trials` greedy episodes in `world`.

    Trial `k` draws depth noise from a generator seeded with (base_seed, k), so
    trials differ only when noise is enabled. `policy` replaces the network policy.
    """
    config = config or EvalConfig()
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if policy is None:
        if params is None:
            raise ValueError("evaluate needs network parameters or an explicit policy")
        policy = greedy_policy(params)
    env_config = config.env_config()

    results = []
    for trial in range(trials):
        rng = np.random.default_rng((config.base_seed, trial))
        trace = EpisodeTrace() if trace_dir is not None else None
        result = run_trial(world, policy, env_config, rng, trial, trace)
        if trace is not None:
            trace.write_csv(Path(trace_dir) / f"{world.name}_trial{trial}.csv")
        logger.info(
            f"{world.name} trial {trial}: {result.status}, distance {result.navigation_distance:.2f} m, "
            f"time {result.navigation_time:.0f} s, reward {result.total_reward:.2f}"
        )
        results.append(result)
    return results


def evaluate_worlds(
    params: QNetworkParams | None,
    worlds: list[WorldSpec],
    config: EvalConfig | None = None,
    policy: Policy | None = None,
    trace_dir: Path | None = None,
) -> list[EpisodeResult]:
    """Results ordered by world, then trial index."""
    config = config or EvalConfig()
    results = []
    for world in worlds:
        results.extend(evaluate(params, world, config.trials, config, policy, trace_dir))
    return results


def results_frame(results: list[EpisodeResult]) -> pd.DataFrame:
    frame = pd.DataFrame([asdict(r) for r in results], columns=list(EpisodeResult.__dataclass_fields__))
    frame = frame.rename(
        columns={"navigation_distance": "navigation_distance_m", "navigation_time": "navigation_time_s"}
    )
    frame["crash"] = frame["crash"].map({True: "Y", False: "N"})
    return frame


def write_results_csv(path: Path, results: list[EpisodeResult]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    results_frame(results)[RESULT_COLUMNS].to_csv(path, index=False, float_format="%.4f")
    return path


def env_group(name: str) -> str:
    if name in TRAINING_ENVS:
        return "training"
    if name in UNSEEN_ENVS:
        return "unseen"
    return "custom"


@dataclass
class EvaluationSummary:
    per_env: pd.DataFrame
    per_group: pd.DataFrame
    collision_free_rate: float
    goal_rate_given_safe: float


def _rates(frame: pd.DataFrame, by: str) -> pd.DataFrame:
    grouped = frame.groupby(by, sort=False)
    table = pd.DataFrame(
        {
            "trials": grouped.size(),
            "success_rate": grouped["status"].apply(lambda s: float((s == EpisodeStatus.GOAL_REACHED).mean())),
            "crash_rate": grouped["status"].apply(lambda s: float((s == EpisodeStatus.CRASHED).mean())),
            "timeout_rate": grouped["status"].apply(lambda s: float((s == EpisodeStatus.TIMED_OUT).mean())),
            "deviation_rate": grouped["status"].apply(lambda s: float((s == EpisodeStatus.DEVIATED).mean())),
            "mean_time_s": grouped["navigation_time"].mean(),
            "mean_reward": grouped["total_reward"].mean(),
        }
    )
    return table.reset_index()


def summarize(results: list[EpisodeResult]) -> EvaluationSummary:
    """
    Per-environment outcome rates and means.

    Outcomes are read from the terminal status, so success, crash, timeout and
    deviation rates of an environment always add up to one.
    """
    if not results:
        raise ValueError("cannot summarize an empty result list")
    frame = pd.DataFrame([asdict(r) for r in results])
    frame["group"] = frame["env"].map(env_group)

    safe = frame[frame["status"] != EpisodeStatus.CRASHED]
    collision_free_rate = len(safe) / len(frame)
    goal_rate_given_safe = float((safe["status"] == EpisodeStatus.GOAL_REACHED).mean()) if len(safe) else 0.0
    return EvaluationSummary(
        per_env=_rates(frame, "env"),
        per_group=_rates(frame, "group"),
        collision_free_rate=collision_free_rate,
        goal_rate_given_safe=goal_rate_given_safe,
    )


def write_summary(path: Path, results: list[EpisodeResult], summary: EvaluationSummary) -> str:
    """Markdown report: per-trial table, per-environment summary and the aggregate safety figures."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("")
    return display(
        Title("# Evaluation results"),
        Table(results_frame(results)[RESULT_COLUMNS], "Per-trial navigation results", "tbl-trials"),
        Title("## Summary per environment"),
        Table(summary.per_env, "Outcome rates per environment", "tbl-envs"),
        Table(summary.per_group, "Outcome rates per environment group", "tbl-groups"),
        f"Collision-free flights: {100 * summary.collision_free_rate:.0f}% of all trials; "
        f"goal reached in {100 * summary.goal_rate_given_safe:.0f}% of the collision-free flights.",
        output_path=path,
    )
