"""
DQN training with experience replay, a periodically synchronized target network
and linear exploration/discount schedules.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import Field, model_validator

from primnav.common import TrainingError, get_logger
from primnav.dqn import (
    QNetworkParams,
    backward,
    build_network,
    forward,
    forward_batch,
    select_action,
    td_targets,
    write_checkpoint,
)
from primnav.env_rl import EnvConfig, NavigationEnv, Transition
from primnav.parameters import Meters, MetersPerSecond, Parameters
from primnav.tensor_nn import AdamState, adam_step, huber_loss
from primnav.world import TRAINING_ENVS, WorldSpec, resolve_world

logger = get_logger(__name__)

TRAINING_SESSIONS = (100, 200, 500, 1000, 2000)
LOG_FILENAME = "train_log.csv"
CONFIG_FILENAME = "config.txt"
FINAL_CHECKPOINT = "final.ckpt"
DIAGNOSTIC_CHECKPOINT = "diagnostic.ckpt"


class TrainConfig(Parameters):
    total_episodes: int = Field(default=2000, ge=1)
    max_steps_per_episode: int = Field(default=120, ge=1)
    epsilon_start: float = Field(default=1.0, ge=0.0, le=1.0)
    epsilon_end: float = Field(default=0.1, ge=0.0, le=1.0)
    gamma_start: float = Field(default=0.01, ge=0.0, le=1.0)
    gamma_end: float = Field(default=0.99, ge=0.0, le=1.0)
    schedule_fraction: float = Field(default=0.8, gt=0.0, le=1.0)
    replay_capacity: int = Field(default=10_000, ge=1)
    batch_size: int = Field(default=32, ge=1)
    target_sync_interval: int = Field(default=200, ge=1)
    learning_rate: float = Field(default=0.001, gt=0.0)
    seed: int = 0
    worlds: list[str] = Field(default_factory=lambda: list(TRAINING_ENVS))
    checkpoint_interval: int = Field(default=100, ge=1)
    primitive_scale: Meters = 1.0
    action_set_path: Path | None = None
    setpoint_speed: MetersPerSecond = 1.0
    depth_noise_sigma: float = Field(default=0.0, ge=0.0)

    @model_validator(mode="after")
    def _check(self):
        if self.batch_size > self.replay_capacity:
            raise ValueError("batch_size cannot exceed replay_capacity")
        if not self.worlds:
            raise ValueError("at least one training world is required")
        return self

    def env_config(self) -> EnvConfig:
        return EnvConfig(
            primitive_scale=self.primitive_scale,
            action_set_path=self.action_set_path,
            setpoint_speed=self.setpoint_speed,
            max_steps=self.max_steps_per_episode,
            depth_noise_sigma=self.depth_noise_sigma,
        )


def session_config(total_episodes: int, **overrides) -> TrainConfig:
    """One of the fixed-length training sessions (100 to 2000 episodes)."""
    if total_episodes not in TRAINING_SESSIONS:
        raise ValueError(f"training sessions are {TRAINING_SESSIONS}, got {total_episodes}")
    return TrainConfig(total_episodes=total_episodes, **overrides)


def schedule(episode: int, config: TrainConfig) -> tuple[float, float]:
    """
    (epsilon, gamma) for an episode: linear from the start to the end values over the
    first `schedule_fraction` of the episodes, then held constant.
    """
    if not 0 <= episode < config.total_episodes:
        raise ValueError(f"episode {episode} outside 0..{config.total_episodes - 1}")
    fraction = min(episode / (config.schedule_fraction * config.total_episodes), 1.0)
    epsilon = config.epsilon_start * (1.0 - fraction) + config.epsilon_end * fraction
    gamma = config.gamma_start * (1.0 - fraction) + config.gamma_end * fraction
    return epsilon, gamma


class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions; the oldest entry is overwritten first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, transition: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._next] = transition
        self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        """Uniform sample without replacement."""
        if batch_size > len(self._items):
            raise ValueError(f"cannot sample {batch_size} transitions from {len(self._items)}")
        return [self._items[i] for i in rng.choice(len(self._items), size=batch_size, replace=False)]

    def transitions(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._next :] + self._items[: self._next]


@dataclass
class EpisodeLog:
    episode: int
    total_reward: float
    epsilon: float
    gamma: float
    status: str
    steps: int
    world: str
    wall_clock_s: float


@dataclass
class TrainLog:
    entries: list[EpisodeLog] = field(default_factory=list)

    @property
    def rewards(self) -> list[float]:
        return [entry.total_reward for entry in self.entries]

    def to_frame(self) -> pd.DataFrame:
        columns = list(EpisodeLog.__dataclass_fields__)
        return pd.DataFrame([vars(entry) for entry in self.entries], columns=columns)

    def write_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path


@dataclass
class TrainResult:
    params: QNetworkParams
    log: TrainLog
    optimizer: AdamState
    gradient_steps: int


def moving_average(values: list[float], window: int = 20) -> list[float]:
    """Trailing mean over min(window, index + 1) entries."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    series = pd.Series(values, dtype=float)
    return series.rolling(window=window, min_periods=1).mean().tolist()


def _stack(batch: list[Transition]) -> dict[str, np.ndarray]:
    return {
        "depths": np.stack([t.observation.depth for t in batch]),
        "positions": np.stack([t.observation.relative_position for t in batch]),
        "actions": np.array([t.action for t in batch]),
        "rewards": np.array([t.reward for t in batch], dtype=np.float64),
        "next_depths": np.stack([t.next_observation.depth for t in batch]),
        "next_positions": np.stack([t.next_observation.relative_position for t in batch]),
        "terminals": np.array([t.terminal for t in batch], dtype=bool),
    }


class DQNTrainer:
    def __init__(self, config: TrainConfig, worlds: list[WorldSpec] | None = None):
        self.config = config
        self.worlds = worlds if worlds is not None else [resolve_world(ref) for ref in config.worlds]
        if not self.worlds:
            raise ValueError("at least one training world is required")
        self.env_config = config.env_config()
        self.rng = np.random.default_rng((config.seed, 1))
        self.online = build_network(config.seed)
        self.target = self.online.copy()
        self.optimizer = AdamState.fresh(self.online.arrays(), learning_rate=config.learning_rate)
        self.buffer = ReplayBuffer(config.replay_capacity)
        self.gradient_steps = 0
        self.log = TrainLog()

    def gradient_step(self, gamma: float) -> float:
        """One Adam step on a replayed minibatch; returns the mean Huber loss."""
        batch = _stack(self.buffer.sample(self.config.batch_size, self.rng))
        next_q, _ = forward_batch(self.target, batch["next_depths"], batch["next_positions"])
        targets = td_targets(batch["rewards"], next_q, gamma, batch["terminals"])
        q, cache = forward_batch(self.online, batch["depths"], batch["positions"], keep_cache=True)

        rows = np.arange(q.shape[0])
        losses, loss_grad = huber_loss(q[rows, batch["actions"]], targets)
        loss = float(np.mean(losses))
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at gradient step {self.gradient_steps}")
        grad_q = np.zeros_like(q)
        grad_q[rows, batch["actions"]] = loss_grad / q.shape[0]
        adam_step(self.online.arrays(), backward(self.online, cache, grad_q), self.optimizer)

        self.gradient_steps += 1
        if self.gradient_steps % self.config.target_sync_interval == 0:
            self.target = self.online.copy()
            logger.debug(f"Target network synchronized at gradient step {self.gradient_steps}")
        logger.debug(f"Gradient step {self.gradient_steps}: loss {loss:.5f}")
        return loss

    def run_episode(self, episode: int) -> EpisodeLog:
        started = time.perf_counter()
        epsilon, gamma = schedule(episode, self.config)
        world = self.worlds[int(self.rng.integers(len(self.worlds)))]
        env = NavigationEnv(world, self.env_config, self.rng)
        observation = env.reset()

        while True:
            q = forward(self.online, observation.depth, observation.relative_position)
            action = select_action(q, epsilon, self.rng)
            result = env.step(action)
            self.buffer.push(Transition(observation, action, result.reward, result.observation, result.terminal))
            if len(self.buffer) >= self.config.batch_size:
                self.gradient_step(gamma)
            observation = result.observation
            if result.terminal:
                break

        state = env.state
        entry = EpisodeLog(
            episode=episode,
            total_reward=state.cumulative_reward,
            epsilon=epsilon,
            gamma=gamma,
            status=str(state.status),
            steps=state.step_index,
            world=world.name,
            wall_clock_s=time.perf_counter() - started,
        )
        logger.info(
            f"Episode {episode + 1}/{self.config.total_episodes} [{world.name}] {entry.status} "
            f"after {entry.steps} steps, reward {entry.total_reward:.3f} (eps {epsilon:.3f}, gamma {gamma:.3f})"
        )
        return entry

    def _metadata(self, episode: int) -> dict:
        return {
            "episode": episode,
            "seed": self.config.seed,
            "gradient_steps": self.gradient_steps,
        } | self.config.env_config().action_metadata()

    def train(self, out_dir: Path | None = None) -> TrainResult:
        if out_dir is not None:
            out_dir = Path(out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / CONFIG_FILENAME).write_text(self.config.to_text())

        for episode in range(self.config.total_episodes):
            try:
                self.log.entries.append(self.run_episode(episode))
            except TrainingError as exc:
                logger.error(f"Training aborted in episode {episode}: {exc}")
                if out_dir is not None:
                    write_checkpoint(
                        out_dir / DIAGNOSTIC_CHECKPOINT,
                        self.online,
                        self.optimizer,
                        self._metadata(episode) | {"error": str(exc)},
                    )
                    self.log.write_csv(out_dir / LOG_FILENAME)
                raise
            if out_dir is not None and (episode + 1) % self.config.checkpoint_interval == 0:
                checkpoint = out_dir / f"checkpoint_{episode + 1:05d}.ckpt"
                write_checkpoint(checkpoint, self.online, self.optimizer, self._metadata(episode))
                self.log.write_csv(out_dir / LOG_FILENAME)

        if out_dir is not None:
            metadata = self._metadata(self.config.total_episodes - 1)
            write_checkpoint(out_dir / FINAL_CHECKPOINT, self.online, self.optimizer, metadata)
            self.log.write_csv(out_dir / LOG_FILENAME)
        return TrainResult(self.online, self.log, self.optimizer, self.gradient_steps)


def train(config: TrainConfig, worlds: list[WorldSpec] | None = None, out_dir: Path | None = None) -> TrainResult:
    """Train a Q-network from scratch; fully deterministic for a given config and seed."""
    return DQNTrainer(config, worlds).train(out_dir)
