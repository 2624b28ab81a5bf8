"""Small-room flight: half-meter primitives and a slow setpoint."""

from primnav.env_rl import EnvConfig
from primnav.evaluation import EvalConfig
from primnav.trainer import TrainConfig

LAB_MAX_STEPS = 30

LAB_ENV_CONFIG = EnvConfig(
    primitive_scale="50 cm",
    setpoint_speed="0.5 m/s",
    max_steps=LAB_MAX_STEPS,
)

LAB_EVAL_CONFIG = EvalConfig(
    trials=5,
    primitive_scale="50 cm",
    setpoint_speed="0.5 m/s",
    max_steps=LAB_MAX_STEPS,
)

LAB_TRAIN_CONFIG = TrainConfig(
    total_episodes=200,
    max_steps_per_episode=LAB_MAX_STEPS,
    primitive_scale="50 cm",
    setpoint_speed="0.5 m/s",
)
