from primnav.trainer import TrainConfig

# short training run on the two easiest builtin worlds
DESK_SCALE_WORLDS = ["obstacle-free", "wide-corridor"]
DESK_SCALE_EPISODES = 300
DESK_SCALE_SEEDS = (1, 2, 3, 4, 5)

DESK_SCALE_CONFIG = TrainConfig(
    total_episodes=DESK_SCALE_EPISODES,
    worlds=DESK_SCALE_WORLDS,
    seed=DESK_SCALE_SEEDS[0],
)


def desk_scale_config(seed: int) -> TrainConfig:
    return DESK_SCALE_CONFIG.model_copy(update={"seed": seed})
