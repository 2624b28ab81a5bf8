from pathlib import Path

import pandas as pd

from primnav.evaluation import EvalConfig, evaluate_worlds, results_frame, summarize
from primnav.examples.desk_scale import DESK_SCALE_SEEDS, desk_scale_config
from primnav.report import DocumentConfig, RewardCurve, Table, Title, display
from primnav.trainer import moving_average, train
from primnav.world import builtin_envs

OUTPUT_DIR = Path("docs/desk_scale")
OUTPUT_DIR.mkdir(parents=True, exist_ok=True)
REPORT = OUTPUT_DIR / "report.md"
REPORT.write_text("")

display(
    DocumentConfig(title="Desk-scale training of the primitive planner", author="primnav"),
    output_path=REPORT,
)

display(
    """
# Setup
Each seed trains for 300 episodes on the obstacle-free and wide-corridor worlds, then the
greedy policy is flown five times in each of the ten builtin worlds with depth noise enabled.
""",
    output_path=REPORT,
)

rows = []
for seed in DESK_SCALE_SEEDS:
    result = train(desk_scale_config(seed), out_dir=OUTPUT_DIR / f"seed{seed}")
    rewards = result.log.rewards
    figure = RewardCurve(
        {"reward": rewards, "moving_average": moving_average(rewards, 20)},
        caption=f"Episode reward, seed {seed}",
        label=f"fig-seed{seed}",
    ).save(OUTPUT_DIR / f"rewards_seed{seed}.svg")
    display(Title(f"## Seed {seed}"), figure, output_path=REPORT)

    results = evaluate_worlds(result.params, list(builtin_envs().values()), EvalConfig(base_seed=seed))
    summary = summarize(results)
    display(Table(summary.per_env, f"Outcome rates per world, seed {seed}", f"tbl-seed{seed}"), output_path=REPORT)
    rows.append(
        {
            "seed": seed,
            "first_20_reward": sum(rewards[:20]) / 20,
            "last_20_reward": sum(rewards[-20:]) / 20,
            "collision_free_rate": summary.collision_free_rate,
            "goal_rate_given_safe": summary.goal_rate_given_safe,
            "trials": len(results_frame(results)),
        }
    )

display(
    Title("# Summary over seeds"),
    Table(pd.DataFrame(rows), "Reward trend and safety figures per seed", "tbl-seeds"),
    output_path=REPORT,
)
