import sys
from pathlib import Path
from typing import Annotated

import pandas as pd
import typer

from primnav.common import PrimnavError, get_logger, resolve_seed
from primnav.depthcam import CameraIntrinsics, render, write_pgm
from primnav.dqn import read_checkpoint
from primnav.evaluation import EvalConfig, evaluate_worlds, summarize, write_results_csv, write_summary
from primnav.parameters import Parameters
from primnav.report import RewardCurve
from primnav.trainer import LOG_FILENAME, TrainConfig, moving_average, train
from primnav.world import ENV_NAMES, builtin_envs, get_builtin, read_world, write_world

app = typer.Typer(
    name="primnav",
    no_args_is_help=True,
    pretty_exceptions_enable=False,
    context_settings={"help_option_names": ["-h", "--help"]},
)

logger = get_logger(__name__)


def _existing_file(**kwargs) -> typer.models.OptionInfo:
    return typer.Option(exists=True, dir_okay=False, readable=True, **kwargs)


def _announce(config: Parameters, seed: int | None) -> None:
    typer.echo(config.display())
    if seed is not None:
        typer.echo(f"seed = {seed}")
    logger.info(f"Resolved configuration:\n{config.to_text()}seed = {seed}")


def parse_pose(text: str) -> tuple[tuple[float, float, float], float]:
    """Parse "x y z yaw" (meters, radians)."""
    parts = text.replace(",", " ").split()
    if len(parts) != 4:
        raise typer.BadParameter(f"expected 'x y z yaw', got {text!r}", param_hint="--pose")
    try:
        x, y, z, yaw = (float(part) for part in parts)
    except ValueError as exc:
        raise typer.BadParameter(f"pose values must be numbers, got {text!r}", param_hint="--pose") from exc
    return (x, y, z), yaw


@app.command("train", no_args_is_help=True)
def train_command(
    config: Annotated[Path, _existing_file()],
    out: Annotated[Path, typer.Option(file_okay=False)],
    episodes: Annotated[int | None, typer.Option(min=1)] = None,
    seed: Annotated[int | None, typer.Option()] = None,
):
    """
    Train a Q-network from a `key = value` config file.

    Checkpoints, the episode log and the resolved config are written to OUT.
    """
    overrides = {}
    if episodes is not None:
        overrides["total_episodes"] = episodes
    base = TrainConfig.from_file(config, **overrides)
    resolved = base.model_copy(update={"seed": resolve_seed(seed if seed is not None else base.seed)})
    _announce(resolved, resolved.seed)

    result = train(resolved, out_dir=out)
    rewards = result.log.rewards
    typer.echo(
        f"trained {len(rewards)} episodes, {result.gradient_steps} gradient steps, "
        f"mean reward of the last 20 episodes {sum(rewards[-20:]) / len(rewards[-20:]):.3f}"
    )


def _selected_worlds(world: list[Path] | None, builtin: list[str] | None):
    worlds = [read_world(path) for path in world or []]
    for name in builtin or []:
        if name == "all":
            worlds.extend(builtin_envs().values())
        else:
            worlds.append(get_builtin(name))
    if not worlds:
        worlds = list(builtin_envs().values())
    return worlds


@app.command("eval", no_args_is_help=True)
def eval_command(
    checkpoint: Annotated[Path, _existing_file()],
    out: Annotated[Path, typer.Option(dir_okay=False)],
    world: Annotated[list[Path] | None, _existing_file()] = None,
    builtin: Annotated[
        list[str] | None, typer.Option(help=f"Builtin world name or 'all': {', '.join(ENV_NAMES)}")
    ] = None,
    trials: Annotated[int, typer.Option(min=1)] = 5,
    seed: Annotated[int, typer.Option()] = 0,
    noise_sigma: Annotated[float, typer.Option(min=0.0)] = 0.02,
    max_steps: Annotated[int, typer.Option(min=1)] = 120,
    summary: Annotated[Path | None, typer.Option(dir_okay=False)] = None,
    trace_dir: Annotated[Path | None, typer.Option(file_okay=False)] = None,
):
    """
    Greedy evaluation of a checkpoint, one CSV row per world and trial.
    """
    loaded = read_checkpoint(checkpoint)
    worlds = _selected_worlds(world, builtin)
    config = EvalConfig.for_checkpoint(
        loaded.metadata, trials=trials, base_seed=resolve_seed(seed), noise_sigma=noise_sigma, max_steps=max_steps
    )
    _announce(config, config.base_seed)

    results = evaluate_worlds(loaded.params, worlds, config, trace_dir=trace_dir)
    write_results_csv(out, results)
    typer.echo(f"wrote {len(results)} results to {out}")
    if summary is not None:
        write_summary(summary, results, summarize(results))
        typer.echo(f"wrote summary to {summary}")


@app.command("render-world", no_args_is_help=True)
def render_world_command(
    pose: Annotated[str, typer.Option(help="Camera pose 'x y z yaw' in meters and radians")],
    out: Annotated[Path, typer.Option(dir_okay=False)],
    world: Annotated[Path | None, _existing_file()] = None,
    builtin: Annotated[str | None, typer.Option()] = None,
    max_range: Annotated[float, typer.Option(min=0.0)] = 20.0,
):
    """
    Render the normalized depth image seen from POSE as a plain PGM.
    """
    if (world is None) == (builtin is None):
        raise typer.BadParameter("give exactly one of --world or --builtin", param_hint="--world/--builtin")
    position, yaw = parse_pose(pose)
    spec = read_world(world) if world is not None else get_builtin(builtin)
    intrinsics = CameraIntrinsics(max_range=max_range)
    _announce(intrinsics, None)

    image = render(spec, position, yaw, intrinsics)
    write_pgm(out, image)
    typer.echo(f"wrote {image.shape[1]}x{image.shape[0]} depth image of {spec.name!r} to {out}")


@app.command("curves", no_args_is_help=True)
def curves_command(
    log: Annotated[Path, _existing_file()],
    out: Annotated[Path, typer.Option(dir_okay=False)],
    window: Annotated[int, typer.Option(min=1)] = 20,
):
    """
    Episode rewards and their moving average from a training log, as SVG.
    """
    frame = pd.read_csv(log)
    if "total_reward" not in frame.columns:
        raise ValueError(f"{log} has no total_reward column; expected a {LOG_FILENAME} file")
    rewards = frame["total_reward"].astype(float).tolist()
    if not rewards:
        raise ValueError(f"{log} contains no episodes")
    curve = RewardCurve(
        {"reward": rewards, "moving_average": moving_average(rewards, window)},
        caption=f"Episode reward and {window}-episode moving average",
    )
    curve.save(out)
    typer.echo(f"wrote reward curves of {len(rewards)} episodes to {out}")


@app.command("export-worlds", no_args_is_help=True)
def export_worlds_command(out: Annotated[Path, typer.Option(file_okay=False)]):
    """
    Write every builtin world in the world file format.
    """
    out.mkdir(parents=True, exist_ok=True)
    for index, (name, spec) in enumerate(builtin_envs().items(), start=1):
        path = write_world(out / f"{index:02d}-{name}.world", spec)
        logger.info(f"Exported {name} to {path}")
    typer.echo(f"wrote {len(ENV_NAMES)} worlds to {out}")


def _click_exception(name: str) -> type[Exception]:
    """Exception class from the click copy typer raises with, external or bundled."""
    return next(cls for cls in typer.BadParameter.__mro__ if cls.__name__ == name)


UsageError = _click_exception("UsageError")
ClickException = _click_exception("ClickException")


def _error_line(exc: BaseException) -> None:
    message = str(exc).strip().splitlines()[0] if str(exc).strip() else ""
    typer.echo(f"primnav: error: {type(exc).__name__}: {message}", err=True)


def cli_main(argv: list[str] | None = None) -> int:
    """Run the CLI without exiting the interpreter; returns the process exit code."""
    command = typer.main.get_command(app)
    try:
        exit_code = command.main(args=argv, prog_name="primnav", standalone_mode=False)
    except typer.Exit as exc:
        return exc.exit_code
    except typer.Abort:
        typer.echo("primnav: aborted", err=True)
        return 1
    except UsageError as exc:
        _error_line(exc)
        return 2
    except ClickException as exc:
        _error_line(exc)
        return exc.exit_code
    except (PrimnavError, ValueError, OSError) as exc:
        _error_line(exc)
        return 1
    return exit_code if isinstance(exit_code, int) else 0


def main() -> None:
    sys.exit(cli_main())
