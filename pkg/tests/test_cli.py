import re

import pandas as pd
import pytest

from primnav.cli import cli_main, parse_pose
from primnav.common import SEED_ENV_VAR
from primnav.dqn import build_network, write_checkpoint
from primnav.trainer import CONFIG_FILENAME, FINAL_CHECKPOINT, LOG_FILENAME
from primnav.world import ENV_NAMES, get_builtin, read_world

WALL_WORLD = """
name wall
path -5 0 0 -4 0 0
box 10 -500 -500 11 500 500
"""

TINY_TRAIN_CONFIG = """
total_episodes = 100
max_steps_per_episode = 3
batch_size = 2
replay_capacity = 10
checkpoint_interval = 50
worlds = obstacle-free
"""


@pytest.fixture
def checkpoint(tmp_path):
    return write_checkpoint(tmp_path / "net.ckpt", build_network(0))


@pytest.fixture(autouse=True)
def no_seed_override(monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)


def test_help_exits_zero(capsys):
    assert cli_main(["--help"]) == 0
    assert "render-world" in capsys.readouterr().out


def test_parse_pose():
    assert parse_pose("1 2 3 0.5") == ((1.0, 2.0, 3.0), 0.5)
    assert parse_pose("1,2,3,0") == ((1.0, 2.0, 3.0), 0.0)


@pytest.mark.parametrize(
    "argv",
    [
        ["fly"],
        ["curves", "--out", "curve.svg"],
        ["curves", "--log", "missing.csv", "--out", "curve.svg"],
        ["render-world", "--builtin", "obstacle-free", "--pose", "0 0 5", "--out", "x.pgm"],
        ["render-world", "--pose", "0 0 5 0", "--out", "x.pgm"],
    ],
)
def test_usage_errors_exit_two(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli_main(argv) == 2


def test_bad_world_file_exits_one_with_error_line(tmp_path, capsys):
    world = tmp_path / "broken.world"
    world.write_text("path 0 0 5 10 0 5\ncylinder 1 2 3\n")
    code = cli_main(["render-world", "--world", str(world), "--pose", "0 0 5 0", "--out", str(tmp_path / "x.pgm")])
    assert code == 1
    assert "primnav: error: WorldParseError: line 2:" in capsys.readouterr().err
    assert not (tmp_path / "x.pgm").exists()


def test_corrupt_checkpoint_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint")
    assert cli_main(["eval", "--checkpoint", str(bad), "--out", str(tmp_path / "r.csv")]) == 1
    assert "primnav: error: CheckpointError:" in capsys.readouterr().err


def test_unknown_builtin_exits_one(tmp_path, checkpoint):
    argv = ["eval", "--checkpoint", str(checkpoint), "--out", str(tmp_path / "r.csv"), "--builtin", "moon-base"]
    assert cli_main(argv) == 1


def test_eval_all_builtins(tmp_path, checkpoint, capsys):
    out = tmp_path / "results.csv"
    summary = tmp_path / "summary.md"
    argv = [
        "eval",
        "--checkpoint", str(checkpoint),
        "--out", str(out),
        "--builtin", "all",
        "--trials", "1",
        "--max-steps", "3",
        "--summary", str(summary),
    ]
    assert cli_main(argv) == 0
    frame = pd.read_csv(out)
    assert list(frame["env"]) == list(ENV_NAMES)
    assert set(frame["trial"]) == {0}
    assert set(frame["crash"]) <= {"Y", "N"}
    assert summary.read_text().startswith("# Evaluation results")
    assert "seed = 0" in capsys.readouterr().out


def test_eval_world_files_and_traces(tmp_path, checkpoint):
    world = tmp_path / "wall.world"
    world.write_text(WALL_WORLD)
    argv = [
        "eval",
        "--checkpoint", str(checkpoint),
        "--out", str(tmp_path / "results.csv"),
        "--world", str(world),
        "--builtin", "obstacle-free",
        "--trials", "2",
        "--max-steps", "2",
        "--trace-dir", str(tmp_path / "traces"),
    ]
    assert cli_main(argv) == 0
    frame = pd.read_csv(tmp_path / "results.csv")
    assert list(frame["env"]) == ["wall", "wall", "obstacle-free", "obstacle-free"]
    assert (tmp_path / "traces" / "wall_trial1.csv").exists()


def test_seed_environment_override(tmp_path, checkpoint, monkeypatch, capsys):
    monkeypatch.setenv(SEED_ENV_VAR, "7")
    argv = ["eval", "--checkpoint", str(checkpoint), "--out", str(tmp_path / "r.csv"), "--builtin", "env1"]
    assert cli_main(argv + ["--trials", "1", "--max-steps", "1"]) == 0
    assert "seed = 7" in capsys.readouterr().out

    monkeypatch.setenv(SEED_ENV_VAR, "seven")
    assert cli_main(argv) == 1


def test_render_world_wall(tmp_path):
    world = tmp_path / "wall.world"
    world.write_text(WALL_WORLD)
    out = tmp_path / "depth.pgm"
    assert cli_main(["render-world", "--world", str(world), "--pose", "0 0 0 0", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[:3] == ["P2", "32 32", "255"]
    assert set(" ".join(lines[3:]).split()) == {"128"}


def test_render_builtin_with_shorter_range(tmp_path):
    out = tmp_path / "free.pgm"
    argv = ["render-world", "--builtin", "obstacle-free", "--pose", "0 0 5 0", "--out", str(out), "--max-range", "5"]
    assert cli_main(argv) == 0
    assert set(" ".join(out.read_text().splitlines()[3:]).split()) == {"255"}


def test_curves(tmp_path):
    log = tmp_path / LOG_FILENAME
    pd.DataFrame({"episode": range(300), "total_reward": [n / 100 for n in range(300)]}).to_csv(log, index=False)
    out = tmp_path / "curves.svg"
    assert cli_main(["curves", "--log", str(log), "--out", str(out), "--window", "10"]) == 0
    svg = out.read_text()
    for name in ("reward", "moving_average"):
        path_data = re.search(rf'<g id="{name}">\s*<path[^>]*?\sd="([^"]*)"', svg).group(1)
        assert len(re.findall(r"[ML]\s", path_data)) == 300


def test_curves_rejects_foreign_csv(tmp_path):
    log = tmp_path / "other.csv"
    pd.DataFrame({"a": [1]}).to_csv(log, index=False)
    assert cli_main(["curves", "--log", str(log), "--out", str(tmp_path / "c.svg")]) == 1


def test_export_worlds(tmp_path):
    assert cli_main(["export-worlds", "--out", str(tmp_path)]) == 0
    files = sorted(tmp_path.glob("*.world"))
    assert [f.name for f in files][:2] == ["01-obstacle-free.world", "02-wide-corridor.world"]
    assert len(files) == 10
    assert read_world(tmp_path / "10-mixed-3.world") == get_builtin("mixed-3")


def test_train_command(tmp_path, monkeypatch, capsys):
    config = tmp_path / "train.txt"
    config.write_text(TINY_TRAIN_CONFIG)
    out = tmp_path / "run"
    monkeypatch.setenv(SEED_ENV_VAR, "11")
    assert cli_main(["train", "--config", str(config), "--out", str(out), "--episodes", "2", "--seed", "3"]) == 0

    assert (out / FINAL_CHECKPOINT).exists()
    assert len(pd.read_csv(out / LOG_FILENAME)) == 2
    written = (out / CONFIG_FILENAME).read_text()
    assert "seed = 11" in written
    assert "total_episodes = 2" in written
    assert "trained 2 episodes" in capsys.readouterr().out


def test_eval_flies_the_primitives_the_checkpoint_was_trained_with(tmp_path, capsys):
    config = tmp_path / "train.txt"
    config.write_text(TINY_TRAIN_CONFIG + "primitive_scale = 50 cm\nsetpoint_speed = 0.5\n")
    assert cli_main(["train", "--config", str(config), "--out", str(tmp_path / "run"), "--episodes", "1"]) == 0
    capsys.readouterr()

    argv = [
        "eval",
        "--checkpoint", str(tmp_path / "run" / FINAL_CHECKPOINT),
        "--out", str(tmp_path / "r.csv"),
        "--builtin", "obstacle-free",
        "--trials", "1",
        "--max-steps", "1",
    ]
    assert cli_main(argv) == 0
    out = capsys.readouterr().out
    assert "| primitive_scale | 0.5 |" in out
    assert "| setpoint_speed | 0.5 |" in out


def test_unknown_option_exits_two_with_one_error_line(tmp_path, capsys):
    assert cli_main(["export-worlds", "--out", str(tmp_path), "--bogus"]) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    assert err[0].startswith("primnav: error: NoSuchOption:")
    assert not list(tmp_path.glob("*.world"))


def test_bad_parameter_exits_two(tmp_path, capsys):
    argv = ["render-world", "--builtin", "obstacle-free", "--pose", "0 0 five 0", "--out", str(tmp_path / "x.pgm")]
    assert cli_main(argv) == 2
    assert "primnav: error: BadParameter:" in capsys.readouterr().err
