import pytest
from pint import Quantity
from pydantic import Field, ValidationError

from primnav.common import ConfigurationError
from primnav.env_rl import EnvConfig
from primnav.parameters import (
    UREG,
    Meters,
    Parameters,
    Radians,
    Seconds,
    parse_key_values,
    to_magnitude,
)
from primnav.trainer import TrainConfig


class DummyParams(Parameters):
    """A simple Parameters subclass for testing."""

    length: Meters = 2.0
    count: int = 5
    tags: list[str] = Field(default_factory=lambda: ["a", "b"])


class NestedParams(Parameters):
    inner: DummyParams = Field(default_factory=DummyParams)
    duration: Seconds = 1.0


@pytest.mark.parametrize(
    "value,unit,expected",
    [
        (3, "meter", 3),
        ("2.5", "meter", 2.5),
        ("50 cm", "meter", 0.5),
        ("90 deg", "radian", 1.5707963267948966),
        (UREG.Quantity(1500, "ms"), "second", 1.5),
    ],
)
def test_to_magnitude(value, unit, expected):
    assert to_magnitude(value, unit) == pytest.approx(expected)


def test_to_magnitude_rejects_wrong_dimension():
    with pytest.raises(ValueError):
        to_magnitude("3 s", "meter")
    with pytest.raises(ValueError):
        to_magnitude("three meters", "meter")


def test_unit_fields_reject_wrong_dimension():
    class Angles(Parameters):
        yaw: Radians = 0.0

    assert Angles(yaw="180 deg").yaw == pytest.approx(3.141592653589793)
    with pytest.raises(ValidationError):
        Angles(yaw="2 m")


def test_parameters_are_frozen_and_strict():
    params = DummyParams()
    with pytest.raises(ValidationError):
        params.count = 3
    with pytest.raises(ValidationError):
        DummyParams(colour="red")


def test_parameters_display_table():
    """Parameters.display() renders a markdown table of fields."""
    md = DummyParams().display().splitlines()
    assert md[0] == "| Parameter | Value |"
    assert md[1] == "| --- | --- |"
    assert "| length | 2.0 |" in md
    assert "| count | 5 |" in md
    assert "| tags | a, b |" in md


def test_nested_parameters_use_dotted_keys():
    md = NestedParams().display()
    assert "| inner.length | 2.0 |" in md
    assert "| duration | 1.0 |" in md


def test_parse_key_values():
    text = "# comment\nlength = 3 m\n\nreward.r_upper = 0.4  # inline\n"
    assert parse_key_values(text) == {"length": "3 m", "reward": {"r_upper": "0.4"}}


@pytest.mark.parametrize("text", ["just a line", " = 3", "a = 1\na.b = 2"])
def test_parse_key_values_errors(text):
    with pytest.raises(ConfigurationError):
        parse_key_values(text)


def test_from_text_round_trip_and_overrides():
    params = NestedParams(inner=DummyParams(length="30 cm", tags=["x"]), duration="2 s")
    assert NestedParams.from_text(params.to_text()) == params
    assert NestedParams.from_text(params.to_text(), duration=5.0).duration == 5.0


def test_train_config_file_round_trip(tmp_path):
    config = TrainConfig(total_episodes=300, worlds=["obstacle-free", "wide-corridor"], primitive_scale="50 cm")
    path = tmp_path / "train.txt"
    path.write_text(config.to_text())
    assert TrainConfig.from_file(path) == config
    assert "action_set_path" not in config.to_text()


def test_env_config_nested_overrides():
    config = EnvConfig.from_text("reward.r_upper = 0.4\ncamera.max_range = 1500 cm\n")
    assert config.reward.r_upper == 0.4
    assert config.camera.max_range == pytest.approx(15.0)
    with pytest.raises(ValidationError):
        EnvConfig.from_text("reward.unknown = 1\n")


def test_quantity_objects_are_accepted():
    assert DummyParams(length=UREG.Quantity(250, "mm")).length == pytest.approx(0.25)
    assert isinstance(UREG.Quantity(1, "m"), Quantity)
