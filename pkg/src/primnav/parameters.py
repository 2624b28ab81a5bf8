from __future__ import annotations

from functools import partial
from pathlib import Path
from typing import Annotated, Any, Iterator, Self, get_origin

from pint import Quantity, UnitRegistry
from pydantic import BaseModel, BeforeValidator, ConfigDict

from primnav.common import ConfigurationError

# Initialize Pint registry
UREG = UnitRegistry()


def to_magnitude(value: Any, unit: str) -> Any:
    """
    Coerce a config value to a plain float expressed in `unit`.

    Accepts numbers (already in `unit`), numeric strings, unit strings such as
    "50 cm" or "90 deg", and pint quantities. Anything else is handed to
    pydantic untouched so its own error message applies.
    """
    if isinstance(value, Quantity):
        quantity = value
    elif isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
        try:
            quantity = UREG.Quantity(value)
        except Exception as exc:
            raise ValueError(f"cannot parse {value!r} as a quantity: {exc}") from exc
    else:
        return value
    try:
        return float(quantity.to(unit).magnitude)
    except Exception as exc:
        raise ValueError(f"{value!r} is not convertible to {unit}: {exc}") from exc


Meters = Annotated[float, BeforeValidator(partial(to_magnitude, unit="meter"))]
Seconds = Annotated[float, BeforeValidator(partial(to_magnitude, unit="second"))]
Radians = Annotated[float, BeforeValidator(partial(to_magnitude, unit="radian"))]
MetersPerSecond = Annotated[
    float, BeforeValidator(partial(to_magnitude, unit="meter / second"))
]


def parse_key_values(text: str) -> dict[str, Any]:
    """
    Parse flat `key = value` text into a dict.

    Dotted keys (`reward.r_upper = 0.4`) build nested dicts for nested models.
    """
    values: dict[str, Any] = {}
    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigurationError(f"line {line_number}: expected 'key = value'")
        target = values
        *parents, leaf = key.split(".")
        for parent in parents:
            target = target.setdefault(parent, {})
            if not isinstance(target, dict):
                raise ConfigurationError(f"line {line_number}: {key} clashes with a value")
        target[leaf] = value
    return values


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(_format_value(item) for item in value)
    return str(value)


class Parameters(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True, extra="forbid")

    def flat_items(self, prefix: str = "") -> Iterator[tuple[str, Any]]:
        """Yield (dotted key, value) pairs, descending into nested parameter groups."""
        for key in type(self).model_fields:
            value = getattr(self, key)
            if isinstance(value, Parameters):
                yield from value.flat_items(prefix=f"{prefix}{key}.")
            else:
                yield f"{prefix}{key}", value

    def display(self) -> str:
        """Return a markdown table of all parameters and their values."""
        lines = ["| Parameter | Value |", "| --- | --- |"]
        for key, val in self.flat_items():
            lines.append(f"| {key} | {_format_value(val)} |")
        return "\n".join(lines)

    def to_text(self) -> str:
        """Serialize to the flat `key = value` config format (None values are omitted)."""
        return "".join(
            f"{key} = {_format_value(val)}\n"
            for key, val in self.flat_items()
            if val is not None
        )

    @classmethod
    def _split_lists(cls, values: dict[str, Any]) -> dict[str, Any]:
        """Turn comma-separated strings into lists for list-typed fields, nested groups included."""
        for name, field in cls.model_fields.items():
            raw = values.get(name)
            if isinstance(raw, str) and get_origin(field.annotation) in (list, tuple):
                values[name] = [item.strip() for item in raw.split(",") if item.strip()]
                continue
            group = field.annotation
            if isinstance(raw, dict) and isinstance(group, type) and issubclass(group, Parameters):
                group._split_lists(raw)
        return values

    @classmethod
    def from_text(cls, text: str, **overrides: Any) -> Self:
        values = cls._split_lists(parse_key_values(text))
        values.update(overrides)
        return cls.model_validate(values)

    @classmethod
    def from_file(cls, path: Path, **overrides: Any) -> Self:
        return cls.from_text(Path(path).read_text(), **overrides)
