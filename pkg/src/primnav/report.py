from __future__ import annotations

from abc import ABC, abstractmethod
from pathlib import Path

import pandas as pd

from primnav.common import get_logger

logger = get_logger(__name__)


class Displayable(ABC):
    @abstractmethod
    def display_markdown(self) -> str:
        """Return markdown representation"""
        pass


class DocumentConfig(Displayable):
    def __init__(self, title: str, author: str, date: str | None = None):
        self.title = title
        self.author = author
        self.date = date

    def display_markdown(self) -> str:
        """
        Return the markdown metadata representation of the document configuration.
        """
        metadata = [
            "---",
            f"title: {self.title}",
            f"author: {self.author}",
            f"date: {self.date}" if self.date else "",
            "---",
            "\n",
        ]
        return "\n".join(line for line in metadata if line != "")


class Title(Displayable):
    def __init__(self, text: str, label: str | None = None):
        self.text = text
        self.label = label

    def display_markdown(self) -> str:
        label_text = f" {{#{self.label}}}" if self.label else ""
        return f"{self.text}{label_text}"


class Table(Displayable):
    def __init__(self, data: pd.DataFrame, caption: str, label: str | None = None, floatfmt: str = ".2f"):
        self.data = data
        self.caption = caption
        self.label = label
        self.floatfmt = floatfmt

    def display_markdown(self) -> str:
        md_table = self.data.to_markdown(index=False, floatfmt=self.floatfmt)
        label_text = f"{{#{self.label}}}" if self.label else ""
        return f"{md_table}\n\n{self.caption}{label_text}"


class Figure(Displayable):
    def __init__(self, path: Path, caption: str, label: str | None = None):
        self.path = Path(path)
        self.caption = caption
        self.label = label

    @classmethod
    def from_matplotlib(cls, fig, path: Path, caption: str, label: str | None = None, **savefig_kwargs) -> "Figure":
        """
        Save a matplotlib figure and wrap it for markdown output.

        The file format follows the suffix of `path` (".svg", ".png"...). The
        figure is closed once written.
        """
        import matplotlib.pyplot as plt

        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format=path.suffix.lstrip(".") or None, **savefig_kwargs)
        plt.close(fig)
        logger.info(f"Figure written to {path}")
        return cls(path, caption, label)

    def display_markdown(self) -> str:
        label_text = f"{{#{self.label}}}" if self.label else ""
        return f"![{self.caption}]({self.path.name}){label_text}"


# Every episode must stay a vertex of its line; path simplification would merge them.
CURVE_RC = {"path.simplify": False, "svg.hashsalt": "primnav", "svg.fonttype": "none"}


class RewardCurve:
    """
    Episode reward curves, one line per series with its name as SVG group id.

    Every value of a series becomes one vertex of the drawn line.
    """

    def __init__(self, series: dict[str, list[float]], caption: str, label: str | None = None):
        if not series or any(len(values) == 0 for values in series.values()):
            raise ValueError("reward curves need at least one non-empty series")
        self.series = series
        self.caption = caption
        self.label = label

    def save(self, path: Path) -> Figure:
        import matplotlib.pyplot as plt

        with plt.rc_context(CURVE_RC):
            fig, ax = plt.subplots(figsize=(8, 4.5))
            for name, values in self.series.items():
                ax.plot(range(len(values)), values, label=name, gid=name, linewidth=1.2)
            ax.set_xlabel("episode")
            ax.set_ylabel("total reward")
            ax.set_title(self.caption)
            ax.grid(True, alpha=0.3)
            ax.legend()
            # SVG without a creation date
            savefig_kwargs = {"metadata": {"Date": None}} if Path(path).suffix == ".svg" else {}
            return Figure.from_matplotlib(fig, path, self.caption, self.label, **savefig_kwargs)


def display(*content: str | Displayable, output_path: Path | None = None) -> str:
    """
    Render content to markdown.

    Args:
        *content: Content to display (strings or Displayable objects)
        output_path: File the markdown is appended to, if given

    Returns:
        The markdown string
    """
    result = []
    for item in content:
        if isinstance(item, Displayable):
            result.append(item.display_markdown())
        else:
            result.append(str(item))

    output_string = "\n\n".join(result) + "\n\n"
    if output_path is not None:
        with open(output_path, "a") as f:
            f.write(output_string)
    return output_string
