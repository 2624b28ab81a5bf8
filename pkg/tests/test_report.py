import re

import pandas as pd
import pytest

from primnav.report import DocumentConfig, Figure, RewardCurve, Table, Title, display


def test_document_config_markdown():
    config = DocumentConfig(title="Desk-scale training", author="Test Author", date="2025-05-17")
    markdown = config.display_markdown()
    assert markdown.startswith("---\ntitle: Desk-scale training\n")
    assert "Test Author" in markdown
    assert "2025-05-17" in markdown


def test_table_markdown():
    data = pd.DataFrame({"env": ["obstacle-free", "mixed-1"], "success_rate": [1.0, 0.4]})
    markdown = Table(data, "Outcome rates", "tbl:test").display_markdown()
    assert "Outcome rates{#tbl:test}" in markdown
    assert "0.40" in markdown
    assert markdown.count("|") > 6


def test_title_markdown():
    title = Title("## Test Title", "sec:test")
    assert title.display_markdown() == "## Test Title {#sec:test}"


def _line_vertices(svg: str, name: str) -> list[tuple[float, float]]:
    match = re.search(rf'<g id="{name}">\s*<path[^>]*?\sd="([^"]*)"', svg)
    assert match is not None
    return [(float(x), float(y)) for x, y in re.findall(r"[ML]\s+(\S+)\s+(\S+)", match.group(1))]


def test_reward_curve_has_one_vertex_per_episode(tmp_path):
    rewards = [float(n % 7) for n in range(300)]
    curve = RewardCurve({"reward": rewards, "moving_average": rewards}, caption="Rewards")
    figure = curve.save(tmp_path / "curve.svg")
    svg = figure.path.read_text()
    assert "<svg" in svg
    reward_points = _line_vertices(svg, "reward")
    assert len(reward_points) == 300
    assert len(_line_vertices(svg, "moving_average")) == 300
    xs = [x for x, _ in reward_points]
    assert xs == sorted(xs)


def test_reward_curve_higher_reward_is_drawn_higher(tmp_path):
    svg = RewardCurve({"reward": [0.0, 1.0]}, caption="Two").save(tmp_path / "two.svg").path.read_text()
    (_, y_low), (_, y_high) = _line_vertices(svg, "reward")
    assert y_high < y_low


def test_reward_curve_rejects_empty_series():
    with pytest.raises(ValueError):
        RewardCurve({"reward": []}, caption="Empty")
    with pytest.raises(ValueError):
        RewardCurve({}, caption="Nothing")


def test_reward_curve_is_reproducible(tmp_path):
    curve = RewardCurve({"reward": [1.0, 3.0, 2.0]}, caption="Three")
    first = curve.save(tmp_path / "a.svg").path.read_text()
    assert curve.save(tmp_path / "b.svg").path.read_text() == first


def test_figure_markdown(tmp_path):
    figure = RewardCurve({"reward": [1.0, 2.0]}, caption="Reward curve", label="fig-rewards").save(
        tmp_path / "figures" / "curve.svg"
    )
    assert figure.path.exists()
    assert figure.display_markdown() == "![Reward curve](curve.svg){#fig-rewards}"
    assert Figure(tmp_path / "x.png", "Plain").display_markdown() == "![Plain](x.png)"


def test_display_joins_and_appends(tmp_path):
    output = tmp_path / "report.md"
    first = display(Title("# Report"), "plain text", output_path=output)
    assert first == "# Report\n\nplain text\n\n"
    display("more", output_path=output)
    assert output.read_text() == first + "more\n\n"
