from __future__ import annotations

from pathlib import Path

import pytest

from wbinfer.arrow import ResultRow
from wbinfer.errors import ParseError
from wbinfer.io import write_results_csv
from wbinfer.plot import PlotKind
from wbinfer.plot import group_series
from wbinfer.plot import plot_results

ROWS = [
    ResultRow("size", "lr", 0.05, 0.0, 20, 0.06, 0.007, 1000, 1),
    ResultRow("size", "mb", 0.05, 0.0, 10, 0.04, 0.006, 1000, 1),
    ResultRow("size", "lr", 0.05, 0.0, 10, 0.05, 0.007, 1000, 1),
    ResultRow("size", "mb", 0.05, 0.0, 20, 0.03, 0.005, 1000, 1),
    ResultRow("other", "ks", 0.05, 0.0, 10, 0.05, 0.007, 1000, 1),
]


def test_group_series_sorts_by_x() -> None:
    series = group_series(ROWS[:4], PlotKind.SIZE)
    assert list(series) == [("lr", 0.0), ("mb", 0.0)]
    assert [x for x, _, _ in series[("mb", 0.0)]] == [10.0, 20.0]


def test_plot_results_writes_svg(tmp_path: Path) -> None:
    csv = str(tmp_path / "size.csv")
    write_results_csv(csv, ROWS)
    out = tmp_path / "plots" / "size.svg"
    assert plot_results(csv, PlotKind.SIZE, str(out), experiment="size") == 2
    assert out.read_bytes().lstrip().startswith(b"<?xml")


def test_plot_results_needs_rows(tmp_path: Path) -> None:
    csv = str(tmp_path / "size.csv")
    write_results_csv(csv, ROWS)
    out = tmp_path / "missing.svg"
    with pytest.raises(ParseError):
        plot_results(csv, PlotKind.SIZE, str(out), experiment="nothing")
    assert not out.exists()
