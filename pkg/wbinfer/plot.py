from __future__ import annotations

import io
import logging
from collections import defaultdict
from enum import StrEnum

from matplotlib.figure import Figure

from wbinfer.arrow import ResultRow
from wbinfer.arrow import rows_from_table
from wbinfer.errors import ParseError
from wbinfer.io import read_results_csv
from wbinfer.io import write_bytes_atomic

logger = logging.getLogger(__name__)


class PlotKind(StrEnum):
    BELIEF = "belief"
    CREDIBILITY = "credibility"
    POWER_HOMOGENEITY = "power-homogeneity"
    POWER_ONESAMPLE = "power-onesample"
    SIZE = "size"


_X_COLUMN = {
    PlotKind.BELIEF: "param1",
    PlotKind.CREDIBILITY: "param1",
    PlotKind.POWER_HOMOGENEITY: "param1",
    PlotKind.POWER_ONESAMPLE: "n",
    PlotKind.SIZE: "n",
}

_LABELS = {
    PlotKind.BELIEF: ("theta", "belief / plausibility"),
    PlotKind.CREDIBILITY: ("omega", "phi"),
    PlotKind.POWER_HOMOGENEITY: ("rate ratio", "rejection rate"),
    PlotKind.POWER_ONESAMPLE: ("n", "rejection rate"),
    PlotKind.SIZE: ("n", "rejection rate"),
}


def group_series(rows: list[ResultRow], kind: PlotKind) -> dict[tuple[str, float], list[tuple[float, float, float]]]:
    """One (x, estimate, se) series per (test, param2), sorted by x."""
    column = _X_COLUMN[kind]
    series: dict[tuple[str, float], list[tuple[float, float, float]]] = defaultdict(list)
    for row in rows:
        series[(row.test, row.param2)].append((float(getattr(row, column)), row.estimate, row.se))
    return {key: sorted(points) for key, points in sorted(series.items())}


def _label(test: str, param2: float, kind: PlotKind) -> str:
    if kind in (PlotKind.BELIEF, PlotKind.CREDIBILITY, PlotKind.POWER_ONESAMPLE):
        return f"{test} ({param2:g})"
    return test


def plot_results(csv_filename: str, kind: PlotKind, output_filename: str, experiment: str | None = None) -> int:
    """Render a results CSV as an SVG line plot with +/- 2 se bands; returns the number of series."""
    rows = rows_from_table(read_results_csv(csv_filename))
    if experiment is not None:
        rows = [row for row in rows if row.experiment == experiment]
    if not rows:
        raise ParseError(f"no result rows to plot in {csv_filename}")

    series = group_series(rows, kind)
    figure = Figure(figsize=(6.0, 4.0))
    axes = figure.subplots()
    for (test, param2), points in series.items():
        x = [p[0] for p in points]
        y = [p[1] for p in points]
        se = [p[2] for p in points]
        (line,) = axes.plot(x, y, marker="o", markersize=3, label=_label(test, param2, kind))
        if any(s > 0.0 for s in se):
            lower = [max(v - 2.0 * s, 0.0) for v, s in zip(y, se, strict=True)]
            upper = [min(v + 2.0 * s, 1.0) for v, s in zip(y, se, strict=True)]
            axes.fill_between(x, lower, upper, color=line.get_color(), alpha=0.2, linewidth=0)
    if kind == PlotKind.SIZE:
        axes.axhline(rows[0].param1, color="grey", linestyle="--", linewidth=1)
    xlabel, ylabel = _LABELS[kind]
    axes.set_xlabel(xlabel)
    axes.set_ylabel(ylabel)
    axes.set_title(rows[0].experiment)
    axes.legend(fontsize="small")
    figure.tight_layout()

    buffer = io.BytesIO()
    figure.savefig(buffer, format="svg")
    write_bytes_atomic(output_filename, buffer.getvalue())
    logger.info("wrote %d series to %s", len(series), output_filename)
    return len(series)
