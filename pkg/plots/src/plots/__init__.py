"""Comparison figures from edgecache sweep CSVs.

Reads the per-run rows of a sweep file (aggregate and failed rows are
skipped), averages each metric per (algorithm, consumer count) cell for one
grid side, and draws one line per algorithm over the consumer counts.
Lifetime and energy-rate figures use a log y-axis by default.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

METRIC_COLUMNS = {
    "lifetime": ("lifetime_h", "network lifetime (hours)", True),
    "energy_rate": ("energy_rate_j_per_h", "energy consumption rate (J/hour)", True),
    "tvd": ("tvd_all", "total variation distance", False),
}

ALGO_STYLE = {
    "dca": dict(color="#1f77b4", marker="o"),
    "dca+": dict(color="#d62728", marker="s"),
    "pfr": dict(color="#2ca02c", marker="^"),
    "lp": dict(color="#7f7f7f", marker="x"),
}


class PlotError(ValueError):
    pass


@dataclass(frozen=True)
class FigureSpec:
    metric: str                  # lifetime | energy_rate | tvd
    out: str
    side: int | None = None
    log_y: bool | None = None    # default decided by the metric
    band: bool = False           # shade the interquartile range
    field_only_tvd: bool = False

    def column(self) -> str:
        if self.metric not in METRIC_COLUMNS:
            raise PlotError(f"unknown metric {self.metric!r}")
        col = METRIC_COLUMNS[self.metric][0]
        if self.metric == "tvd" and self.field_only_tvd:
            col = "tvd_field"
        return col

    def use_log(self) -> bool:
        if self.log_y is not None:
            return self.log_y
        return METRIC_COLUMNS[self.metric][2]


@dataclass(frozen=True)
class Series:
    algorithm: str
    consumers: tuple
    mean: tuple
    q1: tuple
    q3: tuple


@dataclass(frozen=True)
class RenderResult:
    out: str
    series: tuple       # Series per algorithm, algorithm-sorted
    y_scale: str
    n_rows: int


def load_rows(csv_path: str, column: str, side: int | None):
    rows = []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for needed in ("side", "consumers", "algo", "status", column):
            if needed not in header:
                raise PlotError(f"CSV is missing the {needed!r} column")
        for row in reader:
            if row["status"] != "ok" or not row[column]:
                continue
            if side is not None and int(row["side"]) != side:
                continue
            rows.append((row["algo"], int(row["consumers"]), float(row[column])))
    return rows


def collect_series(rows) -> tuple:
    cells: dict = {}
    for algo, consumers, value in rows:
        cells.setdefault(algo, {}).setdefault(consumers, []).append(value)
    out = []
    for algo in sorted(cells):
        consumers = tuple(sorted(cells[algo]))
        vals = [np.asarray(cells[algo][c]) for c in consumers]
        out.append(Series(
            algorithm=algo,
            consumers=consumers,
            mean=tuple(float(np.mean(v)) for v in vals),
            q1=tuple(float(np.percentile(v, 25)) for v in vals),
            q3=tuple(float(np.percentile(v, 75)) for v in vals),
        ))
    return tuple(out)


def render(csv_path: str, spec: FigureSpec) -> RenderResult:
    """Aggregate the CSV and write the figure; returns the plotted series so
    callers can verify the drawn means independently.  Raises PlotError (and
    writes nothing) when the CSV lacks columns or usable rows."""
    column = spec.column()
    rows = load_rows(csv_path, column, spec.side)
    if not rows:
        raise PlotError("no usable rows after filtering; nothing to plot")
    series = collect_series(rows)
    _, ylabel, _ = METRIC_COLUMNS[spec.metric]
    fig, ax = plt.subplots(figsize=(5.2, 3.6), dpi=150)
    for s in series:
        style = ALGO_STYLE.get(s.algorithm, dict(marker="."))
        ax.plot(s.consumers, s.mean, label=s.algorithm, markersize=4, **style)
        if spec.band:
            ax.fill_between(s.consumers, s.q1, s.q3, alpha=0.15,
                            color=style.get("color"))
    if spec.use_log():
        ax.set_yscale("log")
    ax.set_xlabel("number of consumers")
    ax.set_ylabel(ylabel)
    title = spec.metric.replace("_", " ")
    if spec.side is not None:
        title += f", {spec.side * spec.side}-node grid"
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(spec.out)
    plt.close(fig)
    return RenderResult(out=spec.out, series=series,
                        y_scale="log" if spec.use_log() else "linear",
                        n_rows=len(rows))
