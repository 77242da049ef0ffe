"""Report emission: delimited tables, sweep plots, and comparison figures.

Tables come in CSV, JSONL, and aligned-text flavours with fixed
presentation rounding (two decimals for rates-per-second and speedups,
three for mAP and path rates, two for percentage loss). The sweep plot is
a small self-contained SVG written directly, so tests can assert its
structure (polyline vertices, axis labels, the marked operating point) and
emission stays byte-deterministic. On top of that, render_* helpers draw
conventional matplotlib figures for human consumption; the command-line
layer writes both next to each other.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Sequence

from .bench import BenchReport, BottleneckResult, ModeSummary
from .calibrate import SweepPoint
from .model import GateThreshold


class TableKind(str, Enum):
    BENCHMARK = "benchmark"
    ROUTING = "routing"
    BOTTLENECK = "bottleneck"


class TableFormat(str, Enum):
    CSV = "csv"
    JSONL = "jsonl"
    TEXT = "text"


class SweepAxes(str, Enum):
    """What the sweep plot spreads along x: exit rate or the threshold."""

    MAP_VS_RATE = "map_vs_rate"
    MAP_VS_THRESHOLD = "map_vs_threshold"


@dataclass(frozen=True)
class ReportBundle:
    """Everything one run wants written down.

    provenance (config echo, input digests, seed) is mandatory; a bundle
    with no recorded origin is refused.
    """

    provenance: Mapping[str, Any]
    comparison: BenchReport | None = None
    summaries: tuple[ModeSummary, ...] = ()
    sweeps: Mapping[str, tuple[SweepPoint, ...]] = field(default_factory=dict)
    bottleneck: BottleneckResult | None = None

    def __post_init__(self) -> None:
        if not self.provenance:
            raise ValueError("provenance must not be empty")

    def mode_summaries(self) -> tuple[ModeSummary, ...]:
        if self.comparison is not None:
            return (self.comparison.baseline, self.comparison.adaptive)
        return self.summaries


def format_speedup(value: float) -> str:
    return f"{value:.2f}x"


def format_loss_pct(value: float) -> str:
    return f"{value:.2f}%"


def _benchmark_rows(bundle: ReportBundle) -> list[dict[str, Any]]:
    rows: list[dict[str, Any]] = []
    if bundle.comparison is not None:
        report = bundle.comparison
        rows.append(
            {
                "model": report.baseline.name,
                "its": round(report.baseline.its, 2),
                "speedup": round(1.0, 2),
                "map": round(report.baseline.map_50_95, 3),
                "map_loss_pct": round(0.0, 2),
            }
        )
        rows.append(
            {
                "model": report.adaptive.name,
                "its": round(report.adaptive.its, 2),
                "speedup": round(report.speedup, 2),
                "map": round(report.adaptive.map_50_95, 3),
                "map_loss_pct": round(report.map_loss_pct, 2),
            }
        )
        return rows
    # Without a baseline there is nothing to normalise against.
    for summary in bundle.summaries:
        rows.append(
            {
                "model": summary.name,
                "its": round(summary.its, 2),
                "speedup": None,
                "map": round(summary.map_50_95, 3),
                "map_loss_pct": None,
            }
        )
    if not rows:
        raise ValueError("bundle has no benchmark section")
    return rows


def _routing_rows(bundle: ReportBundle) -> list[dict[str, Any]]:
    rows = []
    for summary in bundle.mode_summaries():
        if summary.routing is None:
            continue
        stats = summary.routing
        rows.append(
            {
                "model": summary.name,
                "cheap_path_rate": round(stats.cheap_path_rate, 3),
                "escalated_rate": round(stats.escalated_rate, 3),
                "threshold": round(stats.threshold.value, 3),
            }
        )
    if not rows:
        raise ValueError("bundle has no routing section")
    return rows


def _bottleneck_rows(bundle: ReportBundle) -> list[dict[str, Any]]:
    if bundle.bottleneck is None:
        raise ValueError("bundle has no bottleneck section")
    b = bundle.bottleneck
    return [
        {
            "res_high": b.res_high,
            "res_low": b.res_low,
            "fps_high": round(b.fps_high, 2),
            "fps_low": round(b.fps_low, 2),
            "pixel_ratio": round(b.pixel_ratio, 2),
            "fps_ratio": round(b.fps_ratio, 4),
            "verdict": b.verdict.value,
        }
    ]


_COLUMNS = {
    TableKind.BENCHMARK: ("model", "its", "speedup", "map", "map_loss_pct"),
    TableKind.ROUTING: ("model", "cheap_path_rate", "escalated_rate", "threshold"),
    TableKind.BOTTLENECK: (
        "res_high",
        "res_low",
        "fps_high",
        "fps_low",
        "pixel_ratio",
        "fps_ratio",
        "verdict",
    ),
}

_DECIMALS = {
    "its": 2,
    "speedup": 2,
    "map": 3,
    "map_loss_pct": 2,
    "cheap_path_rate": 3,
    "escalated_rate": 3,
    "threshold": 3,
    "fps_high": 2,
    "fps_low": 2,
    "pixel_ratio": 2,
    "fps_ratio": 4,
}


def _cell(column: str, value: Any, text: bool = False) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        rendered = f"{value:.{_DECIMALS[column]}f}"
        if text and column == "speedup":
            return rendered + "x"
        if text and column == "map_loss_pct":
            return rendered + "%"
        return rendered
    return str(value)


def emit_table(
    bundle: ReportBundle,
    which: TableKind,
    fmt: TableFormat,
    path: str | Path,
) -> Path:
    """Write one table; equal bundles produce byte-identical files."""
    path = Path(path)
    rows = {
        TableKind.BENCHMARK: _benchmark_rows,
        TableKind.ROUTING: _routing_rows,
        TableKind.BOTTLENECK: _bottleneck_rows,
    }[which](bundle)
    columns = _COLUMNS[which]
    if fmt is TableFormat.CSV:
        lines = [",".join(columns)]
        lines += [",".join(_cell(c, row[c]) for c in columns) for row in rows]
        payload = "\n".join(lines) + "\n"
    elif fmt is TableFormat.JSONL:
        payload = "".join(
            json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n" for row in rows
        )
    else:
        cells = [[_cell(c, row[c], text=True) for c in columns] for row in rows]
        widths = [
            max(len(columns[i]), *(len(r[i]) for r in cells)) for i in range(len(columns))
        ]
        lines = ["  ".join(c.ljust(widths[i]) for i, c in enumerate(columns)).rstrip()]
        lines += [
            "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
            for row in cells
        ]
        payload = "\n".join(lines) + "\n"
    path.write_text(payload, encoding="utf-8")
    return path


# SVG canvas geometry; values are pixels in the fixed 640x400 viewport.
_PLOT = {"left": 70.0, "top": 20.0, "width": 530.0, "height": 330.0}
_SERIES_STYLE = {"map_50_95": "#1f6fb4", "cheap_path_rate": "#d1641f"}


def _svg_xy(x_frac: float, value: float) -> tuple[float, float]:
    x = _PLOT["left"] + x_frac * _PLOT["width"]
    y = _PLOT["top"] + (1.0 - value) * _PLOT["height"]
    return x, y


def emit_sweep_plot(
    points: Sequence[SweepPoint],
    axes: SweepAxes,
    path: str | Path,
    selected: GateThreshold | None = None,
    title: str = "threshold sweep",
) -> Path:
    """Write a self-contained SVG of a sweep.

    map_vs_threshold draws accuracy and cheap-path rate against the
    threshold grid; map_vs_rate draws accuracy against the achieved
    cheap-path rate. The y domain is fixed to [0, 1] (both metrics live
    there), every polyline carries a stable id, and the selected operating
    point, when given, is marked with a circle.
    """
    points = list(points)
    if len(points) < 2:
        raise ValueError(f"sweep plot needs at least 2 points, got {len(points)}")
    for p in points:
        for name in ("map_50_95", "cheap_path_rate", "threshold"):
            if not math.isfinite(getattr(p, name)):
                raise ValueError(
                    f"sweep point at threshold {p.threshold!r} has non-finite {name}"
                )

    if axes is SweepAxes.MAP_VS_THRESHOLD:
        x_label = "gate threshold"
        x_of = lambda p: p.threshold
        series = [("map_50_95", "mAP@[.5:.95]"), ("cheap_path_rate", "cheap path rate")]
    else:
        x_label = "cheap path rate"
        x_of = lambda p: p.cheap_path_rate
        series = [("map_50_95", "mAP@[.5:.95]")]

    xs = [x_of(p) for p in points]
    x_min, x_max = min(xs), max(xs)
    span = x_max - x_min
    if span <= 0:
        x_min, span = x_min - 0.5, 1.0

    def frac(x: float) -> float:
        return (x - x_min) / span

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<svg xmlns="http://www.w3.org/2000/svg" width="640" height="400" viewBox="0 0 640 400">',
        f'<title>{title}</title>',
        '<rect x="0" y="0" width="640" height="400" fill="white"/>',
        # Axis frame.
        f'<line id="axis-x" x1="{_PLOT["left"]:.1f}" y1="{_PLOT["top"] + _PLOT["height"]:.1f}"'
        f' x2="{_PLOT["left"] + _PLOT["width"]:.1f}" y2="{_PLOT["top"] + _PLOT["height"]:.1f}"'
        ' stroke="black" stroke-width="1"/>',
        f'<line id="axis-y" x1="{_PLOT["left"]:.1f}" y1="{_PLOT["top"]:.1f}"'
        f' x2="{_PLOT["left"]:.1f}" y2="{_PLOT["top"] + _PLOT["height"]:.1f}"'
        ' stroke="black" stroke-width="1"/>',
    ]
    for k in range(5):
        value = k / 4
        x_tick = x_min + span * value
        px = _PLOT["left"] + value * _PLOT["width"]
        py = _PLOT["top"] + (1.0 - value) * _PLOT["height"]
        parts.append(
            f'<text class="tick-x" x="{px:.1f}" y="{_PLOT["top"] + _PLOT["height"] + 18:.1f}"'
            f' font-size="11" text-anchor="middle">{x_tick:.2f}</text>'
        )
        parts.append(
            f'<text class="tick-y" x="{_PLOT["left"] - 8:.1f}" y="{py + 4:.1f}"'
            f' font-size="11" text-anchor="end">{value:.2f}</text>'
        )
    parts.append(
        f'<text id="label-x" x="{_PLOT["left"] + _PLOT["width"] / 2:.1f}" y="392"'
        f' font-size="13" text-anchor="middle">{x_label}</text>'
    )
    parts.append(
        '<text id="label-y" x="16" y="185" font-size="13" text-anchor="middle"'
        ' transform="rotate(-90 16 185)">metric value</text>'
    )
    for idx, (attr, legend) in enumerate(series):
        coords = " ".join(
            f"{x:.3f},{y:.3f}"
            for x, y in (_svg_xy(frac(x_of(p)), getattr(p, attr)) for p in points)
        )
        colour = _SERIES_STYLE[attr]
        parts.append(
            f'<polyline id="series-{attr}" fill="none" stroke="{colour}"'
            f' stroke-width="1.5" points="{coords}"/>'
        )
        ly = 30 + 16 * idx
        parts.append(
            f'<line x1="540" y1="{ly - 4}" x2="560" y2="{ly - 4}" stroke="{colour}" stroke-width="1.5"/>'
        )
        parts.append(f'<text x="565" y="{ly}" font-size="11">{legend}</text>')
    if selected is not None:
        nearest = min(points, key=lambda p: abs(p.threshold - selected.value))
        x, y = _svg_xy(frac(x_of(nearest)), nearest.map_50_95)
        parts.append(
            f'<circle id="operating-point" cx="{x:.3f}" cy="{y:.3f}" r="5"'
            ' fill="none" stroke="black" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text id="operating-label" x="{x + 8:.3f}" y="{y - 8:.3f}" font-size="11">'
            f't={nearest.threshold:.2f}</text>'
        )
    parts.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return path


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    return plt


def render_sweep_figure(
    points: Sequence[SweepPoint],
    path: str | Path,
    selected: GateThreshold | None = None,
    title: str = "threshold sweep",
) -> Path:
    """Matplotlib companion of emit_sweep_plot: mAP and exit rate vs threshold."""
    plt = _pyplot()
    xs = [p.threshold for p in points]
    fig, ax = plt.subplots(figsize=(6.4, 4.0), dpi=110)
    ax.plot(xs, [p.map_50_95 for p in points], color="#1f6fb4", label="mAP@[.5:.95]")
    ax.plot(xs, [p.cheap_path_rate for p in points], color="#d1641f", label="cheap path rate")
    if selected is not None:
        ax.axvline(selected.value, color="black", linewidth=0.8, linestyle="--")
    ax.set_xlabel("gate threshold")
    ax.set_ylabel("metric value")
    ax.set_ylim(0.0, 1.0)
    ax.set_title(title)
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, format="png")
    plt.close(fig)
    return Path(path)


def render_bench_figure(report: BenchReport, path: str | Path) -> Path:
    """Side-by-side throughput and accuracy bars for the two modes."""
    plt = _pyplot()
    names = [report.baseline.name, report.adaptive.name]
    fig, (ax_its, ax_map) = plt.subplots(1, 2, figsize=(8.0, 4.0), dpi=110)
    bars = ax_its.bar(names, [report.baseline.its, report.adaptive.its], color=["#888888", "#1f6fb4"])
    ax_its.bar_label(bars, fmt="%.2f")
    ax_its.set_ylabel("images / s")
    ax_its.set_title(f"throughput ({format_speedup(report.speedup)})")
    bars = ax_map.bar(
        names,
        [report.baseline.map_50_95, report.adaptive.map_50_95],
        color=["#888888", "#1f6fb4"],
    )
    ax_map.bar_label(bars, fmt="%.3f")
    ax_map.set_ylabel("mAP@[.5:.95]")
    ax_map.set_title(f"accuracy ({format_loss_pct(report.map_loss_pct)})")
    for ax in (ax_its, ax_map):
        ax.tick_params(axis="x", labelrotation=10)
    fig.tight_layout()
    fig.savefig(path, format="png")
    plt.close(fig)
    return Path(path)
