"""Tables, the structural SVG sweep plot, and figure rendering."""

import json
import math
import xml.etree.ElementTree as ET

import pytest

from gatebench import (
    BottleneckResult,
    GateThreshold,
    ModeSummary,
    ReportBundle,
    RoutingStats,
    SweepAxes,
    SweepPoint,
    TableFormat,
    TableKind,
    Verdict,
    compare,
    emit_sweep_plot,
    emit_table,
    render_bench_figure,
    render_sweep_figure,
)
from gatebench.report import format_loss_pct, format_speedup

PROVENANCE = {"command": "test", "seed": 123}


def _bundle() -> ReportBundle:
    baseline = ModeSummary(
        name="PyTorch Early-Exit",
        its=27.49,
        map_50_95=0.399,
        routing=RoutingStats(5000, 0.145, 0.855, GateThreshold(0.491)),
    )
    adaptive = ModeSummary(
        name="Adaptive Two-Pass",
        its=50.99,
        map_50_95=0.377,
        routing=RoutingStats(5000, 0.281, 0.719, GateThreshold(0.859)),
    )
    return ReportBundle(provenance=PROVENANCE, comparison=compare(adaptive, baseline))


def test_benchmark_csv_rows_exact(tmp_path) -> None:
    path = emit_table(_bundle(), TableKind.BENCHMARK, TableFormat.CSV, tmp_path / "b.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "model,its,speedup,map,map_loss_pct"
    assert lines[1] == "PyTorch Early-Exit,27.49,1.00,0.399,0.00"
    assert lines[2] == "Adaptive Two-Pass,50.99,1.85,0.377,-5.51"


def test_routing_csv_rows_exact(tmp_path) -> None:
    path = emit_table(_bundle(), TableKind.ROUTING, TableFormat.CSV, tmp_path / "r.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "model,cheap_path_rate,escalated_rate,threshold"
    assert lines[1] == "PyTorch Early-Exit,0.145,0.855,0.491"
    assert lines[2] == "Adaptive Two-Pass,0.281,0.719,0.859"


def test_text_table_units(tmp_path) -> None:
    path = emit_table(_bundle(), TableKind.BENCHMARK, TableFormat.TEXT, tmp_path / "b.txt")
    text = path.read_text()
    assert "1.85x" in text
    assert "-5.51%" in text
    assert "1.00x" in text
    assert "0.00%" in text
    lines = text.splitlines()
    assert lines[0].startswith("model")
    assert len(lines) == 3


def test_jsonl_rows_round_trip(tmp_path) -> None:
    path = emit_table(_bundle(), TableKind.BENCHMARK, TableFormat.JSONL, tmp_path / "b.jsonl")
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert rows[0]["model"] == "PyTorch Early-Exit"
    assert rows[0]["speedup"] == pytest.approx(1.0)
    assert rows[1]["its"] == pytest.approx(50.99)
    assert rows[1]["speedup"] == pytest.approx(1.85)
    assert rows[1]["map_loss_pct"] == pytest.approx(-5.51)


def test_single_mode_bundle_leaves_comparison_cells_empty(tmp_path) -> None:
    bundle = ReportBundle(
        provenance=PROVENANCE,
        summaries=(ModeSummary(name="Solo", its=12.345, map_50_95=0.5),),
    )
    path = emit_table(bundle, TableKind.BENCHMARK, TableFormat.CSV, tmp_path / "b.csv")
    assert path.read_text().splitlines()[1] == "Solo,12.35,,0.500,"
    path = emit_table(bundle, TableKind.BENCHMARK, TableFormat.JSONL, tmp_path / "b.jsonl")
    row = json.loads(path.read_text().splitlines()[0])
    assert row["speedup"] is None


def test_bottleneck_table(tmp_path) -> None:
    result = BottleneckResult(
        res_high=640, res_low=64, fps_high=21.43, fps_low=38.63,
        pixel_ratio=100.0, fps_ratio=1.80261, bound_factor=0.25,
        verdict=Verdict.SYSTEM_BOUND_LIKELY,
    )
    bundle = ReportBundle(provenance=PROVENANCE, bottleneck=result)
    path = emit_table(bundle, TableKind.BOTTLENECK, TableFormat.CSV, tmp_path / "bn.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "res_high,res_low,fps_high,fps_low,pixel_ratio,fps_ratio,verdict"
    assert lines[1] == "640,64,21.43,38.63,100.00,1.8026,SystemBoundLikely"


def test_missing_sections_are_refused(tmp_path) -> None:
    bundle = ReportBundle(provenance=PROVENANCE, summaries=())
    with pytest.raises(ValueError, match="no benchmark section"):
        emit_table(bundle, TableKind.BENCHMARK, TableFormat.CSV, tmp_path / "x.csv")
    with pytest.raises(ValueError, match="no bottleneck section"):
        emit_table(bundle, TableKind.BOTTLENECK, TableFormat.CSV, tmp_path / "x.csv")
    no_stats = ReportBundle(
        provenance=PROVENANCE, summaries=(ModeSummary(name="s", its=1.0, map_50_95=0.5),)
    )
    with pytest.raises(ValueError, match="no routing section"):
        emit_table(no_stats, TableKind.ROUTING, TableFormat.CSV, tmp_path / "x.csv")


def test_bundle_requires_provenance() -> None:
    with pytest.raises(ValueError, match="provenance"):
        ReportBundle(provenance={})


def test_format_helpers() -> None:
    assert format_speedup(1.8549) == "1.85x"
    assert format_loss_pct(-5.5138) == "-5.51%"


def _sweep_points() -> list[SweepPoint]:
    return [
        SweepPoint(threshold=k / 4, cheap_path_rate=1.0 - k / 5, map_50_95=0.3 + 0.1 * k, its=50.0 - k)
        for k in range(5)
    ]


def _series_points(svg_path, series_id):
    root = ET.parse(svg_path).getroot()
    ns = {"svg": "http://www.w3.org/2000/svg"}
    for poly in root.findall(".//svg:polyline", ns):
        if poly.get("id") == series_id:
            pairs = poly.get("points").split()
            return [tuple(float(v) for v in pair.split(",")) for pair in pairs]
    return None


def test_sweep_plot_structure(tmp_path) -> None:
    path = tmp_path / "sweep.svg"
    emit_sweep_plot(_sweep_points(), SweepAxes.MAP_VS_THRESHOLD, path,
                    selected=GateThreshold(0.5), title="demo sweep")
    text = path.read_text()
    assert text.startswith("<?xml")
    assert 'id="operating-point"' in text
    assert "t=0.50" in text
    assert "gate threshold" in text

    map_pts = _series_points(path, "series-map_50_95")
    rate_pts = _series_points(path, "series-cheap_path_rate")
    assert len(map_pts) == 5
    assert len(rate_pts) == 5
    # x advances with the threshold; y falls as the metric rises.
    xs = [p[0] for p in map_pts]
    assert xs == sorted(xs)
    ys = [p[1] for p in map_pts]
    assert ys == sorted(ys, reverse=True)


def test_sweep_plot_rate_axes_drops_rate_series(tmp_path) -> None:
    path = tmp_path / "sweep.svg"
    emit_sweep_plot(_sweep_points(), SweepAxes.MAP_VS_RATE, path)
    assert _series_points(path, "series-map_50_95") is not None
    assert _series_points(path, "series-cheap_path_rate") is None
    assert "cheap path rate" in path.read_text()  # as the x axis label


def test_sweep_plot_is_byte_deterministic(tmp_path) -> None:
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    emit_sweep_plot(_sweep_points(), SweepAxes.MAP_VS_THRESHOLD, a, selected=GateThreshold(0.25))
    emit_sweep_plot(_sweep_points(), SweepAxes.MAP_VS_THRESHOLD, b, selected=GateThreshold(0.25))
    assert a.read_bytes() == b.read_bytes()


def test_sweep_plot_rejects_degenerate_input(tmp_path) -> None:
    with pytest.raises(ValueError, match="at least 2"):
        emit_sweep_plot(_sweep_points()[:1], SweepAxes.MAP_VS_THRESHOLD, tmp_path / "x.svg")
    broken = _sweep_points()
    broken[2] = SweepPoint(threshold=0.5, cheap_path_rate=0.6, map_50_95=math.nan, its=48.0)
    with pytest.raises(ValueError, match="0.5.*map_50_95"):
        emit_sweep_plot(broken, SweepAxes.MAP_VS_THRESHOLD, tmp_path / "x.svg")


def test_sweep_plot_no_selection_omits_marker(tmp_path) -> None:
    path = tmp_path / "sweep.svg"
    emit_sweep_plot(_sweep_points(), SweepAxes.MAP_VS_THRESHOLD, path)
    assert "operating-point" not in path.read_text()


def test_render_sweep_figure_smoke(tmp_path) -> None:
    path = tmp_path / "sweep.png"
    render_sweep_figure(_sweep_points(), path, selected=GateThreshold(0.5))
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_render_bench_figure_is_deterministic(tmp_path) -> None:
    report = _bundle().comparison
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    render_bench_figure(report, a)
    render_bench_figure(report, b)
    assert a.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert a.read_bytes() == b.read_bytes()
