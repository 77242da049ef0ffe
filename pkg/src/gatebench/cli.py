"""Command-line entry points: synth, calibrate, bench, bottleneck, validate.

Every command writes into a run directory (``--out``, overridable through
the single environment variable GATEBENCH_OUT) and drops a manifest.json
there with the echoed configuration, the seed, and sha256 digests of every
input and output file. Nothing written embeds timestamps or absolute
paths, so identical inputs and flags reproduce identical bytes.

Exit codes: 0 success, 1 data or validation error, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass
from os import environ
from pathlib import Path

from .backends import (
    AnnotationParseError,
    TraceParseError,
    emit_annotations,
    emit_traces,
    parse_annotations,
    parse_traces,
)
from .bench import ModeSummary, bottleneck_test, compare, throughput
from .calibrate import (
    CalibrationPlan,
    default_grid,
    sample_subsets,
    seed_threshold,
    sweep,
    tune_adaptive,
    tune_early_exit,
)
from .cocoeval import evaluate
from .geometry import NmsConfig
from .model import GateThreshold, PassKind, validate_trace_set
from .report import (
    ReportBundle,
    SweepAxes,
    TableFormat,
    TableKind,
    emit_sweep_plot,
    emit_table,
    render_bench_figure,
    render_sweep_figure,
)
from .router import (
    RouteMode,
    adaptive_gate_signal,
    early_exit_gate_signal,
    route_all,
)
from .synth import SyntheticConfig, generate_synthetic

ENV_OUT = "GATEBENCH_OUT"

MODE_NAMES = {
    RouteMode.EARLY_EXIT: "Early-Exit",
    RouteMode.ADAPTIVE: "Adaptive Two-Pass",
}


class UsageError(Exception):
    """Bad flag combination or value; maps to exit code 2."""


@dataclass(frozen=True)
class RunConfig:
    """Routing and evaluation knobs shared by calibrate and bench runs.

    Explicit per-mode thresholds and a calibrated thresholds file are
    mutually exclusive ways to choose operating points.
    """

    mode: str = "both"
    seed: int = 123
    nms: NmsConfig = NmsConfig()
    low_res: int = 160
    high_res: int = 640
    head_overhead_ms: float = 0.0
    adaptive_threshold: float | None = None
    early_exit_threshold: float | None = None
    thresholds_file: Path | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("adaptive", "early-exit", "both"):
            raise ValueError(f"unknown mode {self.mode!r}")
        explicit = self.adaptive_threshold is not None or self.early_exit_threshold is not None
        if explicit and self.thresholds_file is not None:
            raise UsageError("explicit thresholds and a thresholds file are mutually exclusive")

    def modes(self) -> list[RouteMode]:
        if self.mode == "adaptive":
            return [RouteMode.ADAPTIVE]
        if self.mode == "early-exit":
            return [RouteMode.EARLY_EXIT]
        return [RouteMode.EARLY_EXIT, RouteMode.ADAPTIVE]


def _mode_slug(mode: RouteMode) -> str:
    return mode.value.replace("-", "_")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _out_dir(args) -> Path:
    override = environ.get(ENV_OUT)
    target = override or args.out
    if not target:
        raise UsageError(f"no output directory: pass --out or set {ENV_OUT}")
    path = Path(target)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(
    out_dir: Path,
    command: str,
    config: dict,
    inputs: dict[str, Path],
    outputs: list[str],
) -> None:
    manifest = {
        "command": command,
        "config": config,
        "inputs": {
            name: {"file": path.name, "sha256": _sha256(path)}
            for name, path in sorted(inputs.items())
        },
        "outputs": {name: _sha256(out_dir / name) for name in sorted(outputs)},
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _provenance(command: str, config: dict, inputs: dict[str, Path], seed: int) -> dict:
    return {
        "command": command,
        "config": config,
        "inputs": {name: _sha256(path) for name, path in sorted(inputs.items())},
        "seed": seed,
    }


def _nms_from(args) -> NmsConfig:
    return NmsConfig(iou_threshold=args.nms_iou, score_threshold=args.score_thresh)


def _add_common_routing_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--nms-iou", type=float, default=0.70, help="NMS IoU threshold")
    parser.add_argument("--score-thresh", type=float, default=0.001, help="detection score floor")
    parser.add_argument("--low-res", type=int, default=160, help="cheap pass resolution")
    parser.add_argument("--high-res", type=int, default=640, help="expensive pass resolution")
    parser.add_argument(
        "--head-overhead-ms",
        type=float,
        default=0.0,
        help="extra charge when the early head ran but the full model was still needed",
    )


def cmd_synth(args) -> int:
    """Generate a synthetic dataset plus traces into the run directory."""
    if args.images < 1:
        raise UsageError(f"--images must be at least 1, got {args.images}")
    if args.boxes_min < 0 or args.boxes_max < args.boxes_min:
        raise UsageError("need 0 <= --boxes-min <= --boxes-max")
    if args.low_res >= args.high_res:
        raise UsageError("--low-res must be smaller than --high-res")
    out = _out_dir(args)
    cfg = SyntheticConfig.for_resolutions(
        [args.low_res, args.high_res],
        num_images=args.images,
        seed=args.seed,
        classes=args.classes,
        boxes_per_image=(args.boxes_min, args.boxes_max),
    )
    records, trace_file = generate_synthetic(cfg)
    emit_annotations(records, out / "annotations.json")
    emit_traces(trace_file, out / "traces.jsonl")
    config = {
        "images": args.images,
        "seed": args.seed,
        "classes": args.classes,
        "boxes_per_image": [args.boxes_min, args.boxes_max],
        "resolutions": list(cfg.resolutions),
        "detect_prob": {str(k): v for k, v in cfg.detect_prob.items()},
        "loc_noise_px": {str(k): v for k, v in cfg.loc_noise_px.items()},
        "false_pos_rate": {str(k): v for k, v in cfg.false_pos_rate.items()},
        "latency_ms": {str(k): v for k, v in cfg.latency_ms.items()},
    }
    (out / "synth_config.json").write_text(
        json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_manifest(
        out, "synth", config, {}, ["annotations.json", "traces.jsonl", "synth_config.json"]
    )
    print(f"wrote {len(records)} images to {out / 'traces.jsonl'}")
    return 0


def cmd_validate(args) -> int:
    """Check a trace file, optionally against an annotation file."""
    trace_file = parse_traces(args.traces)
    dataset = parse_annotations(args.annotations) if args.annotations else None
    violations = validate_trace_set(trace_file.traces, dataset)
    for violation in violations:
        print(violation)
    scope = "traces and annotations" if args.annotations else "traces"
    if violations:
        print(f"{len(violations)} violations in {len(trace_file.traces)} traces")
        return 1
    print(f"OK: {len(trace_file.traces)} traces, {scope} consistent")
    return 0


def _records_for_traces(trace_file, dataset):
    by_id = {r.image_id: r for r in dataset}
    missing = [t.image_id for t in trace_file.traces if t.image_id not in by_id]
    if missing:
        raise ValueError(f"traces reference image ids missing from annotations: {missing[:5]}")
    return by_id


def _high_res_map(traces, records, nms_cfg, high_res):
    """Accuracy of always running the expensive pass; adaptive-only baseline."""
    predictions = {}
    for trace in traces:
        full = trace.find_pass(PassKind.RESOLUTION, high_res)
        if full is None:
            raise ValueError(f"image {trace.image_id}: trace has no {high_res}px resolution pass")
        predictions[trace.image_id] = tuple(
            d for d in full.detections if d.score >= nms_cfg.score_threshold
        )
    return evaluate(predictions, records).map_50_95


def cmd_calibrate(args) -> int:
    """Seed thresholds on a calibration subset, then grid-search a tuning subset."""
    run = RunConfig(
        mode=args.mode,
        seed=args.seed,
        nms=_nms_from(args),
        low_res=args.low_res,
        high_res=args.high_res,
        head_overhead_ms=args.head_overhead_ms,
    )
    out = _out_dir(args)
    trace_file = parse_traces(args.traces)
    dataset = parse_annotations(args.annotations)
    by_id = _records_for_traces(trace_file, dataset)
    traced_records = [by_id[t.image_id] for t in trace_file.traces]
    plan = CalibrationPlan(
        calibration_size=args.cal_size,
        tuning_size=args.tune_size,
        target_cheap_rate=args.target_rate,
        grid=default_grid(args.grid_step),
        rng_seed=args.seed,
    )
    cal_ids, tune_ids = sample_subsets(traced_records, plan)
    traces_by_id = {t.image_id: t for t in trace_file.traces}
    cal_traces = [traces_by_id[i] for i in cal_ids]
    tune_traces = [traces_by_id[i] for i in tune_ids]
    tune_records = [by_id[i] for i in tune_ids]
    widths = {r.image_id: r.width for r in dataset}

    config = {
        "mode": run.mode,
        "seed": run.seed,
        "nms_iou": run.nms.iou_threshold,
        "score_thresh": run.nms.score_threshold,
        "low_res": run.low_res,
        "high_res": run.high_res,
        "head_overhead_ms": run.head_overhead_ms,
        "cal_size": plan.calibration_size,
        "tune_size": plan.tuning_size,
        "target_rate": plan.target_cheap_rate,
        "grid_step": args.grid_step,
        "min_exit_rate": args.min_exit_rate,
        "max_map_loss": args.max_map_loss,
    }
    inputs = {"traces": Path(args.traces), "annotations": Path(args.annotations)}

    outputs: list[str] = []
    modes_payload: dict[str, dict] = {}
    baseline_map = args.baseline_map
    results = {}
    for mode in run.modes():
        if mode is RouteMode.ADAPTIVE:
            signals = [adaptive_gate_signal(t, run.nms, run.low_res) for t in cal_traces]
        else:
            signals = [
                early_exit_gate_signal(t, run.nms, widths[t.image_id]) for t in cal_traces
            ]
        seed = seed_threshold(signals, plan.target_cheap_rate)
        points = sweep(
            tune_traces,
            tune_records,
            mode,
            plan.grid,
            run.nms,
            low_res=run.low_res,
            high_res=run.high_res,
            head_overhead_ms=run.head_overhead_ms,
        )
        if mode is RouteMode.EARLY_EXIT:
            result = tune_early_exit(points, min_exit_rate=args.min_exit_rate)
            if baseline_map is None:
                baseline_map = result.objective_value
            entry = {"objective": "map_50_95", "min_exit_rate": args.min_exit_rate}
        else:
            if baseline_map is None:
                baseline_map = _high_res_map(tune_traces, tune_records, run.nms, run.high_res)
            result = tune_adaptive(points, baseline_map, max_rel_map_loss=args.max_map_loss)
            entry = {
                "objective": "its",
                "max_rel_map_loss": args.max_map_loss,
                "baseline_map": baseline_map,
            }
        results[mode] = result
        entry.update(
            {
                "threshold": result.threshold.value,
                "seed_threshold": seed.value,
                "objective_value": result.objective_value,
                "constraint_satisfied": result.constraint_satisfied,
            }
        )
        modes_payload[mode.value] = entry

        slug = _mode_slug(mode)
        sweep_rows = "".join(
            json.dumps(
                {
                    "threshold": p.threshold,
                    "cheap_path_rate": p.cheap_path_rate,
                    "map_50_95": p.map_50_95,
                    "its": p.its,
                },
                sort_keys=True,
                separators=(",", ":"),
            )
            + "\n"
            for p in points
        )
        (out / f"sweep_{slug}.jsonl").write_text(sweep_rows, encoding="utf-8")
        emit_sweep_plot(
            points,
            SweepAxes.MAP_VS_THRESHOLD,
            out / f"sweep_{slug}.svg",
            selected=result.threshold,
            title=f"{MODE_NAMES[mode]} threshold sweep",
        )
        render_sweep_figure(
            points,
            out / f"sweep_{slug}.png",
            selected=result.threshold,
            title=f"{MODE_NAMES[mode]} threshold sweep",
        )
        outputs += [f"sweep_{slug}.jsonl", f"sweep_{slug}.svg", f"sweep_{slug}.png"]
        flag = "" if result.constraint_satisfied else " (constraint not met, fallback point)"
        print(
            f"{MODE_NAMES[mode]}: threshold {result.threshold.value:.2f}"
            f" seed {seed.value:.4f}{flag}"
        )

    payload = {"config": config, "modes": modes_payload}
    (out / "thresholds.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    outputs.append("thresholds.json")
    _write_manifest(out, "calibrate", config, inputs, outputs)
    return 0


def _threshold_for(mode: RouteMode, run: RunConfig) -> GateThreshold:
    if run.thresholds_file is not None:
        data = json.loads(run.thresholds_file.read_text(encoding="utf-8"))
        entry = data.get("modes", {}).get(mode.value)
        if entry is None or "threshold" not in entry:
            raise ValueError(
                f"thresholds file {run.thresholds_file} has no threshold for mode {mode.value}"
            )
        return GateThreshold(float(entry["threshold"]))
    explicit = (
        run.adaptive_threshold if mode is RouteMode.ADAPTIVE else run.early_exit_threshold
    )
    if explicit is None:
        flag = "--adaptive-threshold" if mode is RouteMode.ADAPTIVE else "--early-exit-threshold"
        raise UsageError(f"mode {mode.value} needs a threshold: pass --thresholds or {flag}")
    return GateThreshold(explicit)


def cmd_bench(args) -> int:
    """Route the full trace set per mode and report speed and accuracy."""
    run = RunConfig(
        mode=args.mode,
        seed=args.seed,
        nms=_nms_from(args),
        low_res=args.low_res,
        high_res=args.high_res,
        head_overhead_ms=args.head_overhead_ms,
        adaptive_threshold=args.adaptive_threshold,
        early_exit_threshold=args.early_exit_threshold,
        thresholds_file=Path(args.thresholds) if args.thresholds else None,
    )
    out = _out_dir(args)
    trace_file = parse_traces(args.traces)
    dataset = parse_annotations(args.annotations)
    _records_for_traces(trace_file, dataset)
    widths = {r.image_id: r.width for r in dataset}

    summaries: dict[RouteMode, ModeSummary] = {}
    thresholds_used: dict[str, float] = {}
    for mode in run.modes():
        threshold = _threshold_for(mode, run)
        thresholds_used[mode.value] = threshold.value
        outcomes, stats = route_all(
            trace_file.traces,
            mode,
            threshold,
            run.nms,
            widths=widths,
            low_res=run.low_res,
            high_res=run.high_res,
            head_overhead_ms=run.head_overhead_ms,
        )
        predictions = {o.image_id: o.final_detections for o in outcomes}
        result = evaluate(predictions, dataset)
        summaries[mode] = ModeSummary(
            name=MODE_NAMES[mode],
            its=throughput(outcomes).its,
            map_50_95=result.map_50_95,
            routing=stats,
        )

    config = {
        "mode": run.mode,
        "seed": run.seed,
        "nms_iou": run.nms.iou_threshold,
        "score_thresh": run.nms.score_threshold,
        "low_res": run.low_res,
        "high_res": run.high_res,
        "head_overhead_ms": run.head_overhead_ms,
        "thresholds": thresholds_used,
    }
    inputs = {"traces": Path(args.traces), "annotations": Path(args.annotations)}
    if run.thresholds_file is not None:
        inputs["thresholds"] = run.thresholds_file

    if len(summaries) == 2:
        comparison = compare(summaries[RouteMode.ADAPTIVE], summaries[RouteMode.EARLY_EXIT])
        bundle = ReportBundle(
            provenance=_provenance("bench", config, inputs, run.seed),
            comparison=comparison,
        )
    else:
        comparison = None
        bundle = ReportBundle(
            provenance=_provenance("bench", config, inputs, run.seed),
            summaries=tuple(summaries.values()),
        )

    outputs = []
    for kind in (TableKind.BENCHMARK, TableKind.ROUTING):
        for fmt in (TableFormat.CSV, TableFormat.JSONL, TableFormat.TEXT):
            suffix = {"csv": "csv", "jsonl": "jsonl", "text": "txt"}[fmt.value]
            name = f"{kind.value}.{suffix}"
            emit_table(bundle, kind, fmt, out / name)
            outputs.append(name)
    if comparison is not None:
        render_bench_figure(comparison, out / "benchmark.png")
        outputs.append("benchmark.png")
    _write_manifest(out, "bench", config, inputs, outputs)

    print((out / "benchmark.txt").read_text(encoding="utf-8"), end="")
    if comparison is None:
        print("note: speedup and map loss need a baseline; run with --mode both")
    return 0


def cmd_bottleneck(args) -> int:
    """Compare fps gain against pixel-count gain between two resolutions."""
    out = _out_dir(args)
    trace_file = parse_traces(args.traces)
    result = bottleneck_test(
        trace_file.traces,
        res_high=args.res_high,
        res_low=args.res_low,
        bound_factor=args.bound_factor,
    )
    config = {
        "res_high": args.res_high,
        "res_low": args.res_low,
        "bound_factor": args.bound_factor,
        "seed": args.seed,
    }
    inputs = {"traces": Path(args.traces)}
    bundle = ReportBundle(
        provenance=_provenance("bottleneck", config, inputs, args.seed),
        bottleneck=result,
    )
    outputs = []
    for fmt, suffix in ((TableFormat.CSV, "csv"), (TableFormat.TEXT, "txt")):
        name = f"bottleneck.{suffix}"
        emit_table(bundle, TableKind.BOTTLENECK, fmt, out / name)
        outputs.append(name)
    _write_manifest(out, "bottleneck", config, inputs, outputs)
    print(
        f"fps {result.fps_low:.2f} @ {result.res_low}px vs {result.fps_high:.2f}"
        f" @ {result.res_high}px; pixel ratio {result.pixel_ratio:.1f},"
        f" fps ratio {result.fps_ratio:.4f}: {result.verdict.value}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gatebench",
        description="Confidence-gated adaptive detection benchmark over replayable traces",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset and trace file")
    p.add_argument("--out", help=f"run directory (or set {ENV_OUT})")
    p.add_argument("--images", type=int, default=500, help="number of images")
    p.add_argument("--seed", type=int, default=123, help="generator seed")
    p.add_argument("--classes", type=int, default=3, help="number of object classes")
    p.add_argument("--boxes-min", type=int, default=1)
    p.add_argument("--boxes-max", type=int, default=8)
    p.add_argument("--low-res", type=int, default=160)
    p.add_argument("--high-res", type=int, default=640)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="validate a trace file against its schema")
    p.add_argument("--traces", required=True)
    p.add_argument("--annotations", help="optional annotations to cross-check image ids")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("calibrate", help="two-stage threshold calibration")
    p.add_argument("--traces", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", help=f"run directory (or set {ENV_OUT})")
    p.add_argument("--mode", choices=["adaptive", "early-exit", "both"], default="both")
    p.add_argument("--seed", type=int, default=123, help="subset sampling seed")
    p.add_argument("--cal-size", type=int, default=400, help="calibration subset size")
    p.add_argument("--tune-size", type=int, default=200, help="tuning subset size")
    p.add_argument("--target-rate", type=float, default=0.5, help="seed quantile target")
    p.add_argument("--grid-step", type=float, default=0.01, help="threshold grid step")
    p.add_argument("--min-exit-rate", type=float, default=0.10,
                   help="early-exit tuning: minimum cheap path rate")
    p.add_argument("--max-map-loss", type=float, default=0.06,
                   help="adaptive tuning: relative map loss budget")
    p.add_argument("--baseline-map", type=float, default=None,
                   help="override the baseline map the loss budget is relative to")
    _add_common_routing_flags(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("bench", help="route all traces and report throughput and accuracy")
    p.add_argument("--traces", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", help=f"run directory (or set {ENV_OUT})")
    p.add_argument("--mode", choices=["adaptive", "early-exit", "both"], default="both")
    p.add_argument("--seed", type=int, default=123, help="echoed into provenance")
    p.add_argument("--thresholds", help="thresholds.json from a calibrate run")
    p.add_argument("--adaptive-threshold", type=float, default=None)
    p.add_argument("--early-exit-threshold", type=float, default=None)
    _add_common_routing_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("bottleneck", help="pixel-ratio vs fps-ratio probe")
    p.add_argument("--traces", required=True)
    p.add_argument("--out", help=f"run directory (or set {ENV_OUT})")
    p.add_argument("--res-high", type=int, default=640)
    p.add_argument("--res-low", type=int, default=64)
    p.add_argument("--bound-factor", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=123, help="echoed into provenance")
    p.set_defaults(func=cmd_bottleneck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (TraceParseError, AnnotationParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
