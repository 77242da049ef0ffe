"""Confidence-gated adaptive object detection: routing, calibration, benchmarks.

The package replays recorded inference traces (multi-resolution passes and
early-exit head outputs per image) through gating policies, calibrates gate
thresholds in two stages, scores accuracy with a COCO-protocol evaluator,
and reports throughput, speedup, and routing statistics.
"""

from .backends import (
    TRACE_FORMAT_VERSION,
    AnnotationParseError,
    TraceFile,
    TraceParseError,
    emit_annotations,
    emit_traces,
    parse_annotations,
    parse_traces,
)
from .bench import (
    BenchReport,
    BottleneckResult,
    ModeSummary,
    ThroughputModel,
    Verdict,
    bottleneck_test,
    compare,
    throughput,
)
from .calibrate import (
    CalibrationPlan,
    SweepPoint,
    TuningResult,
    default_grid,
    sample_subsets,
    seed_threshold,
    sweep,
    tune_adaptive,
    tune_early_exit,
)
from .cocoeval import EvalConfig, EvalResult, MatchLabel, average_precision, evaluate, match_image
from .geometry import NmsConfig, hflip_box, iou, nms, tta_merge
from .model import (
    DEFAULT_TAP_LAYER,
    BBox,
    Detection,
    GateThreshold,
    GroundTruthBox,
    ImageRecord,
    ImageTrace,
    PassKind,
    PassRecord,
    Violation,
    validate_trace_set,
)
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
    MissingPassError,
    RouteMode,
    RouteOutcome,
    RoutePath,
    RoutingStats,
    adaptive_gate_signal,
    early_exit_gate_signal,
    gate_confidence,
    route_all,
    route_early_exit,
    route_two_pass,
)
from .synth import (
    Complexity,
    SyntheticConfig,
    balanced_subset,
    categorize,
    generate_synthetic,
)

__version__ = "0.1.0"

__all__ = [
    "TRACE_FORMAT_VERSION",
    "AnnotationParseError",
    "TraceFile",
    "TraceParseError",
    "emit_annotations",
    "emit_traces",
    "parse_annotations",
    "parse_traces",
    "BenchReport",
    "BottleneckResult",
    "ModeSummary",
    "ThroughputModel",
    "Verdict",
    "bottleneck_test",
    "compare",
    "throughput",
    "CalibrationPlan",
    "SweepPoint",
    "TuningResult",
    "default_grid",
    "sample_subsets",
    "seed_threshold",
    "sweep",
    "tune_adaptive",
    "tune_early_exit",
    "EvalConfig",
    "EvalResult",
    "MatchLabel",
    "average_precision",
    "evaluate",
    "match_image",
    "NmsConfig",
    "hflip_box",
    "iou",
    "nms",
    "tta_merge",
    "DEFAULT_TAP_LAYER",
    "BBox",
    "Detection",
    "GateThreshold",
    "GroundTruthBox",
    "ImageRecord",
    "ImageTrace",
    "PassKind",
    "PassRecord",
    "Violation",
    "validate_trace_set",
    "ReportBundle",
    "SweepAxes",
    "TableFormat",
    "TableKind",
    "emit_sweep_plot",
    "emit_table",
    "render_bench_figure",
    "render_sweep_figure",
    "MissingPassError",
    "RouteMode",
    "RouteOutcome",
    "RoutePath",
    "RoutingStats",
    "adaptive_gate_signal",
    "early_exit_gate_signal",
    "gate_confidence",
    "route_all",
    "route_early_exit",
    "route_two_pass",
    "Complexity",
    "SyntheticConfig",
    "balanced_subset",
    "categorize",
    "generate_synthetic",
    "__version__",
]
