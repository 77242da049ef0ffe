"""Throughput accounting, mode comparison, and the bottleneck probe."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .model import ImageTrace, PassKind
from .router import MissingPassError, RouteOutcome, RoutingStats


@dataclass(frozen=True)
class ThroughputModel:
    """Charged-cost aggregate: images per second over summed latencies."""

    total_images: int
    total_charged_ms: float
    its: float


def throughput(outcomes: Sequence[RouteOutcome]) -> ThroughputModel:
    """Fold routed outcomes into an iterations-per-second figure.

    Costs add exactly (fsum), so the rate is permutation-invariant. An
    all-zero total is refused: it cannot form a rate.
    """
    if not outcomes:
        raise ValueError("no outcomes: throughput undefined")
    total_ms = math.fsum(o.charged_ms for o in outcomes)
    if total_ms <= 0:
        raise ValueError("total charged time is zero: throughput undefined")
    return ThroughputModel(
        total_images=len(outcomes),
        total_charged_ms=total_ms,
        its=len(outcomes) / (total_ms / 1000.0),
    )


@dataclass(frozen=True)
class ModeSummary:
    """One routing mode's benchmark outcome."""

    name: str
    its: float
    map_50_95: float
    routing: RoutingStats | None = None


@dataclass(frozen=True)
class BenchReport:
    baseline: ModeSummary
    adaptive: ModeSummary
    speedup: float
    map_loss_pct: float


def compare(adaptive: ModeSummary, baseline: ModeSummary) -> BenchReport:
    """Relate a candidate mode to its baseline.

    speedup is the throughput ratio; map_loss_pct is the relative accuracy
    change in percent, negative when the candidate scores lower.
    """
    if baseline.its <= 0:
        raise ValueError(f"baseline throughput must be positive, got {baseline.its!r}")
    if baseline.map_50_95 <= 0:
        raise ValueError(f"baseline mAP must be positive, got {baseline.map_50_95!r}")
    return BenchReport(
        baseline=baseline,
        adaptive=adaptive,
        speedup=adaptive.its / baseline.its,
        map_loss_pct=(adaptive.map_50_95 - baseline.map_50_95) / baseline.map_50_95 * 100.0,
    )


class Verdict(str, Enum):
    SYSTEM_BOUND_LIKELY = "SystemBoundLikely"
    COMPUTE_BOUND_LIKELY = "ComputeBoundLikely"


@dataclass(frozen=True)
class BottleneckResult:
    res_high: int
    res_low: int
    fps_high: float
    fps_low: float
    pixel_ratio: float
    fps_ratio: float
    bound_factor: float
    verdict: Verdict


def bottleneck_test(
    traces: Sequence[ImageTrace],
    res_high: int = 640,
    res_low: int = 64,
    bound_factor: float = 0.25,
) -> BottleneckResult:
    """Compare measured speed gain against the pixel-count gain.

    Shrinking the input by r in each dimension cuts compute by about r^2;
    if the observed fps ratio lands below bound_factor times that, the
    pipeline is spending its time somewhere other than the model, and the
    verdict says so.
    """
    if not traces:
        raise ValueError("empty trace set: nothing to measure")
    if res_low <= 0 or res_high <= res_low:
        raise ValueError(f"need res_high > res_low > 0, got {res_high} and {res_low}")
    if bound_factor <= 0:
        raise ValueError(f"bound_factor must be positive, got {bound_factor!r}")

    def fps_at(resolution: int) -> float:
        latencies = []
        for trace in traces:
            found = trace.find_pass(PassKind.RESOLUTION, resolution)
            if found is None:
                raise MissingPassError(
                    f"image {trace.image_id}: trace has no {resolution}px resolution pass"
                )
            latencies.append(found.latency_ms)
        total_ms = math.fsum(latencies)
        if total_ms <= 0:
            raise ValueError(f"total latency at {resolution}px is zero: fps undefined")
        return len(latencies) / (total_ms / 1000.0)

    fps_high = fps_at(res_high)
    fps_low = fps_at(res_low)
    pixel_ratio = (res_high / res_low) ** 2
    fps_ratio = fps_low / fps_high
    verdict = (
        Verdict.SYSTEM_BOUND_LIKELY
        if fps_ratio < bound_factor * pixel_ratio
        else Verdict.COMPUTE_BOUND_LIKELY
    )
    return BottleneckResult(
        res_high=res_high,
        res_low=res_low,
        fps_high=fps_high,
        fps_low=fps_low,
        pixel_ratio=pixel_ratio,
        fps_ratio=fps_ratio,
        bound_factor=bound_factor,
        verdict=verdict,
    )
