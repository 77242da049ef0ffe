"""Confidence-gated routing over recorded traces.

Both strategies read a cheap signal first and only pay for the expensive
pass when the gate stays below the threshold. Acceptance is `confidence >=
threshold`, so a threshold of 0 accepts everything (an empty detection set
gates at 0.0 and still passes) and a threshold of 1 escalates everything
except perfectly confident images.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .geometry import NmsConfig, tta_merge
from .model import Detection, GateThreshold, ImageTrace, PassKind


class RouteMode(str, Enum):
    """Which cheap/expensive pass pair the router consumes."""

    ADAPTIVE = "adaptive"
    EARLY_EXIT = "early-exit"


class RoutePath(str, Enum):
    FIRST_PASS_ACCEPTED = "first_pass_accepted"
    ESCALATED = "escalated"
    EARLY_EXITED = "early_exited"
    FULL_MODEL = "full_model"

    @property
    def is_cheap(self) -> bool:
        return self in (RoutePath.FIRST_PASS_ACCEPTED, RoutePath.EARLY_EXITED)


class MissingPassError(ValueError):
    """A trace lacks the pass a routing mode requires."""


@dataclass(frozen=True)
class RouteOutcome:
    """Routing decision for one image, with the latency it is charged."""

    image_id: int
    path: RoutePath
    gate_confidence: float
    charged_ms: float
    final_detections: tuple[Detection, ...]


@dataclass(frozen=True)
class RoutingStats:
    total_images: int
    cheap_path_rate: float
    escalated_rate: float
    threshold: GateThreshold


def gate_confidence(detections: Iterable[Detection]) -> float:
    """Highest detection confidence; an empty set gates at 0.0."""
    return max((d.score for d in detections), default=0.0)


def _score_filtered(detections: Sequence[Detection], cfg: NmsConfig) -> tuple[Detection, ...]:
    return tuple(d for d in detections if d.score >= cfg.score_threshold)


def _require_pass(trace: ImageTrace, kind: PassKind, resolution: int | None = None):
    found = trace.find_pass(kind, resolution)
    if found is None:
        what = f"{resolution}px resolution pass" if kind is PassKind.RESOLUTION else f"{kind.value} pass"
        raise MissingPassError(f"image {trace.image_id}: trace has no {what}")
    return found


def route_two_pass(
    trace: ImageTrace,
    threshold: GateThreshold,
    cfg: NmsConfig,
    low_res: int = 160,
    high_res: int = 640,
) -> RouteOutcome:
    """Gate on the low-resolution pass; escalate to high resolution below it.

    The gate reads score-filtered stored detections directly (no NMS: the
    maximum survives suppression unchanged). An escalated image is charged
    for both passes; traces make that counterfactual cost exact.
    """
    low = _require_pass(trace, PassKind.RESOLUTION, low_res)
    high = _require_pass(trace, PassKind.RESOLUTION, high_res)
    kept = _score_filtered(low.detections, cfg)
    confidence = gate_confidence(kept)
    if confidence >= threshold.value:
        return RouteOutcome(
            image_id=trace.image_id,
            path=RoutePath.FIRST_PASS_ACCEPTED,
            gate_confidence=confidence,
            charged_ms=low.latency_ms,
            final_detections=kept,
        )
    return RouteOutcome(
        image_id=trace.image_id,
        path=RoutePath.ESCALATED,
        gate_confidence=confidence,
        charged_ms=low.latency_ms + high.latency_ms,
        final_detections=_score_filtered(high.detections, cfg),
    )


def route_early_exit(
    trace: ImageTrace,
    threshold: GateThreshold,
    cfg: NmsConfig,
    image_width: float,
    head_overhead_ms: float = 0.0,
) -> RouteOutcome:
    """Gate on the flip-merged early head; fall through to the full model.

    The head's flip companion is mandatory: its detections are recorded in
    flipped-image coordinates, which is why the original image width is a
    parameter. When the gate fails, the full pass is charged plus the
    configured head overhead (0 by default: the head is assumed fused).
    """
    early = _require_pass(trace, PassKind.EARLY_HEAD)
    full = _require_pass(trace, PassKind.FULL)
    if early.flip_detections is None or early.flip_latency_ms is None:
        raise MissingPassError(
            f"image {trace.image_id}: early_head pass lacks flip TTA fields"
        )
    merged = tuple(tta_merge(early.detections, early.flip_detections, image_width, cfg))
    confidence = gate_confidence(merged)
    if confidence >= threshold.value:
        return RouteOutcome(
            image_id=trace.image_id,
            path=RoutePath.EARLY_EXITED,
            gate_confidence=confidence,
            charged_ms=early.latency_ms + early.flip_latency_ms,
            final_detections=merged,
        )
    return RouteOutcome(
        image_id=trace.image_id,
        path=RoutePath.FULL_MODEL,
        gate_confidence=confidence,
        charged_ms=full.latency_ms + head_overhead_ms,
        final_detections=_score_filtered(full.detections, cfg),
    )


def adaptive_gate_signal(trace: ImageTrace, cfg: NmsConfig, low_res: int = 160) -> float:
    """Gate confidence the two-pass router would see, without routing."""
    low = _require_pass(trace, PassKind.RESOLUTION, low_res)
    return gate_confidence(_score_filtered(low.detections, cfg))


def early_exit_gate_signal(trace: ImageTrace, cfg: NmsConfig, image_width: float) -> float:
    """Gate confidence the early-exit router would see, without routing."""
    early = _require_pass(trace, PassKind.EARLY_HEAD)
    if early.flip_detections is None:
        raise MissingPassError(f"image {trace.image_id}: early_head pass lacks flip TTA fields")
    return gate_confidence(tta_merge(early.detections, early.flip_detections, image_width, cfg))


def route_all(
    traces: Sequence[ImageTrace],
    mode: RouteMode,
    threshold: GateThreshold,
    cfg: NmsConfig,
    widths: Mapping[int, float] | None = None,
    low_res: int = 160,
    high_res: int = 640,
    head_overhead_ms: float = 0.0,
) -> tuple[list[RouteOutcome], RoutingStats]:
    """Route every trace and aggregate the path split.

    Early-exit mode needs a widths map (image id -> original width) to undo
    the flip TTA; adaptive mode ignores it.
    """
    if not traces:
        raise ValueError("empty trace set: nothing to route")
    outcomes: list[RouteOutcome] = []
    for trace in traces:
        if mode is RouteMode.ADAPTIVE:
            outcomes.append(route_two_pass(trace, threshold, cfg, low_res, high_res))
        else:
            if widths is None or trace.image_id not in widths:
                raise ValueError(
                    f"image {trace.image_id}: early-exit routing needs the image width"
                )
            outcomes.append(
                route_early_exit(trace, threshold, cfg, widths[trace.image_id], head_overhead_ms)
            )
    cheap = sum(1 for o in outcomes if o.path.is_cheap)
    total = len(outcomes)
    stats = RoutingStats(
        total_images=total,
        cheap_path_rate=cheap / total,
        escalated_rate=(total - cheap) / total,
        threshold=threshold,
    )
    return outcomes, stats
