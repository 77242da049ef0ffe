"""Core value types shared by the routing, evaluation, and benchmark layers.

Geometry-bearing types (BBox, Detection) validate their numeric ranges at
construction time. Container types (PassRecord, ImageTrace) only enforce
structural coherence when built, so that data-quality problems found in
trace files can be reported as violations by validate_trace_set instead of
blowing up mid-parse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Sequence

# Layer index the intermediate detection head taps by default.
DEFAULT_TAP_LAYER = 16


class PassKind(str, Enum):
    """Kind tag of one recorded inference pass."""

    RESOLUTION = "resolution"
    EARLY_HEAD = "early_head"
    FULL = "full"


def _require_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixels: top-left corner plus size."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            _require_finite(name, float(getattr(self, name)))
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box size must be positive, got w={self.w!r} h={self.h!r}")

    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class Detection:
    """One scored, class-labelled box prediction."""

    box: BBox
    score: float
    category_id: int
    # Unknown wire fields ride along so round-trips do not lose them.
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        _require_finite("score", self.score)
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score!r}")
        if self.category_id < 0:
            raise ValueError(f"category_id must be non-negative, got {self.category_id!r}")


@dataclass(frozen=True)
class GroundTruthBox:
    """Annotated box; iscrowd marks an ignore region rather than an instance."""

    box: BBox
    category_id: int
    iscrowd: bool = False

    def __post_init__(self) -> None:
        if self.category_id < 0:
            raise ValueError(f"category_id must be non-negative, got {self.category_id!r}")


@dataclass(frozen=True)
class ImageRecord:
    """One dataset image with its ground-truth boxes."""

    image_id: int
    width: int
    height: int
    ground_truth: tuple[GroundTruthBox, ...] = ()

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(
                f"image {self.image_id}: size must be positive, got {self.width}x{self.height}"
            )


@dataclass(frozen=True)
class PassRecord:
    """One recorded inference pass of a single image.

    kind decides which optional fields apply: resolution passes carry the
    input side in pixels, early-head passes carry the tap layer and may
    carry flip-TTA fields. Latency signs and flip-field pairing are checked
    by validate_trace_set, not here.
    """

    kind: PassKind
    latency_ms: float
    detections: tuple[Detection, ...] = ()
    resolution: int | None = None
    tap_layer: int | None = None
    flip_detections: tuple[Detection, ...] | None = None
    flip_latency_ms: float | None = None
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind is PassKind.RESOLUTION:
            if self.resolution is None:
                raise ValueError("resolution pass requires a resolution")
            if self.tap_layer is not None:
                raise ValueError("resolution pass must not carry a tap_layer")
        elif self.kind is PassKind.EARLY_HEAD:
            if self.tap_layer is None:
                raise ValueError("early_head pass requires a tap_layer")
            if self.resolution is not None:
                raise ValueError("early_head pass must not carry a resolution")
        else:
            if self.resolution is not None or self.tap_layer is not None:
                raise ValueError("full pass carries neither resolution nor tap_layer")

    @property
    def kind_key(self) -> tuple[str, int | None]:
        """Identity of the pass within a trace; resolution is part of it."""
        return (self.kind.value, self.resolution)


@dataclass(frozen=True)
class ImageTrace:
    """All recorded passes of one image."""

    image_id: int
    passes: tuple[PassRecord, ...] = ()
    extra: Mapping[str, Any] = field(default_factory=dict)

    def find_pass(self, kind: PassKind, resolution: int | None = None) -> PassRecord | None:
        for p in self.passes:
            if p.kind is kind and (kind is not PassKind.RESOLUTION or p.resolution == resolution):
                return p
        return None


@dataclass(frozen=True)
class GateThreshold:
    """Confidence cutoff of the escalation gate."""

    value: float

    def __post_init__(self) -> None:
        _require_finite("threshold", self.value)
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.value!r}")


@dataclass(frozen=True)
class Violation:
    """One data-quality finding; image_id is None for file-level findings."""

    image_id: int | None
    field: str
    message: str

    def __str__(self) -> str:
        where = "trace set" if self.image_id is None else f"image {self.image_id}"
        return f"{where}: {self.field}: {self.message}"


def _check_latency(image_id: int, name: str, value: float | None, out: list[Violation]) -> None:
    if value is None:
        return
    if not math.isfinite(value) or value < 0:
        out.append(Violation(image_id, name, f"must be finite and non-negative, got {value!r}"))


def validate_trace_set(
    traces: Sequence[ImageTrace],
    dataset: Sequence[ImageRecord] | None = None,
) -> list[Violation]:
    """Check a trace set against the type invariants and, when given, the dataset.

    Returns an empty list iff every trace is internally consistent and every
    image id exists in the dataset. Passing dataset=None skips the orphan
    check (useful when only a trace file is at hand).
    """
    violations: list[Violation] = []
    known_ids = None if dataset is None else {r.image_id for r in dataset}
    seen_ids: set[int] = set()
    for trace in traces:
        if trace.image_id in seen_ids:
            violations.append(Violation(trace.image_id, "image_id", "duplicate image id"))
        seen_ids.add(trace.image_id)
        if known_ids is not None and trace.image_id not in known_ids:
            violations.append(
                Violation(trace.image_id, "image_id", "trace has no matching dataset image")
            )
        seen_keys: set[tuple[str, int | None]] = set()
        for p in trace.passes:
            key = p.kind_key
            if key in seen_keys:
                violations.append(
                    Violation(trace.image_id, "passes", f"more than one pass of kind {key}")
                )
            seen_keys.add(key)
            _check_latency(trace.image_id, "latency_ms", p.latency_ms, violations)
            _check_latency(trace.image_id, "flip_latency_ms", p.flip_latency_ms, violations)
            if (p.flip_detections is None) != (p.flip_latency_ms is None):
                violations.append(
                    Violation(
                        trace.image_id,
                        "flip_detections",
                        "flip_detections and flip_latency_ms must be present together",
                    )
                )
            if p.resolution is not None and p.resolution <= 0:
                violations.append(
                    Violation(trace.image_id, "resolution", f"must be positive, got {p.resolution}")
                )
            if p.tap_layer is not None and p.tap_layer < 0:
                violations.append(
                    Violation(trace.image_id, "tap_layer", f"must be non-negative, got {p.tap_layer}")
                )
    return violations
