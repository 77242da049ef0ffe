"""Wire formats: the JSONL trace file and the COCO-style annotation subset.

A trace file is UTF-8 JSON lines. The first line is a header carrying the
format version, the declared resolution tiers, and free-form capture
metadata; every following line is one image trace. Unknown JSON fields are
kept on the parsed objects and written back on emission, so foreign tools
can decorate traces without losing data through a round-trip. Scores
outside [0, 1] are clamped on ingestion and reported through the module
logger; structural problems are hard errors carrying the line number.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .model import (
    BBox,
    Detection,
    GroundTruthBox,
    ImageRecord,
    ImageTrace,
    PassKind,
    PassRecord,
)

logger = logging.getLogger(__name__)

TRACE_FORMAT_VERSION = 1

_DETECTION_KEYS = ("x", "y", "w", "h", "score", "category_id")
_PASS_KEYS = (
    "kind",
    "latency_ms",
    "detections",
    "resolution",
    "tap_layer",
    "flip_detections",
    "flip_latency_ms",
)
_TRACE_KEYS = ("image_id", "passes")
_HEADER_KEYS = ("format_version", "resolutions", "capture_meta")


class TraceParseError(ValueError):
    """Structural problem in a trace file; message carries the location."""


class AnnotationParseError(ValueError):
    """Structural problem in an annotation file."""


@dataclass(frozen=True)
class TraceFile:
    """Parsed trace file: header fields plus the traces in file order."""

    resolutions: tuple[int, ...]
    capture_meta: Mapping[str, Any] = field(default_factory=dict)
    traces: tuple[ImageTrace, ...] = ()
    format_version: int = TRACE_FORMAT_VERSION
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.resolutions:
            raise ValueError("header must declare at least one resolution")
        previous = 0
        for r in self.resolutions:
            if r <= previous:
                raise ValueError("header resolutions must be positive, ascending, unique")
            previous = r


class _Clamp:
    """Counts score clamps during one parse so they surface once."""

    def __init__(self) -> None:
        self.count = 0

    def clamp(self, score: float) -> float:
        if 0.0 <= score <= 1.0:
            return score
        self.count += 1
        return min(max(score, 0.0), 1.0)


def _extras(obj: Mapping[str, Any], known: Sequence[str]) -> dict[str, Any]:
    return {k: v for k, v in obj.items() if k not in known}


def detection_to_dict(det: Detection) -> dict[str, Any]:
    # Coerce numerics exactly as detection_from_dict does, so emit/parse
    # round-trips are byte-stable.
    out = {
        "x": float(det.box.x),
        "y": float(det.box.y),
        "w": float(det.box.w),
        "h": float(det.box.h),
        "score": float(det.score),
        "category_id": int(det.category_id),
    }
    out.update(det.extra)
    return out


def detection_from_dict(obj: Mapping[str, Any], clamp: _Clamp | None = None) -> Detection:
    for key in _DETECTION_KEYS:
        if key not in obj:
            raise ValueError(f"detection missing key {key!r}")
    score = float(obj["score"])
    if clamp is not None:
        score = clamp.clamp(score)
    return Detection(
        box=BBox(x=float(obj["x"]), y=float(obj["y"]), w=float(obj["w"]), h=float(obj["h"])),
        score=score,
        category_id=int(obj["category_id"]),
        extra=_extras(obj, _DETECTION_KEYS),
    )


def pass_to_dict(record: PassRecord) -> dict[str, Any]:
    out: dict[str, Any] = {
        "kind": record.kind.value,
        "latency_ms": float(record.latency_ms),
        "detections": [detection_to_dict(d) for d in record.detections],
    }
    if record.resolution is not None:
        out["resolution"] = int(record.resolution)
    if record.tap_layer is not None:
        out["tap_layer"] = int(record.tap_layer)
    if record.flip_detections is not None:
        out["flip_detections"] = [detection_to_dict(d) for d in record.flip_detections]
    if record.flip_latency_ms is not None:
        out["flip_latency_ms"] = float(record.flip_latency_ms)
    out.update(record.extra)
    return out


def pass_from_dict(obj: Mapping[str, Any], clamp: _Clamp | None = None) -> PassRecord:
    token = obj.get("kind")
    try:
        kind = PassKind(token)
    except ValueError:
        raise ValueError(f"unknown pass kind {token!r}") from None
    if "latency_ms" not in obj:
        raise ValueError("pass missing key 'latency_ms'")
    flips = obj.get("flip_detections")
    return PassRecord(
        kind=kind,
        latency_ms=float(obj["latency_ms"]),
        detections=tuple(detection_from_dict(d, clamp) for d in obj.get("detections", [])),
        resolution=None if obj.get("resolution") is None else int(obj["resolution"]),
        tap_layer=None if obj.get("tap_layer") is None else int(obj["tap_layer"]),
        flip_detections=None
        if flips is None
        else tuple(detection_from_dict(d, clamp) for d in flips),
        flip_latency_ms=None
        if obj.get("flip_latency_ms") is None
        else float(obj["flip_latency_ms"]),
        extra=_extras(obj, _PASS_KEYS),
    )


def trace_to_dict(trace: ImageTrace) -> dict[str, Any]:
    out: dict[str, Any] = {
        "image_id": trace.image_id,
        "passes": [pass_to_dict(p) for p in trace.passes],
    }
    out.update(trace.extra)
    return out


def trace_from_dict(obj: Mapping[str, Any], clamp: _Clamp | None = None) -> ImageTrace:
    if "image_id" not in obj:
        raise ValueError("trace missing key 'image_id'")
    return ImageTrace(
        image_id=int(obj["image_id"]),
        passes=tuple(pass_from_dict(p, clamp) for p in obj.get("passes", [])),
        extra=_extras(obj, _TRACE_KEYS),
    )


def _dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def emit_traces(trace_file: TraceFile, path: str | Path) -> Path:
    """Write a trace file; emission is deterministic for equal inputs."""
    path = Path(path)
    header: dict[str, Any] = {
        "format_version": trace_file.format_version,
        "resolutions": list(trace_file.resolutions),
        "capture_meta": dict(trace_file.capture_meta),
    }
    header.update(trace_file.extra)
    lines = [_dumps(header)]
    lines.extend(_dumps(trace_to_dict(t)) for t in trace_file.traces)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def parse_traces(path: str | Path) -> TraceFile:
    """Parse and structurally validate a trace file."""
    path = Path(path)
    clamp = _Clamp()
    header: dict[str, Any] | None = None
    traces: list[ImageTrace] = []
    seen_ids: set[int] = set()
    resolutions: tuple[int, ...] = ()
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceParseError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            if not isinstance(obj, dict):
                raise TraceParseError(f"{path}:{lineno}: expected a JSON object")
            if header is None:
                header = obj
                version = obj.get("format_version")
                if version != TRACE_FORMAT_VERSION:
                    raise TraceParseError(
                        f"{path}:{lineno}: unsupported format_version {version!r}"
                        f" (supported: {TRACE_FORMAT_VERSION})"
                    )
                try:
                    resolutions = tuple(int(r) for r in obj.get("resolutions", []))
                except (TypeError, ValueError):
                    raise TraceParseError(f"{path}:{lineno}: malformed resolutions") from None
                if not resolutions or list(resolutions) != sorted(set(resolutions)) or resolutions[0] <= 0:
                    raise TraceParseError(
                        f"{path}:{lineno}: resolutions must be positive, ascending, unique"
                    )
                continue
            try:
                trace = trace_from_dict(obj, clamp)
            except (ValueError, TypeError) as exc:
                raise TraceParseError(f"{path}:{lineno}: {exc}") from None
            if trace.image_id in seen_ids:
                raise TraceParseError(f"{path}:{lineno}: duplicate image_id {trace.image_id}")
            seen_ids.add(trace.image_id)
            for record in trace.passes:
                if record.kind is PassKind.RESOLUTION and record.resolution not in resolutions:
                    raise TraceParseError(
                        f"{path}:{lineno}: resolution {record.resolution} not declared in header"
                    )
            traces.append(trace)
    if header is None:
        raise TraceParseError(f"{path}: empty file, header line required")
    if clamp.count:
        logger.warning("%s: clamped %d detection scores into [0, 1]", path, clamp.count)
    meta = header.get("capture_meta", {})
    if not isinstance(meta, dict):
        raise TraceParseError(f"{path}:1: capture_meta must be an object")
    return TraceFile(
        resolutions=resolutions,
        capture_meta=meta,
        traces=tuple(traces),
        format_version=int(header["format_version"]),
        extra=_extras(header, _HEADER_KEYS),
    )


def parse_annotations(path: str | Path) -> list[ImageRecord]:
    """Parse the supported subset of a COCO instances file.

    Boxes are clamped to image bounds; annotations left without a usable
    box are skipped and counted in one logged warning. References to
    unknown images are hard errors.
    """
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as exc:
        raise AnnotationParseError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(data, dict) or "images" not in data:
        raise AnnotationParseError(f"{path}: missing key 'images'")

    sizes: dict[int, tuple[int, int]] = {}
    order: list[int] = []
    for entry in data["images"]:
        for key in ("id", "width", "height"):
            if key not in entry:
                raise AnnotationParseError(f"{path}: image entry missing key {key!r}")
        image_id = int(entry["id"])
        if image_id in sizes:
            raise AnnotationParseError(f"{path}: duplicate image id {image_id}")
        width, height = int(entry["width"]), int(entry["height"])
        if width <= 0 or height <= 0:
            raise AnnotationParseError(f"{path}: image {image_id} has non-positive size")
        sizes[image_id] = (width, height)
        order.append(image_id)

    boxes: dict[int, list[GroundTruthBox]] = {image_id: [] for image_id in order}
    skipped = 0
    for ann in data.get("annotations", []):
        for key in ("image_id", "bbox", "category_id"):
            if key not in ann:
                raise AnnotationParseError(f"{path}: annotation missing key {key!r}")
        image_id = int(ann["image_id"])
        if image_id not in sizes:
            raise AnnotationParseError(f"{path}: annotation references unknown image id {image_id}")
        bbox = ann["bbox"]
        if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
            raise AnnotationParseError(f"{path}: image {image_id}: bbox must be [x, y, w, h]")
        width, height = sizes[image_id]
        x, y, w, h = (float(v) for v in bbox)
        left = min(max(x, 0.0), float(width))
        top = min(max(y, 0.0), float(height))
        right = min(max(x + w, 0.0), float(width))
        bottom = min(max(y + h, 0.0), float(height))
        if right - left <= 0 or bottom - top <= 0:
            skipped += 1
            continue
        boxes[image_id].append(
            GroundTruthBox(
                box=BBox(x=left, y=top, w=right - left, h=bottom - top),
                category_id=int(ann["category_id"]),
                iscrowd=bool(ann.get("iscrowd", 0)),
            )
        )
    if skipped:
        logger.warning("%s: skipped %d annotations without usable boxes", path, skipped)
    return [
        ImageRecord(
            image_id=image_id,
            width=sizes[image_id][0],
            height=sizes[image_id][1],
            ground_truth=tuple(boxes[image_id]),
        )
        for image_id in order
    ]


def emit_annotations(records: Sequence[ImageRecord], path: str | Path) -> Path:
    """Write records as a minimal COCO instances file."""
    path = Path(path)
    images = [
        {"id": r.image_id, "width": r.width, "height": r.height} for r in records
    ]
    annotations = []
    next_id = 1
    for record in records:
        for gt in record.ground_truth:
            annotations.append(
                {
                    "id": next_id,
                    "image_id": record.image_id,
                    "bbox": [gt.box.x, gt.box.y, gt.box.w, gt.box.h],
                    "area": gt.box.area(),
                    "category_id": gt.category_id,
                    "iscrowd": 1 if gt.iscrowd else 0,
                }
            )
            next_id += 1
    categories = sorted({gt.category_id for r in records for gt in r.ground_truth})
    payload = {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": c, "name": f"category_{c}"} for c in categories],
    }
    path.write_text(_dumps(payload) + "\n", encoding="utf-8")
    return path
