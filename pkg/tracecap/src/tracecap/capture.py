"""Sequential trace capture: run every gate pass per image and time it."""

from __future__ import annotations

import json
import logging
import statistics
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np
import torch
from PIL import Image

from .config import CaptureConfig
from .detector import CaptureError, Detector, RawDetection, load_detector

logger = logging.getLogger(__name__)

TRACE_FORMAT_VERSION = 1

# Latencies are wall-clock measurements; everything else in a trace is a
# deterministic function of the checkpoint, seed, and pixels.
NON_DETERMINISTIC_FIELDS = ("flip_latency_ms", "latency_ms")


@dataclass(frozen=True)
class SkippedImage:
    """One input image the capture loop could not use."""

    file_name: str
    reason: str


@dataclass(frozen=True)
class ImageEntry:
    """The slice of a COCO image record the capture loop needs."""

    image_id: int
    file_name: str
    width: int
    height: int


@dataclass(frozen=True)
class CaptureResult:
    """Header, per-image trace objects, and the skip list of one run."""

    header: dict[str, Any]
    traces: tuple[dict[str, Any], ...]
    skipped: tuple[SkippedImage, ...]

    def write(self, path: str | Path) -> Path:
        out = Path(path)
        lines = [json.dumps(self.header, sort_keys=True, separators=(",", ":"))]
        lines.extend(
            json.dumps(t, sort_keys=True, separators=(",", ":")) for t in self.traces
        )
        out.write_text("\n".join(lines) + "\n")
        return out


def read_image_entries(annotations_path: str | Path) -> list[ImageEntry]:
    """Image list from a COCO-style annotations file."""
    try:
        payload = json.loads(Path(annotations_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CaptureError(f"cannot read annotations {annotations_path}: {exc}") from exc
    if not isinstance(payload, dict) or "images" not in payload:
        raise CaptureError("annotations must be a JSON object with an 'images' list")
    entries: list[ImageEntry] = []
    seen: set[int] = set()
    for obj in payload["images"]:
        for key in ("id", "file_name", "width", "height"):
            if key not in obj:
                raise CaptureError(f"image record missing key {key!r}")
        image_id = int(obj["id"])
        if image_id in seen:
            raise CaptureError(f"duplicate image id {image_id}")
        seen.add(image_id)
        width, height = int(obj["width"]), int(obj["height"])
        if width <= 0 or height <= 0:
            raise CaptureError(f"image {image_id}: non-positive size {width}x{height}")
        entries.append(
            ImageEntry(image_id=image_id, file_name=str(obj["file_name"]),
                       width=width, height=height)
        )
    return entries


def _load_image(path: Path, device: torch.device) -> torch.Tensor:
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        array = np.asarray(rgb, dtype=np.float32) / 255.0
    tensor = torch.from_numpy(array).permute(2, 0, 1).unsqueeze(0)
    return tensor.to(device)


def _resize(image: torch.Tensor, resolution: int) -> torch.Tensor:
    return torch.nn.functional.interpolate(
        image, size=(resolution, resolution), mode="bilinear", align_corners=False
    )


def _timed(fn: Callable[[], list[RawDetection]], reps: int) -> tuple[list[RawDetection], float]:
    detections: list[RawDetection] = []
    samples: list[float] = []
    for i in range(reps):
        started = time.perf_counter()
        result = fn()
        samples.append((time.perf_counter() - started) * 1000.0)
        if i == 0:
            detections = result
    return detections, statistics.median(samples)


def _map_back(dets: list[RawDetection], resolution: int, width: int,
              height: int) -> list[dict[str, Any]]:
    """Scale detections from the resized frame to image pixels and clamp."""
    sx = width / resolution
    sy = height / resolution
    out: list[dict[str, Any]] = []
    for d in dets:
        left = min(max(d.x * sx, 0.0), float(width))
        top = min(max(d.y * sy, 0.0), float(height))
        right = min(max((d.x + d.w) * sx, 0.0), float(width))
        bottom = min(max((d.y + d.h) * sy, 0.0), float(height))
        if right - left <= 0 or bottom - top <= 0:
            continue
        out.append(
            {
                "x": left,
                "y": top,
                "w": right - left,
                "h": bottom - top,
                "score": float(d.score),
                "category_id": int(d.category_id),
            }
        )
    return out


def _warmup(detector: Detector, cfg: CaptureConfig, device: torch.device) -> None:
    if cfg.warmup_iters == 0:
        return
    dummy = torch.zeros((1, 3, cfg.high_res, cfg.high_res), device=device)
    if cfg.half:
        dummy = dummy.half()
    for i in range(cfg.warmup_iters):
        if i % 2 == 0:
            detector.infer_full(dummy)
        else:
            detector.infer_early(dummy, cfg.tap_layer)


def _capture_one(detector: Detector, image: torch.Tensor, entry: ImageEntry,
                 cfg: CaptureConfig) -> dict[str, Any]:
    passes: list[dict[str, Any]] = []
    for resolution in cfg.resolutions:
        resized = _resize(image, resolution)
        dets, latency = _timed(lambda: detector.infer_full(resized), cfg.timing_reps)
        passes.append(
            {
                "kind": "resolution",
                "resolution": resolution,
                "latency_ms": latency,
                "detections": _map_back(dets, resolution, entry.width, entry.height),
            }
        )

    high = _resize(image, cfg.high_res)
    early_dets, early_latency = _timed(
        lambda: detector.infer_early(high, cfg.tap_layer), cfg.timing_reps
    )
    flipped = torch.flip(high, dims=[-1])
    # Flip detections stay in the flipped frame; consumers undo the flip.
    flip_dets, flip_latency = _timed(
        lambda: detector.infer_early(flipped, cfg.tap_layer), cfg.timing_reps
    )
    passes.append(
        {
            "kind": "early_head",
            "tap_layer": cfg.tap_layer,
            "latency_ms": early_latency,
            "detections": _map_back(early_dets, cfg.high_res, entry.width, entry.height),
            "flip_detections": _map_back(flip_dets, cfg.high_res, entry.width, entry.height),
            "flip_latency_ms": flip_latency,
        }
    )

    full_dets, full_latency = _timed(lambda: detector.infer_full(high), cfg.timing_reps)
    passes.append(
        {
            "kind": "full",
            "latency_ms": full_latency,
            "detections": _map_back(full_dets, cfg.high_res, entry.width, entry.height),
        }
    )
    return {"image_id": entry.image_id, "passes": passes}


def capture(images_dir: str | Path, annotations_path: str | Path,
            cfg: CaptureConfig) -> CaptureResult:
    """Run every pass on every listed image and collect the traces.

    Images are processed one at a time so latency numbers do not contend
    with each other; file reads happen outside the timed regions. Unreadable
    or mis-sized images are skipped with a logged warning and show up in the
    skip list; a detector that fails to load aborts the run.
    """
    detector = load_detector(cfg)
    entries = read_image_entries(annotations_path)
    device = torch.device(cfg.device)
    _warmup(detector, cfg, device)

    root = Path(images_dir)
    traces: list[dict[str, Any]] = []
    skipped: list[SkippedImage] = []
    for entry in entries:
        path = root / entry.file_name
        try:
            image = _load_image(path, device)
        except (OSError, ValueError) as exc:
            logger.warning("skipping %s: %s", entry.file_name, exc)
            skipped.append(SkippedImage(entry.file_name, str(exc)))
            continue
        height, width = image.shape[-2:]
        if (width, height) != (entry.width, entry.height):
            reason = (
                f"file is {width}x{height} but annotations say "
                f"{entry.width}x{entry.height}"
            )
            logger.warning("skipping %s: %s", entry.file_name, reason)
            skipped.append(SkippedImage(entry.file_name, reason))
            continue
        if cfg.half:
            image = image.half()
        traces.append(_capture_one(detector, image, entry, cfg))

    header = {
        "format_version": TRACE_FORMAT_VERSION,
        "resolutions": list(cfg.resolutions),
        "capture_meta": {
            "generator": "tracecap",
            "checkpoint": cfg.checkpoint,
            "device": cfg.device,
            "half": cfg.half,
            "seed": cfg.seed,
            "tap_layer": cfg.tap_layer,
            "warmup_iters": cfg.warmup_iters,
            "timing_reps": cfg.timing_reps,
            "non_deterministic_fields": list(NON_DETERMINISTIC_FIELDS),
            "skipped": [s.file_name for s in skipped],
        },
    }
    return CaptureResult(header=header, traces=tuple(traces), skipped=tuple(skipped))
