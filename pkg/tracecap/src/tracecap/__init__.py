"""Trace capture for confidence-gated detection benchmarks.

Runs a detector checkpoint over a COCO-style image list and records, per
image, a trace with every gate pass: each configured resolution, an early
head with horizontal-flip TTA at a tap layer, and the full model, all with
measured latencies. The emitted JSONL conforms to the gatebench trace
schema, so the files drop straight into its validate/calibrate/bench CLI.
"""

from .capture import (
    NON_DETERMINISTIC_FIELDS,
    TRACE_FORMAT_VERSION,
    CaptureResult,
    ImageEntry,
    SkippedImage,
    capture,
    read_image_entries,
)
from .config import CaptureConfig
from .detector import (
    CaptureError,
    Detector,
    RawDetection,
    ToyDetector,
    UltralyticsDetector,
    load_detector,
)

__version__ = "0.1.0"

__all__ = [
    "CaptureConfig",
    "CaptureError",
    "CaptureResult",
    "Detector",
    "ImageEntry",
    "NON_DETERMINISTIC_FIELDS",
    "RawDetection",
    "SkippedImage",
    "TRACE_FORMAT_VERSION",
    "ToyDetector",
    "UltralyticsDetector",
    "capture",
    "load_detector",
    "read_image_entries",
    "__version__",
]
