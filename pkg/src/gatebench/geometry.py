"""Box geometry: IoU, class-aware greedy NMS, horizontal flip, flip-TTA merge."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from .model import BBox, Detection


@dataclass(frozen=True)
class NmsConfig:
    """Score floor plus the overlap threshold for greedy suppression."""

    iou_threshold: float = 0.70
    score_threshold: float = 0.001

    def __post_init__(self) -> None:
        if not 0.0 <= self.iou_threshold <= 1.0:
            raise ValueError(f"iou_threshold must lie in [0, 1], got {self.iou_threshold!r}")
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ValueError(f"score_threshold must lie in [0, 1], got {self.score_threshold!r}")


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0.0 for disjoint or degenerate unions."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    if ix <= 0:
        return 0.0
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area() + b.area() - inter
    if union <= 0:
        return 0.0
    return inter / union


def nms(detections: Sequence[Detection], cfg: NmsConfig) -> list[Detection]:
    """Filter by score, then greedily suppress same-class overlaps.

    Candidates are ranked by score descending with input order breaking
    ties (the sort is stable), so the survivor set is deterministic. A pair
    is suppressed only when its IoU strictly exceeds cfg.iou_threshold, and
    only within one class.
    """
    ranked = sorted(
        (d for d in detections if d.score >= cfg.score_threshold),
        key=lambda d: d.score,
        reverse=True,
    )
    kept: list[Detection] = []
    for cand in ranked:
        for survivor in kept:
            if (
                survivor.category_id == cand.category_id
                and iou(survivor.box, cand.box) > cfg.iou_threshold
            ):
                break
        else:
            kept.append(cand)
    return kept


def hflip_box(box: BBox, image_width: float) -> BBox:
    """Mirror a box across the vertical centerline of an image_width-wide image."""
    return BBox(x=image_width - box.x - box.w, y=box.y, w=box.w, h=box.h)


def tta_merge(
    base: Sequence[Detection],
    flipped: Sequence[Detection],
    image_width: float,
    cfg: NmsConfig,
) -> list[Detection]:
    """Merge a straight pass with its horizontally flipped companion.

    Flipped detections arrive in flipped-image coordinates; they are mapped
    back first, then the pooled set goes through one NMS round. Base
    detections precede unflipped ones in the pool, so score ties resolve in
    favour of the straight pass.
    """
    unflipped = [replace(d, box=hflip_box(d.box, image_width)) for d in flipped]
    return nms(list(base) + unflipped, cfg)
