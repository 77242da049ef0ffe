"""Deterministic synthetic scenes and detector traces.

The generator draws scenes and then simulates one detector per quality
tier. Tiers are keyed by input resolution: the low tier misses more boxes,
places them less precisely, and hallucinates more, which is exactly the
structure the routing gate exploits. Harder images (one scalar difficulty
per image) drag detection probability and scores down at every tier, so a
weak low-resolution result predicts a below-average image, not just bad
luck.

Everything is a pure function of the config: one RandomState seeded from
cfg.seed drives all draws in a fixed order, so equal configs give equal
traces byte for byte.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .backends import TraceFile
from .geometry import hflip_box
from .model import (
    DEFAULT_TAP_LAYER,
    BBox,
    Detection,
    GroundTruthBox,
    ImageRecord,
    ImageTrace,
    PassKind,
    PassRecord,
)

_ANCHORS = {
    # resolution: (detect_prob, loc_noise_px, false_pos_rate, latency_ms)
    160: (0.65, 6.0, 0.5, 5.0),
    640: (0.95, 1.5, 0.2, 20.0),
}


def _tier_defaults(resolution: int) -> tuple[float, float, float, float]:
    """Anchor values at 160 and 640; log-interpolated elsewhere."""
    if resolution in _ANCHORS:
        return _ANCHORS[resolution]
    low, high = _ANCHORS[160], _ANCHORS[640]
    frac = math.log(resolution / 160.0) / math.log(640.0 / 160.0)
    detect = min(max(low[0] + (high[0] - low[0]) * frac, 0.05), 0.99)
    noise = max(low[1] + (high[1] - low[1]) * frac, 0.0)
    false_pos = max(low[2] + (high[2] - low[2]) * frac, 0.0)
    latency = low[3] * (resolution / 160.0)
    return detect, noise, false_pos, latency


def _default_map(index: int) -> Mapping[int, float]:
    return {r: _ANCHORS[r][index] for r in _ANCHORS}


@dataclass(frozen=True)
class SyntheticConfig:
    """Scene counts plus per-resolution detector quality tiers."""

    num_images: int = 500
    seed: int = 123
    classes: int = 3
    boxes_per_image: tuple[int, int] = (1, 8)
    detect_prob: Mapping[int, float] = field(default_factory=lambda: _default_map(0))
    loc_noise_px: Mapping[int, float] = field(default_factory=lambda: _default_map(1))
    false_pos_rate: Mapping[int, float] = field(default_factory=lambda: _default_map(2))
    latency_ms: Mapping[int, float] = field(default_factory=lambda: _default_map(3))

    def __post_init__(self) -> None:
        if self.num_images < 1:
            raise ValueError(f"num_images must be at least 1, got {self.num_images}")
        if self.classes < 1:
            raise ValueError(f"classes must be at least 1, got {self.classes}")
        lo, hi = self.boxes_per_image
        if lo < 0 or hi < lo:
            raise ValueError(f"boxes_per_image must be 0 <= lo <= hi, got {self.boxes_per_image}")
        keysets = {
            tuple(sorted(m)): name
            for name, m in [
                ("detect_prob", self.detect_prob),
                ("loc_noise_px", self.loc_noise_px),
                ("false_pos_rate", self.false_pos_rate),
                ("latency_ms", self.latency_ms),
            ]
        }
        if len(keysets) != 1:
            raise ValueError("all tier maps must share one resolution key set")
        if len(self.resolutions) < 2:
            raise ValueError("need at least two resolution tiers")
        for r, p in self.detect_prob.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"detect_prob[{r}] must lie in [0, 1], got {p!r}")
        for name, m in [("loc_noise_px", self.loc_noise_px),
                        ("false_pos_rate", self.false_pos_rate),
                        ("latency_ms", self.latency_ms)]:
            for r, v in m.items():
                if v < 0:
                    raise ValueError(f"{name}[{r}] must be non-negative, got {v!r}")

    @property
    def resolutions(self) -> tuple[int, ...]:
        return tuple(sorted(self.detect_prob))

    @classmethod
    def for_resolutions(cls, resolutions: Sequence[int], **kwargs) -> "SyntheticConfig":
        """Config with default tier quality at arbitrary resolutions."""
        tiers = {int(r): _tier_defaults(int(r)) for r in resolutions}
        return cls(
            detect_prob={r: t[0] for r, t in tiers.items()},
            loc_noise_px={r: t[1] for r, t in tiers.items()},
            false_pos_rate={r: t[2] for r, t in tiers.items()},
            latency_ms={r: t[3] for r, t in tiers.items()},
            **kwargs,
        )


def _draw_tier_detections(
    rng: np.random.RandomState,
    gts: Sequence[GroundTruthBox],
    width: int,
    height: int,
    difficulty: float,
    detect_prob: float,
    loc_noise: float,
    false_pos_rate: float,
    classes: int,
) -> tuple[Detection, ...]:
    """Simulate one tier's detections for one image."""
    detections: list[Detection] = []
    for gt in gts:
        # Hard images lose proportionally more of the tier's headroom.
        p_eff = detect_prob * (1.0 - (1.0 - detect_prob) * difficulty)
        if rng.uniform() >= p_eff:
            continue
        dx = float(rng.normal(0.0, loc_noise))
        dy = float(rng.normal(0.0, loc_noise))
        x = min(max(gt.box.x + dx, 0.0), width - gt.box.w)
        y = min(max(gt.box.y + dy, 0.0), height - gt.box.h)
        score = p_eff - 0.02 * math.hypot(dx, dy) + float(rng.normal(0.0, 0.05))
        score = min(max(score, 0.01), 0.99)
        detections.append(
            Detection(
                box=BBox(x=x, y=y, w=gt.box.w, h=gt.box.h),
                score=score,
                category_id=gt.category_id,
            )
        )
    for _ in range(int(rng.poisson(false_pos_rate))):
        w = max(3.0, float(rng.uniform(0.03, 0.25)) * width)
        h = max(3.0, float(rng.uniform(0.03, 0.25)) * height)
        x = float(rng.uniform(0.0, width - w))
        y = float(rng.uniform(0.0, height - h))
        detections.append(
            Detection(
                box=BBox(x=x, y=y, w=w, h=h),
                score=float(rng.uniform(0.02, 0.40)),
                category_id=int(rng.randint(0, classes)),
            )
        )
    return tuple(detections)


def _jittered(rng: np.random.RandomState, base_ms: float) -> float:
    """Latency with +-10% deterministic jitter."""
    return base_ms * (0.9 + 0.2 * float(rng.uniform()))


def generate_synthetic(cfg: SyntheticConfig) -> tuple[list[ImageRecord], TraceFile]:
    """Generate scenes plus a trace file covering every routing mode.

    Each trace carries one pass per resolution tier, an early-head pass at
    low-tier quality with a flip-TTA companion, and a full pass at
    high-tier quality. The draw order below is fixed; changing it changes
    every downstream byte.
    """
    rng = np.random.RandomState(cfg.seed)
    resolutions = cfg.resolutions
    low, high = resolutions[0], resolutions[-1]
    records: list[ImageRecord] = []
    traces: list[ImageTrace] = []
    lo_boxes, hi_boxes = cfg.boxes_per_image
    for image_id in range(1, cfg.num_images + 1):
        width = int(rng.randint(320, 641))
        height = int(rng.randint(240, 481))
        difficulty = float(rng.uniform())
        n_boxes = int(rng.randint(lo_boxes, hi_boxes + 1))
        gts = []
        for _ in range(n_boxes):
            w = max(4.0, float(rng.uniform(0.06, 0.6)) * width)
            h = max(4.0, float(rng.uniform(0.06, 0.6)) * height)
            gts.append(
                GroundTruthBox(
                    box=BBox(
                        x=float(rng.uniform(0.0, width - w)),
                        y=float(rng.uniform(0.0, height - h)),
                        w=w,
                        h=h,
                    ),
                    category_id=int(rng.randint(0, cfg.classes)),
                )
            )
        gts_tuple = tuple(gts)
        records.append(
            ImageRecord(image_id=image_id, width=width, height=height, ground_truth=gts_tuple)
        )

        passes: list[PassRecord] = []
        for r in resolutions:
            detections = _draw_tier_detections(
                rng, gts_tuple, width, height, difficulty,
                cfg.detect_prob[r], cfg.loc_noise_px[r], cfg.false_pos_rate[r], cfg.classes,
            )
            passes.append(
                PassRecord(
                    kind=PassKind.RESOLUTION,
                    resolution=r,
                    latency_ms=_jittered(rng, cfg.latency_ms[r]),
                    detections=detections,
                )
            )
        head_detections = _draw_tier_detections(
            rng, gts_tuple, width, height, difficulty,
            cfg.detect_prob[low], cfg.loc_noise_px[low], cfg.false_pos_rate[low], cfg.classes,
        )
        flip_raw = _draw_tier_detections(
            rng, gts_tuple, width, height, difficulty,
            cfg.detect_prob[low], cfg.loc_noise_px[low], cfg.false_pos_rate[low], cfg.classes,
        )
        # Stored in flipped-image coordinates, as a real flip pass would be.
        flip_detections = tuple(
            Detection(box=hflip_box(d.box, width), score=d.score, category_id=d.category_id)
            for d in flip_raw
        )
        passes.append(
            PassRecord(
                kind=PassKind.EARLY_HEAD,
                tap_layer=DEFAULT_TAP_LAYER,
                latency_ms=_jittered(rng, cfg.latency_ms[low]),
                detections=head_detections,
                flip_detections=flip_detections,
                flip_latency_ms=_jittered(rng, cfg.latency_ms[low]),
            )
        )
        full_detections = _draw_tier_detections(
            rng, gts_tuple, width, height, difficulty,
            cfg.detect_prob[high], cfg.loc_noise_px[high], cfg.false_pos_rate[high], cfg.classes,
        )
        passes.append(
            PassRecord(
                kind=PassKind.FULL,
                latency_ms=_jittered(rng, cfg.latency_ms[high]),
                detections=full_detections,
            )
        )
        traces.append(ImageTrace(image_id=image_id, passes=tuple(passes)))

    trace_file = TraceFile(
        resolutions=resolutions,
        capture_meta={
            "generator": "synthetic",
            "seed": cfg.seed,
            "num_images": cfg.num_images,
            "classes": cfg.classes,
        },
        traces=tuple(traces),
    )
    return records, trace_file


class Complexity(str, Enum):
    SIMPLE = "simple"
    COMPLEX = "complex"


def categorize(
    record: ImageRecord,
    simple_max_objects: int = 3,
    clutter_area_frac: float = 0.05,
) -> Complexity:
    """Split scenes into few-large-object images and cluttered ones.

    Simple means at most simple_max_objects boxes AND a median box area of
    at least clutter_area_frac of the image. Empty images count as simple.
    """
    if simple_max_objects < 0:
        raise ValueError(f"simple_max_objects must be non-negative, got {simple_max_objects}")
    if not 0.0 <= clutter_area_frac <= 1.0:
        raise ValueError(f"clutter_area_frac must lie in [0, 1], got {clutter_area_frac!r}")
    if not record.ground_truth:
        return Complexity.SIMPLE
    if len(record.ground_truth) > simple_max_objects:
        return Complexity.COMPLEX
    median_area = statistics.median(g.box.area() for g in record.ground_truth)
    if median_area / (record.width * record.height) < clutter_area_frac:
        return Complexity.COMPLEX
    return Complexity.SIMPLE


def balanced_subset(
    dataset: Sequence[ImageRecord],
    per_class: int = 1250,
    rng_seed: int = 123,
) -> list[int]:
    """Draw per_class simple and per_class complex image ids, no replacement.

    The draw is deterministic in (dataset order, seed). A dataset that
    cannot supply both halves is refused with the shortfall spelled out.
    """
    if per_class < 0:
        raise ValueError(f"per_class must be non-negative, got {per_class}")
    simple = [r.image_id for r in dataset if categorize(r) is Complexity.SIMPLE]
    complex_ = [r.image_id for r in dataset if categorize(r) is Complexity.COMPLEX]
    if len(simple) < per_class or len(complex_) < per_class:
        raise ValueError(
            f"need {per_class} of each complexity, have {len(simple)} simple"
            f" and {len(complex_)} complex"
        )
    if per_class == 0:
        return []
    rng = np.random.RandomState(rng_seed)

    def pick(ids: list[int]) -> list[int]:
        chosen = rng.choice(len(ids), size=per_class, replace=False)
        return [ids[int(i)] for i in chosen]

    return pick(simple) + pick(complex_)
