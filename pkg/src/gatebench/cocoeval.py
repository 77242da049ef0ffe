"""Detection scoring under the COCO protocol, written from the definitions.

The protocol, in one paragraph: predictions are truncated per image to the
highest-scoring max_dets, then matched per class and per IoU threshold by a
greedy pass in score order (input order breaks score ties). A prediction
takes the unmatched same-class ground-truth box of highest IoU at or above
the threshold, with earlier annotations winning IoU ties. Predictions whose
only qualifying overlap is a crowd region are ignored: they count neither
as true nor as false positives. Matches pool across the whole dataset per
class, ranked by score with (image_id, input order) breaking ties, and
average precision is the mean over an evenly spaced recall grid of the best
precision achieved at or beyond each recall level. Classes without any
non-crowd ground truth are skipped. The headline number averages AP over
classes and over all configured IoU thresholds.

This is not a shim over an existing evaluator, and it does not chase
bit-for-bit parity with one; the contract is the protocol above.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .geometry import iou
from .model import Detection, GroundTruthBox, ImageRecord


def _default_iou_thresholds() -> tuple[float, ...]:
    return tuple(round(0.5 + 0.05 * k, 2) for k in range(10))


@dataclass(frozen=True)
class EvalConfig:
    """Thresholds and grid sizes of the scoring protocol."""

    iou_thresholds: tuple[float, ...] = field(default_factory=_default_iou_thresholds)
    recall_points: int = 101
    max_dets: int = 100

    def __post_init__(self) -> None:
        if not self.iou_thresholds:
            raise ValueError("iou_thresholds must not be empty")
        for t in self.iou_thresholds:
            if not 0.0 < t <= 1.0:
                raise ValueError(f"iou thresholds must lie in (0, 1], got {t!r}")
        if list(self.iou_thresholds) != sorted(set(self.iou_thresholds)):
            raise ValueError("iou thresholds must be strictly ascending")
        if self.recall_points < 2:
            raise ValueError(f"recall_points must be at least 2, got {self.recall_points}")
        if self.max_dets < 1:
            raise ValueError(f"max_dets must be at least 1, got {self.max_dets}")


class MatchLabel(Enum):
    """Outcome of one prediction at one IoU threshold."""

    TP = "tp"
    FP = "fp"
    IGNORED = "ignored"


@dataclass(frozen=True)
class MatchCounts:
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class EvalResult:
    """Dataset-level scores; matched_counts is keyed by IoU threshold."""

    map_50_95: float
    map_50: float
    per_class_ap: Mapping[int, float]
    matched_counts: Mapping[float, MatchCounts]


def _greedy_assign(
    ious: Sequence[Sequence[float]],
    crowd: Sequence[bool],
    threshold: float,
) -> tuple[list[MatchLabel], list[bool]]:
    """Assign already-ranked predictions to ground truth at one threshold.

    ious[i][j] holds the overlap of prediction i with ground-truth j;
    ineligible pairs (class mismatch) must be pre-set below any valid
    threshold. Rows are visited in order, so callers rank them beforehand.
    """
    labels = [MatchLabel.FP] * len(ious)
    matched = [False] * len(crowd)
    for i, row in enumerate(ious):
        best_j = -1
        best_v = -1.0
        for j, v in enumerate(row):
            if crowd[j] or matched[j]:
                continue
            if v >= threshold and v > best_v:
                best_j, best_v = j, v
        if best_j >= 0:
            matched[best_j] = True
            labels[i] = MatchLabel.TP
            continue
        for j, v in enumerate(row):
            if crowd[j] and v >= threshold:
                labels[i] = MatchLabel.IGNORED
                break
    return labels, matched


def match_image(
    predictions: Sequence[Detection],
    ground_truth: Sequence[GroundTruthBox],
    iou_threshold: float,
) -> tuple[list[MatchLabel], list[bool]]:
    """Match one image's predictions against its annotations.

    Returns per-prediction labels and per-annotation matched flags, both in
    input order. Crowd annotations never appear as matched; they only
    shield otherwise-unmatched predictions from counting as false
    positives.
    """
    order = sorted(range(len(predictions)), key=lambda i: (-predictions[i].score, i))
    ious = [
        [
            iou(predictions[i].box, g.box) if predictions[i].category_id == g.category_id else -1.0
            for g in ground_truth
        ]
        for i in order
    ]
    crowd = [g.iscrowd for g in ground_truth]
    ranked_labels, matched = _greedy_assign(ious, crowd, iou_threshold)
    labels = [MatchLabel.FP] * len(predictions)
    for rank, i in enumerate(order):
        labels[i] = ranked_labels[rank]
    return labels, matched


def _interpolated_ap(
    recalls: Sequence[float], precisions: Sequence[float], recall_points: int
) -> float:
    """Mean over the recall grid of the best precision at recall >= point.

    recalls must be non-decreasing (they are, in rank order), which turns
    "best precision among points with recall >= r" into a suffix maximum.
    """
    if not recalls:
        return 0.0
    envelope = list(precisions)
    for i in range(len(envelope) - 2, -1, -1):
        if envelope[i + 1] > envelope[i]:
            envelope[i] = envelope[i + 1]
    total = 0.0
    span = recall_points - 1
    for k in range(recall_points):
        j = bisect_left(recalls, k / span)
        if j < len(envelope):
            total += envelope[j]
    return total / recall_points


def average_precision(
    labels: Sequence[MatchLabel], num_gt: int, cfg: EvalConfig | None = None
) -> float:
    """AP of one ranked label sequence; ignored entries are dropped outright."""
    cfg = cfg or EvalConfig()
    if num_gt < 0:
        raise ValueError(f"num_gt must be non-negative, got {num_gt}")
    if num_gt == 0:
        return 0.0
    recalls: list[float] = []
    precisions: list[float] = []
    tp = 0
    fp = 0
    for label in labels:
        if label is MatchLabel.IGNORED:
            continue
        if label is MatchLabel.TP:
            tp += 1
        else:
            fp += 1
        recalls.append(tp / num_gt)
        precisions.append(tp / (tp + fp))
    return _interpolated_ap(recalls, precisions, cfg.recall_points)


def _truncated(detections: Sequence[Detection], max_dets: int) -> list[tuple[int, Detection]]:
    """Top max_dets of one image by score, stable, with input indices kept."""
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    keep = sorted(order[:max_dets])
    return [(i, detections[i]) for i in keep]


def evaluate(
    predictions: Mapping[int, Sequence[Detection]],
    dataset: Sequence[ImageRecord],
    cfg: EvalConfig | None = None,
) -> EvalResult:
    """Score predictions for a whole dataset.

    predictions maps image id to that image's detections; images without an
    entry count as having none. Every key must exist in the dataset.
    """
    cfg = cfg or EvalConfig()
    records: dict[int, ImageRecord] = {}
    for rec in dataset:
        if rec.image_id in records:
            raise ValueError(f"duplicate image id {rec.image_id} in dataset")
        records[rec.image_id] = rec
    unknown = sorted(set(predictions) - set(records))
    if unknown:
        raise ValueError(f"predictions reference unknown image ids: {unknown}")

    truncated = {
        image_id: _truncated(predictions.get(image_id, ()), cfg.max_dets)
        for image_id in records
    }
    classes = sorted(
        {g.category_id for rec in records.values() for g in rec.ground_truth if not g.iscrowd}
    )

    counts = {t: [0, 0] for t in cfg.iou_thresholds}
    total_gt = 0
    per_class_ap: dict[int, float] = {}
    per_class_ap_loosest: dict[int, float] = {}
    for category in classes:
        num_gt = 0
        # Per image: ranked class predictions with pool keys, plus the IoU
        # matrix against the class ground truth, computed once and reused
        # across thresholds.
        per_image: list[tuple[list[tuple[float, int, int]], list[list[float]], list[bool]]] = []
        for image_id in sorted(records):
            rec = records[image_id]
            gts = [g for g in rec.ground_truth if g.category_id == category]
            num_gt += sum(1 for g in gts if not g.iscrowd)
            ranked = [
                (idx, det)
                for idx, det in truncated[image_id]
                if det.category_id == category
            ]
            ranked.sort(key=lambda pair: (-pair[1].score, pair[0]))
            if not ranked:
                continue
            keys = [(-det.score, image_id, idx) for idx, det in ranked]
            ious = [[iou(det.box, g.box) for g in gts] for _, det in ranked]
            crowd = [g.iscrowd for g in gts]
            per_image.append((keys, ious, crowd))
        total_gt += num_gt
        if num_gt == 0:
            continue

        ap_sum = 0.0
        for threshold in cfg.iou_thresholds:
            pooled: list[tuple[tuple[float, int, int], MatchLabel]] = []
            for keys, ious_matrix, crowd in per_image:
                labels, _ = _greedy_assign(ious_matrix, crowd, threshold)
                pooled.extend(zip(keys, labels))
            pooled.sort(key=lambda pair: pair[0])
            ranked_labels = [label for _, label in pooled]
            ap = average_precision(ranked_labels, num_gt, cfg)
            ap_sum += ap
            counts[threshold][0] += sum(1 for lab in ranked_labels if lab is MatchLabel.TP)
            counts[threshold][1] += sum(1 for lab in ranked_labels if lab is MatchLabel.FP)
            if threshold == cfg.iou_thresholds[0]:
                per_class_ap_loosest[category] = ap
        per_class_ap[category] = ap_sum / len(cfg.iou_thresholds)

    matched_counts = {
        t: MatchCounts(tp=tp, fp=fp, fn=total_gt - tp) for t, (tp, fp) in counts.items()
    }
    if not per_class_ap:
        return EvalResult(0.0, 0.0, {}, matched_counts)
    map_50_95 = sum(per_class_ap.values()) / len(per_class_ap)
    map_50 = sum(per_class_ap_loosest.values()) / len(per_class_ap_loosest)
    return EvalResult(map_50_95, map_50, per_class_ap, matched_counts)
