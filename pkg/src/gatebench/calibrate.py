"""Two-stage threshold calibration: quantile seed, then grid refinement.

Stage one picks a starting threshold from observed gate confidences alone,
hitting a target cheap-path rate as closely as the sample allows. Stage two
sweeps a threshold grid on a disjoint tuning subset, scoring accuracy and
throughput at every point, and picks the best point under the mode's
objective. The calibration subset feeds only the seed; the grid search
never sees it.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bench import throughput
from .cocoeval import EvalConfig, evaluate
from .geometry import NmsConfig
from .model import GateThreshold, ImageRecord, ImageTrace
from .router import RouteMode, route_all


def default_grid(step: float = 0.01) -> tuple[float, ...]:
    """Inclusive 0..1 grid; values are exact fractions of the step count."""
    if not 0.0 < step <= 1.0:
        raise ValueError(f"step must lie in (0, 1], got {step!r}")
    count = round(1.0 / step)
    if count < 1 or abs(count * step - 1.0) > 1e-9:
        raise ValueError(f"step must divide 1.0 evenly, got {step!r}")
    return tuple(k / count for k in range(count + 1))


@dataclass(frozen=True)
class CalibrationPlan:
    """Subset sizes, target rate, grid, and the sampling seed."""

    calibration_size: int = 400
    tuning_size: int = 200
    target_cheap_rate: float = 0.5
    grid: tuple[float, ...] = field(default_factory=default_grid)
    rng_seed: int = 123

    def __post_init__(self) -> None:
        if self.calibration_size < 1 or self.tuning_size < 1:
            raise ValueError("subset sizes must be at least 1")
        if not 0.0 < self.target_cheap_rate < 1.0:
            raise ValueError(
                f"target_cheap_rate must lie in (0, 1), got {self.target_cheap_rate!r}"
            )
        if not self.grid:
            raise ValueError("grid must not be empty")
        previous = -1.0
        for t in self.grid:
            if not 0.0 <= t <= 1.0 or t <= previous:
                raise ValueError("grid must be strictly increasing within [0, 1]")
            previous = t


@dataclass(frozen=True)
class SweepPoint:
    """One grid point's routing rate, accuracy, and throughput."""

    threshold: float
    cheap_path_rate: float
    map_50_95: float
    its: float


@dataclass(frozen=True)
class TuningResult:
    """Chosen threshold plus the full sweep it was chosen from.

    constraint_satisfied is False when no grid point met the mode's
    constraint and the fallback rule picked the least-bad point instead.
    """

    threshold: GateThreshold
    objective_value: float
    constraint_satisfied: bool
    sweep: tuple[SweepPoint, ...]


def sample_subsets(
    dataset: Sequence[ImageRecord], plan: CalibrationPlan
) -> tuple[list[int], list[int]]:
    """Draw disjoint calibration and tuning image ids, deterministically.

    Ids are canonicalised by sorting before the draw, so the same dataset
    and seed give the same split regardless of input order.
    """
    ids = sorted(r.image_id for r in dataset)
    if len(set(ids)) != len(ids):
        raise ValueError("dataset contains duplicate image ids")
    need = plan.calibration_size + plan.tuning_size
    if len(ids) < need:
        raise ValueError(f"dataset has {len(ids)} images, calibration needs {need}")
    rng = np.random.RandomState(plan.rng_seed)
    picks = rng.choice(len(ids), size=need, replace=False)
    chosen = [ids[int(i)] for i in picks]
    return chosen[: plan.calibration_size], chosen[plan.calibration_size :]


def seed_threshold(confidences: Sequence[float], target_cheap_rate: float) -> GateThreshold:
    """Largest observed confidence whose acceptance rate meets the target.

    Acceptance uses the same `c >= t` rule the router applies, so the
    returned value is the empirical (1 - target) quantile under that rule.
    With n distinct samples the achieved rate lands within 1/n of the
    target.
    """
    if not confidences:
        raise ValueError("no confidences: cannot seed a threshold")
    if not 0.0 < target_cheap_rate <= 1.0:
        raise ValueError(f"target_cheap_rate must lie in (0, 1], got {target_cheap_rate!r}")
    ordered = sorted(confidences)
    n = len(ordered)
    for value in sorted(set(ordered), reverse=True):
        accepted = n - bisect_left(ordered, value)
        if accepted / n >= target_cheap_rate:
            return GateThreshold(value)
    # Unreachable: the smallest value accepts everything.
    raise AssertionError("quantile scan fell through")


def sweep(
    traces: Sequence[ImageTrace],
    dataset: Sequence[ImageRecord],
    mode: RouteMode,
    grid: Sequence[float],
    nms_cfg: NmsConfig,
    eval_cfg: EvalConfig | None = None,
    low_res: int = 160,
    high_res: int = 640,
    head_overhead_ms: float = 0.0,
) -> list[SweepPoint]:
    """Route and score the trace set at every grid threshold."""
    if not grid:
        raise ValueError("empty grid: nothing to sweep")
    widths = {r.image_id: r.width for r in dataset}
    points: list[SweepPoint] = []
    for t in grid:
        outcomes, stats = route_all(
            traces,
            mode,
            GateThreshold(t),
            nms_cfg,
            widths=widths,
            low_res=low_res,
            high_res=high_res,
            head_overhead_ms=head_overhead_ms,
        )
        predictions = {o.image_id: o.final_detections for o in outcomes}
        result = evaluate(predictions, dataset, eval_cfg)
        points.append(
            SweepPoint(
                threshold=t,
                cheap_path_rate=stats.cheap_path_rate,
                map_50_95=result.map_50_95,
                its=throughput(outcomes).its,
            )
        )
    return points


def tune_early_exit(points: Sequence[SweepPoint], min_exit_rate: float = 0.10) -> TuningResult:
    """Best accuracy subject to a floor on how often the exit actually fires.

    Ties prefer the higher exit rate, then the lower threshold. If no point
    reaches the floor, the unconstrained accuracy argmax is returned and
    flagged.
    """
    if not points:
        raise ValueError("empty sweep: nothing to tune")
    feasible = [p for p in points if p.cheap_path_rate >= min_exit_rate]
    pool = feasible if feasible else list(points)
    best = max(pool, key=lambda p: (p.map_50_95, p.cheap_path_rate, -p.threshold))
    return TuningResult(
        threshold=GateThreshold(best.threshold),
        objective_value=best.map_50_95,
        constraint_satisfied=bool(feasible),
        sweep=tuple(points),
    )


def tune_adaptive(
    points: Sequence[SweepPoint],
    baseline_map: float,
    max_rel_map_loss: float = 0.06,
) -> TuningResult:
    """Best throughput subject to a relative accuracy budget.

    A point is feasible when (baseline_map - map) / baseline_map stays
    within the budget; ties prefer the higher accuracy, then the lower
    threshold. If nothing is feasible, the minimum-loss point is returned
    and flagged.
    """
    if not points:
        raise ValueError("empty sweep: nothing to tune")
    if baseline_map <= 0:
        raise ValueError(f"baseline_map must be positive, got {baseline_map!r}")
    if max_rel_map_loss < 0:
        raise ValueError(f"max_rel_map_loss must be non-negative, got {max_rel_map_loss!r}")
    feasible = [
        p
        for p in points
        if (baseline_map - p.map_50_95) / baseline_map <= max_rel_map_loss
    ]
    if feasible:
        best = max(feasible, key=lambda p: (p.its, p.map_50_95, -p.threshold))
        satisfied = True
    else:
        best = max(points, key=lambda p: (p.map_50_95, p.its, -p.threshold))
        satisfied = False
    return TuningResult(
        threshold=GateThreshold(best.threshold),
        objective_value=best.its,
        constraint_satisfied=satisfied,
        sweep=tuple(points),
    )
