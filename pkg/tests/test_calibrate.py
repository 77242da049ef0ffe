"""Seeding, subset sampling, grid sweeps, and the two tuners."""

import random

import pytest

from gatebench import (
    CalibrationPlan,
    GateThreshold,
    ImageRecord,
    NmsConfig,
    RouteMode,
    SweepPoint,
    SyntheticConfig,
    default_grid,
    generate_synthetic,
    sample_subsets,
    seed_threshold,
    sweep,
    tune_adaptive,
    tune_early_exit,
)


def test_default_grid_shape() -> None:
    grid = default_grid()
    assert len(grid) == 101
    assert grid[0] == 0.0
    assert grid[-1] == 1.0
    assert grid[37] == 37 / 100
    assert default_grid(0.5) == (0.0, 0.5, 1.0)


def test_default_grid_rejects_bad_steps() -> None:
    with pytest.raises(ValueError):
        default_grid(0.0)
    with pytest.raises(ValueError):
        default_grid(0.03)
    with pytest.raises(ValueError):
        default_grid(1.5)


def test_plan_validation() -> None:
    plan = CalibrationPlan()
    assert plan.calibration_size == 400
    assert plan.tuning_size == 200
    assert plan.target_cheap_rate == 0.5
    assert plan.rng_seed == 123
    with pytest.raises(ValueError):
        CalibrationPlan(calibration_size=0)
    with pytest.raises(ValueError):
        CalibrationPlan(target_cheap_rate=1.0)
    with pytest.raises(ValueError):
        CalibrationPlan(grid=())
    with pytest.raises(ValueError):
        CalibrationPlan(grid=(0.5, 0.2))
    with pytest.raises(ValueError):
        CalibrationPlan(grid=(0.0, 1.5))


def test_seed_threshold_worked_example() -> None:
    confidences = [k / 10 for k in range(1, 11)]  # 0.1 .. 1.0
    chosen = seed_threshold(confidences, target_cheap_rate=0.5)
    # c >= 0.6 accepts exactly five of ten samples.
    assert chosen.value == pytest.approx(0.6)


def test_seed_threshold_equal_samples_and_extremes() -> None:
    assert seed_threshold([0.7] * 5, 0.9).value == pytest.approx(0.7)
    confidences = [k / 10 for k in range(1, 11)]
    assert seed_threshold(confidences, 0.05).value == pytest.approx(1.0)
    assert seed_threshold(confidences, 0.99).value == pytest.approx(0.1)
    assert seed_threshold(confidences, 1.0).value == pytest.approx(0.1)


def test_seed_threshold_rate_lands_within_sample_resolution() -> None:
    rng = random.Random(61)
    confidences = [rng.random() for _ in range(50)]
    for target in (0.1, 0.25, 0.5, 0.9):
        t = seed_threshold(confidences, target).value
        achieved = sum(1 for c in confidences if c >= t) / len(confidences)
        assert achieved >= target
        assert achieved - target < 1 / len(confidences) + 1e-12


def test_seed_threshold_rejects_bad_input() -> None:
    with pytest.raises(ValueError):
        seed_threshold([], 0.5)
    with pytest.raises(ValueError):
        seed_threshold([0.5], 0.0)
    with pytest.raises(ValueError):
        seed_threshold([0.5], 1.1)


def _dataset(n: int) -> list[ImageRecord]:
    return [ImageRecord(image_id=i, width=640, height=480) for i in range(1, n + 1)]


def test_sample_subsets_disjoint_and_deterministic() -> None:
    plan = CalibrationPlan(calibration_size=30, tuning_size=20)
    dataset = _dataset(100)
    cal, tune = sample_subsets(dataset, plan)
    assert len(cal) == 30
    assert len(tune) == 20
    assert not set(cal) & set(tune)
    assert set(cal) | set(tune) <= {r.image_id for r in dataset}
    again_cal, again_tune = sample_subsets(dataset, plan)
    assert (cal, tune) == (again_cal, again_tune)


def test_sample_subsets_insensitive_to_dataset_order() -> None:
    plan = CalibrationPlan(calibration_size=10, tuning_size=10)
    dataset = _dataset(50)
    shuffled = random.Random(3).sample(dataset, len(dataset))
    assert sample_subsets(dataset, plan) == sample_subsets(shuffled, plan)


def test_sample_subsets_seed_changes_split() -> None:
    dataset = _dataset(100)
    a, _ = sample_subsets(dataset, CalibrationPlan(calibration_size=30, tuning_size=20))
    b, _ = sample_subsets(
        dataset, CalibrationPlan(calibration_size=30, tuning_size=20, rng_seed=7)
    )
    assert a != b


def test_sample_subsets_errors() -> None:
    plan = CalibrationPlan(calibration_size=30, tuning_size=20)
    with pytest.raises(ValueError, match="needs 50"):
        sample_subsets(_dataset(40), plan)
    duplicated = _dataset(60) + [ImageRecord(image_id=1, width=10, height=10)]
    with pytest.raises(ValueError, match="duplicate"):
        sample_subsets(duplicated, plan)


@pytest.fixture(scope="module")
def small_synth():
    cfg = SyntheticConfig(num_images=80, seed=5)
    return generate_synthetic(cfg)


def test_sweep_covers_grid_and_endpoints(small_synth) -> None:
    records, trace_file = small_synth
    grid = (0.0, 0.3, 0.6, 1.0)
    points = sweep(trace_file.traces, records, RouteMode.ADAPTIVE, grid, NmsConfig())
    assert [p.threshold for p in points] == list(grid)
    # Threshold zero accepts every image on the cheap path.
    assert points[0].cheap_path_rate == pytest.approx(1.0)
    assert points[0].its >= points[-1].its
    for p in points:
        assert 0.0 <= p.map_50_95 <= 1.0
        assert p.its > 0


def test_sweep_early_exit_uses_dataset_widths(small_synth) -> None:
    records, trace_file = small_synth
    points = sweep(trace_file.traces, records, RouteMode.EARLY_EXIT, (0.0, 0.5), NmsConfig())
    assert len(points) == 2
    assert points[0].cheap_path_rate == pytest.approx(1.0)


def test_sweep_rejects_empty_grid(small_synth) -> None:
    records, trace_file = small_synth
    with pytest.raises(ValueError, match="empty grid"):
        sweep(trace_file.traces, records, RouteMode.ADAPTIVE, (), NmsConfig())


def _points(rows) -> list[SweepPoint]:
    return [SweepPoint(*row) for row in rows]


def test_tune_early_exit_picks_best_map_over_rate_floor() -> None:
    points = _points([
        (0.0, 1.00, 0.30, 100.0),
        (0.5, 0.50, 0.40, 60.0),
        (0.8, 0.05, 0.45, 40.0),
    ])
    result = tune_early_exit(points, min_exit_rate=0.10)
    assert result.threshold == GateThreshold(0.5)
    assert result.objective_value == pytest.approx(0.40)
    assert result.constraint_satisfied is True
    assert result.sweep == tuple(points)


def test_tune_early_exit_tie_breaks() -> None:
    higher_rate_wins = _points([(0.2, 0.8, 0.4, 80.0), (0.4, 0.6, 0.4, 70.0)])
    assert tune_early_exit(higher_rate_wins).threshold == GateThreshold(0.2)
    lower_threshold_wins = _points([(0.2, 0.6, 0.4, 80.0), (0.4, 0.6, 0.4, 70.0)])
    assert tune_early_exit(lower_threshold_wins).threshold == GateThreshold(0.2)


def test_tune_early_exit_fallback_when_floor_unreachable() -> None:
    points = _points([(0.0, 0.05, 0.30, 100.0), (0.5, 0.02, 0.45, 60.0)])
    result = tune_early_exit(points, min_exit_rate=0.5)
    assert result.constraint_satisfied is False
    assert result.threshold == GateThreshold(0.5)  # unconstrained accuracy argmax


def test_tune_early_exit_rejects_empty() -> None:
    with pytest.raises(ValueError):
        tune_early_exit([])


def test_tune_adaptive_maximises_throughput_within_budget() -> None:
    points = _points([
        (0.0, 1.0, 0.40, 100.0),
        (0.3, 0.7, 0.48, 80.0),
        (0.6, 0.4, 0.49, 60.0),
        (1.0, 0.0, 0.50, 40.0),
    ])
    result = tune_adaptive(points, baseline_map=0.50, max_rel_map_loss=0.06)
    # Budget admits map >= 0.47; the fastest such point sits at 0.3.
    assert result.threshold == GateThreshold(0.3)
    assert result.objective_value == pytest.approx(80.0)
    assert result.constraint_satisfied is True


def test_tune_adaptive_tie_breaks() -> None:
    higher_map_wins = _points([(0.2, 0.8, 0.48, 70.0), (0.5, 0.6, 0.49, 70.0)])
    assert tune_adaptive(higher_map_wins, 0.50).threshold == GateThreshold(0.5)
    lower_threshold_wins = _points([(0.2, 0.8, 0.49, 70.0), (0.5, 0.6, 0.49, 70.0)])
    assert tune_adaptive(lower_threshold_wins, 0.50).threshold == GateThreshold(0.2)


def test_tune_adaptive_fallback_minimises_loss() -> None:
    points = _points([(0.0, 1.0, 0.20, 100.0), (0.5, 0.5, 0.30, 60.0)])
    result = tune_adaptive(points, baseline_map=0.50, max_rel_map_loss=0.06)
    assert result.constraint_satisfied is False
    assert result.threshold == GateThreshold(0.5)  # closest to the baseline


def test_tune_adaptive_rejects_bad_input() -> None:
    with pytest.raises(ValueError):
        tune_adaptive([], 0.5)
    points = _points([(0.0, 1.0, 0.4, 100.0)])
    with pytest.raises(ValueError):
        tune_adaptive(points, baseline_map=0.0)
    with pytest.raises(ValueError):
        tune_adaptive(points, baseline_map=0.5, max_rel_map_loss=-0.1)


def test_calibration_subset_feeds_only_the_seed(small_synth) -> None:
    # The grid search result depends on the tuning subset alone: sweeping
    # the same tuning traces must give identical points no matter what the
    # calibration half looked like.
    records, trace_file = small_synth
    plan = CalibrationPlan(calibration_size=30, tuning_size=20)
    _, tune_ids = sample_subsets(records, plan)
    by_id = {t.image_id: t for t in trace_file.traces}
    rec_by_id = {r.image_id: r for r in records}
    tune_traces = [by_id[i] for i in tune_ids]
    tune_records = [rec_by_id[i] for i in tune_ids]
    grid = (0.0, 0.5, 1.0)
    first = sweep(tune_traces, tune_records, RouteMode.ADAPTIVE, grid, NmsConfig())
    second = sweep(tune_traces, tune_records, RouteMode.ADAPTIVE, grid, NmsConfig())
    assert first == second
