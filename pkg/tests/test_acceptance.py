"""Acceptance gate: one test and one printed verdict line per core claim.

Run with `pytest tests/test_acceptance.py -s` to see the verdict lines.
"""

import filecmp
import random
import time

import numpy as np

import oracle
from gatebench import (
    BBox,
    Detection,
    GateThreshold,
    GroundTruthBox,
    ImageRecord,
    ImageTrace,
    ModeSummary,
    NmsConfig,
    PassKind,
    PassRecord,
    RouteMode,
    SyntheticConfig,
    Verdict,
    bottleneck_test,
    compare,
    default_grid,
    evaluate,
    generate_synthetic,
    route_all,
    seed_threshold,
    sweep,
    throughput,
    tune_adaptive,
)
from gatebench.calibrate import CalibrationPlan, sample_subsets
from gatebench.cli import main
from gatebench.report import format_loss_pct, format_speedup


def _verdict(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_acceptance_comparison_replay() -> None:
    started = time.monotonic()
    baseline = ModeSummary(name="baseline", its=27.49, map_50_95=0.399)
    candidate = ModeSummary(name="candidate", its=50.99, map_50_95=0.377)
    report = compare(candidate, baseline)
    elapsed = time.monotonic() - started
    ok = (
        abs(report.speedup - 1.8549) <= 0.0005
        and abs(report.map_loss_pct - (-5.514)) <= 0.005
        and format_speedup(report.speedup) == "1.85x"
        and format_loss_pct(report.map_loss_pct) == "-5.51%"
        and elapsed < 1.0
    )
    _verdict(
        "comparison replay",
        ok,
        f"speedup {report.speedup:.4f} ({format_speedup(report.speedup)}),"
        f" loss {report.map_loss_pct:.3f}% ({format_loss_pct(report.map_loss_pct)}),"
        f" {elapsed:.3f}s",
    )


def test_acceptance_resolution_scaling_probe() -> None:
    traces = [
        ImageTrace(
            image_id=i,
            passes=(
                PassRecord(kind=PassKind.RESOLUTION, resolution=64, latency_ms=1000 / 38.63),
                PassRecord(kind=PassKind.RESOLUTION, resolution=640, latency_ms=1000 / 21.43),
            ),
        )
        for i in range(1, 33)
    ]
    result = bottleneck_test(traces, res_high=640, res_low=64)
    ok = (
        result.pixel_ratio == 100.0
        and abs(result.fps_ratio - 1.8026) <= 0.0005
        and result.verdict is Verdict.SYSTEM_BOUND_LIKELY
    )
    _verdict(
        "resolution scaling probe",
        ok,
        f"pixel_ratio {result.pixel_ratio}, fps_ratio {result.fps_ratio:.4f},"
        f" verdict {result.verdict.value}",
    )


def _random_scene(rng: random.Random, image_id: int) -> dict:
    gts = []
    for _ in range(rng.randrange(0, 6)):  # at most 5 boxes per image
        gts.append(
            {
                "x": rng.uniform(0, 80),
                "y": rng.uniform(0, 80),
                "w": rng.uniform(4, 40),
                "h": rng.uniform(4, 40),
                "category_id": rng.randrange(0, 3),
                "iscrowd": rng.random() < 0.15,
            }
        )
    preds = []
    for g in gts:
        if rng.random() < 0.75:
            preds.append(
                {
                    "x": g["x"] + rng.uniform(-6, 6),
                    "y": g["y"] + rng.uniform(-6, 6),
                    "w": g["w"],
                    "h": g["h"],
                    "score": round(rng.uniform(0.1, 0.9), 1),
                    "category_id": g["category_id"] if rng.random() < 0.9 else rng.randrange(0, 3),
                }
            )
    for _ in range(rng.randrange(0, 4)):
        preds.append(
            {
                "x": rng.uniform(0, 100),
                "y": rng.uniform(0, 100),
                "w": rng.uniform(4, 30),
                "h": rng.uniform(4, 30),
                "score": round(rng.uniform(0.1, 0.9), 1),
                "category_id": rng.randrange(0, 3),
            }
        )
    return {"image_id": image_id, "gts": gts, "preds": preds}


def test_acceptance_evaluator_matches_reference() -> None:
    started = time.monotonic()
    rng = random.Random(777)
    worst = 0.0
    for _ in range(200):
        scenes = [_random_scene(rng, i + 1) for i in range(rng.randrange(1, 11))]
        dataset = [
            ImageRecord(
                image_id=s["image_id"],
                width=200,
                height=200,
                ground_truth=tuple(
                    GroundTruthBox(
                        box=BBox(g["x"], g["y"], g["w"], g["h"]),
                        category_id=g["category_id"],
                        iscrowd=g["iscrowd"],
                    )
                    for g in s["gts"]
                ),
            )
            for s in scenes
        ]
        predictions = {
            s["image_id"]: tuple(
                Detection(
                    box=BBox(p["x"], p["y"], p["w"], p["h"]),
                    score=p["score"],
                    category_id=p["category_id"],
                )
                for p in s["preds"]
            )
            for s in scenes
        }
        got = evaluate(predictions, dataset)
        want = oracle.ref_evaluate(scenes)
        worst = max(
            worst,
            abs(got.map_50_95 - want["map_50_95"]),
            abs(got.map_50 - want["map_50"]),
            *(
                abs(got.per_class_ap[c] - ap)
                for c, ap in want["per_class_ap"].items()
            ),
        )
    elapsed = time.monotonic() - started
    ok = worst <= 1e-9 and elapsed < 30.0
    _verdict(
        "evaluator equals brute-force reference",
        ok,
        f"200 scenes, max deviation {worst:.2e}, {elapsed:.1f}s",
    )


def test_acceptance_perfect_detector_identity() -> None:
    cfg = SyntheticConfig(
        num_images=60,
        detect_prob={160: 1.0, 640: 1.0},
        loc_noise_px={160: 0.0, 640: 0.0},
        false_pos_rate={160: 0.0, 640: 0.0},
    )
    records, trace_file = generate_synthetic(cfg)
    deviations = []
    for resolution in (160, 640):
        predictions = {
            t.image_id: t.find_pass(PassKind.RESOLUTION, resolution).detections
            for t in trace_file.traces
        }
        deviations.append(abs(evaluate(predictions, records).map_50_95 - 1.0))
    ok = all(d <= 1e-9 for d in deviations)
    _verdict(
        "perfect detector scores 1.0",
        ok,
        f"deviation {max(deviations):.2e} across both resolutions",
    )


def test_acceptance_escalation_monotone(default_synth) -> None:
    records, trace_file = default_synth
    rng = np.random.RandomState(2024)
    thresholds = np.sort(rng.uniform(0.0, 1.0, size=1000))
    cfg = NmsConfig()
    violations = 0
    previous = -1.0
    for t in thresholds:
        _, stats = route_all(trace_file.traces, RouteMode.ADAPTIVE, GateThreshold(float(t)), cfg)
        if stats.escalated_rate < previous:
            violations += 1
        previous = stats.escalated_rate
    ok = violations == 0
    _verdict(
        "escalation monotone in threshold",
        ok,
        f"{violations} violations over 1000 thresholds on 500 images",
    )


def test_acceptance_seed_threshold_quantile() -> None:
    rng = np.random.RandomState(321)
    confidences = rng.uniform(0.0, 1.0, size=400).tolist()
    assert len(set(confidences)) == 400
    worst = 0.0
    for target in (0.1, 0.25, 0.5, 0.9):
        t = seed_threshold(confidences, target).value
        achieved = sum(1 for c in confidences if c >= t) / 400
        worst = max(worst, abs(achieved - target))
    ok = worst < 1 / 400
    _verdict(
        "seed threshold quantile accuracy",
        ok,
        f"max |rate - target| = {worst:.5f} < {1 / 400:.5f}",
    )


def test_acceptance_throughput_identity() -> None:
    # 30 images gate out on a 10 ms pass; 70 escalate and pay 10 + 40 ms.
    cfg = NmsConfig(score_threshold=0.0)
    traces = []
    for i in range(1, 101):
        confident = i <= 30
        low = PassRecord(
            kind=PassKind.RESOLUTION,
            resolution=160,
            latency_ms=10.0,
            detections=(
                Detection(box=BBox(0, 0, 10, 10), score=0.9 if confident else 0.1, category_id=0),
            ),
        )
        high = PassRecord(kind=PassKind.RESOLUTION, resolution=640, latency_ms=40.0)
        traces.append(ImageTrace(image_id=i, passes=(low, high)))
    outcomes, stats = route_all(traces, RouteMode.ADAPTIVE, GateThreshold(0.5), cfg)
    model = throughput(outcomes)
    expected = 100 / 3.8
    ok = stats.cheap_path_rate == 0.3 and abs(model.its - expected) <= 1e-6
    _verdict(
        "charged-cost throughput identity",
        ok,
        f"its {model.its:.6f} vs analytic {expected:.6f}, cheap rate {stats.cheap_path_rate}",
    )


def test_acceptance_sweep_shape_and_tuning(default_synth) -> None:
    records, trace_file = default_synth
    plan = CalibrationPlan(calibration_size=300, tuning_size=200)
    _, tune_ids = sample_subsets(records, plan)
    traces_by_id = {t.image_id: t for t in trace_file.traces}
    records_by_id = {r.image_id: r for r in records}
    tune_traces = [traces_by_id[i] for i in tune_ids]
    tune_records = [records_by_id[i] for i in tune_ids]
    cfg = NmsConfig()

    points = sweep(tune_traces, tune_records, RouteMode.ADAPTIVE, default_grid(0.01), cfg)
    map_dips = sum(
        1
        for i in range(len(points) - 1)
        if points[i + 1].map_50_95 < points[i].map_50_95 - 0.01
    )
    its_rises = sum(
        1 for i in range(len(points) - 1) if points[i + 1].its > points[i].its + 1e-9
    )

    baseline_preds = {
        t.image_id: tuple(
            d
            for d in t.find_pass(PassKind.RESOLUTION, 640).detections
            if d.score >= cfg.score_threshold
        )
        for t in tune_traces
    }
    baseline_map = evaluate(baseline_preds, tune_records).map_50_95
    result = tune_adaptive(points, baseline_map, max_rel_map_loss=0.5)
    ok = map_dips == 0 and its_rises == 0 and result.constraint_satisfied
    _verdict(
        "sweep shape and tuning feasibility",
        ok,
        f"{map_dips} map dips > 0.01, {its_rises} it/s rises,"
        f" tuned threshold {result.threshold.value:.2f}"
        f" (constraint_satisfied={result.constraint_satisfied})",
    )


def test_acceptance_pipeline_determinism(tmp_path) -> None:
    def run(root) -> list:
        synth = root / "synth"
        cal = root / "cal"
        bench = root / "bench"
        assert main(["synth", "--out", str(synth), "--images", "600"]) == 0
        assert main([
            "calibrate",
            "--traces", str(synth / "traces.jsonl"),
            "--annotations", str(synth / "annotations.json"),
            "--out", str(cal),
            "--grid-step", "0.05",
        ]) == 0
        assert main([
            "bench",
            "--traces", str(synth / "traces.jsonl"),
            "--annotations", str(synth / "annotations.json"),
            "--out", str(bench),
            "--thresholds", str(cal / "thresholds.json"),
        ]) == 0
        files = []
        for sub in (synth, cal, bench):
            files.extend(sorted(p.relative_to(root) for p in sub.iterdir()))
        return files

    first = tmp_path / "one"
    second = tmp_path / "two"
    names_a = run(first)
    names_b = run(second)
    mismatched = []
    if names_a != names_b:
        mismatched.append("file lists differ")
    else:
        for rel in names_a:
            if not filecmp.cmp(first / rel, second / rel, shallow=False):
                mismatched.append(str(rel))
    ok = not mismatched
    _verdict(
        "pipeline byte determinism",
        ok,
        f"{len(names_a)} files compared, mismatches: {mismatched or 'none'}",
    )
