"""CaptureConfig invariants."""

import pytest

from tracecap import CaptureConfig


def test_defaults() -> None:
    cfg = CaptureConfig()
    assert cfg.checkpoint == "toy"
    assert cfg.device == "cpu"
    assert cfg.half is False
    assert cfg.resolutions == (160, 640)
    assert cfg.tap_layer == 16
    assert cfg.warmup_iters == 20
    assert cfg.timing_reps == 3
    assert cfg.seed == 123
    assert cfg.high_res == 640


def test_rejects_empty_fields() -> None:
    with pytest.raises(ValueError):
        CaptureConfig(checkpoint="")
    with pytest.raises(ValueError):
        CaptureConfig(resolutions=())


def test_rejects_bad_resolutions() -> None:
    with pytest.raises(ValueError):
        CaptureConfig(resolutions=(640, 160))  # not ascending
    with pytest.raises(ValueError):
        CaptureConfig(resolutions=(160, 160))
    with pytest.raises(ValueError):
        CaptureConfig(resolutions=(0, 160))


def test_rejects_bad_counts() -> None:
    with pytest.raises(ValueError):
        CaptureConfig(tap_layer=-1)
    with pytest.raises(ValueError):
        CaptureConfig(warmup_iters=-1)
    with pytest.raises(ValueError):
        CaptureConfig(timing_reps=0)


def test_single_resolution_is_allowed() -> None:
    cfg = CaptureConfig(resolutions=(320,))
    assert cfg.high_res == 320
