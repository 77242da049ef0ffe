"""Capture configuration."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class CaptureConfig:
    """Knobs for one capture run.

    `checkpoint` is either the built-in "toy" reference detector or a path
    to a detector weights file handled by an optional adapter. Latencies are
    medians of `timing_reps` timed repetitions, taken after `warmup_iters`
    untimed forward passes.
    """

    checkpoint: str = "toy"
    device: str = "cpu"
    half: bool = False
    resolutions: tuple[int, ...] = (160, 640)
    tap_layer: int = 16
    warmup_iters: int = 20
    timing_reps: int = 3
    seed: int = 123

    def __post_init__(self) -> None:
        if not self.checkpoint:
            raise ValueError("checkpoint must not be empty")
        if not self.resolutions:
            raise ValueError("resolutions must not be empty")
        previous = 0
        for r in self.resolutions:
            if not isinstance(r, int) or r <= previous:
                raise ValueError(
                    f"resolutions must be ascending unique positive ints, got {self.resolutions!r}"
                )
            previous = r
        if self.tap_layer < 0:
            raise ValueError(f"tap_layer must be non-negative, got {self.tap_layer!r}")
        if self.warmup_iters < 0:
            raise ValueError(f"warmup_iters must be non-negative, got {self.warmup_iters!r}")
        if self.timing_reps < 1:
            raise ValueError(f"timing_reps must be at least 1, got {self.timing_reps!r}")

    @property
    def high_res(self) -> int:
        return self.resolutions[-1]
