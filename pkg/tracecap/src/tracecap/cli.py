"""Command line front end: capture traces into an output directory.

The output directory gets traces.jsonl plus a manifest.json recording the
command, configuration, input digest, output digest, and any skipped images.
Exit codes: 0 success, 1 capture/data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .capture import CaptureError, capture
from .config import CaptureConfig


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tracecap",
        description="Capture gate-pass detection traces from a black-box detector",
    )
    parser.add_argument("--images", required=True, help="directory holding the image files")
    parser.add_argument("--annotations", required=True, help="COCO-style annotations json")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--checkpoint", default="toy",
                        help="'toy' for the built-in reference net, or a weights path")
    parser.add_argument("--device", default="cpu", help="torch device selector")
    parser.add_argument("--half", action="store_true", help="run in half precision (CUDA only)")
    parser.add_argument("--resolutions", type=int, nargs="+", default=[160, 640],
                        help="resolution passes to capture, ascending")
    parser.add_argument("--tap-layer", type=int, default=16)
    parser.add_argument("--warmup-iters", type=int, default=20)
    parser.add_argument("--timing-reps", type=int, default=3)
    parser.add_argument("--seed", type=int, default=123)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = CaptureConfig(
            checkpoint=args.checkpoint,
            device=args.device,
            half=args.half,
            resolutions=tuple(args.resolutions),
            tap_layer=args.tap_layer,
            warmup_iters=args.warmup_iters,
            timing_reps=args.timing_reps,
            seed=args.seed,
        )
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2

    try:
        result = capture(args.images, args.annotations, cfg)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        trace_path = result.write(out_dir / "traces.jsonl")
        annotations = Path(args.annotations)
        manifest = {
            "command": "capture",
            "config": {**asdict(cfg), "resolutions": list(cfg.resolutions),
                       "images_dir": str(args.images)},
            "inputs": {"annotations": {"file": annotations.name,
                                       "sha256": _sha256(annotations)}},
            "outputs": {"traces.jsonl": _sha256(trace_path)},
            "skipped": [{"file": s.file_name, "reason": s.reason} for s in result.skipped],
        }
        (out_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        )
    except (CaptureError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"captured {len(result.traces)} traces to {trace_path}"
        f" ({len(result.skipped)} skipped)"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
