"""Black-box detector interface and the built-in deterministic reference net."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import torch
from torch import nn

from .config import CaptureConfig


class CaptureError(RuntimeError):
    """Raised when a detector cannot be loaded or run as configured."""


@dataclass(frozen=True)
class RawDetection:
    """One detection in the pixel coordinates of the tensor it was run on."""

    x: float
    y: float
    w: float
    h: float
    score: float
    category_id: int


class Detector(Protocol):
    """What the capture loop needs from a detector.

    Images arrive as float tensors shaped (1, 3, H, W) in [0, 1] on the
    detector's device; detections come back in that tensor's pixel frame.
    """

    num_classes: int

    def infer_full(self, image: torch.Tensor) -> list[RawDetection]: ...

    def infer_early(self, image: torch.Tensor, tap_layer: int) -> list[RawDetection]: ...

    def validate_tap(self, tap_layer: int) -> None: ...


class _DecodeHead(nn.Module):
    """1x1 conv pair decoding a feature map into top-k box candidates."""

    def __init__(self, channels: int, num_classes: int, max_dets: int = 8,
                 score_floor: float = 0.05) -> None:
        super().__init__()
        self.cls = nn.Conv2d(channels, num_classes, kernel_size=1)
        self.box = nn.Conv2d(channels, 4, kernel_size=1)
        self.max_dets = max_dets
        self.score_floor = score_floor

    def decode(self, feats: torch.Tensor, width: int, height: int) -> list[RawDetection]:
        cls_map = torch.sigmoid(self.cls(feats))[0]
        box_map = torch.sigmoid(self.box(feats))[0]
        scores, labels = cls_map.max(dim=0)
        grid_h, grid_w = scores.shape
        flat = scores.flatten()
        top = flat.topk(min(self.max_dets, flat.numel()))
        out: list[RawDetection] = []
        for score, idx in zip(top.values.tolist(), top.indices.tolist()):
            if score < self.score_floor:
                break  # topk is sorted descending
            cy, cx = divmod(idx, grid_w)
            ox, oy, fw, fh = box_map[:, cy, cx].tolist()
            # Box size spans 5%..45% of the image so candidates stay visible.
            w_px = (0.05 + 0.4 * fw) * width
            h_px = (0.05 + 0.4 * fh) * height
            center_x = (cx + ox) / grid_w * width
            center_y = (cy + oy) / grid_h * height
            left = min(max(center_x - w_px / 2, 0.0), float(width))
            top_edge = min(max(center_y - h_px / 2, 0.0), float(height))
            right = min(max(center_x + w_px / 2, 0.0), float(width))
            bottom = min(max(center_y + h_px / 2, 0.0), float(height))
            if right - left <= 0 or bottom - top_edge <= 0:
                continue
            out.append(
                RawDetection(
                    x=left,
                    y=top_edge,
                    w=right - left,
                    h=bottom - top_edge,
                    score=score,
                    category_id=int(labels[cy, cx]),
                )
            )
        return out


class ToyDetector(nn.Module):
    """Small seeded CNN detector that needs no weights file.

    Random weights give image-dependent, fully deterministic detections on
    CPU, which is all the trace schema smoke path needs. The backbone keeps
    a constant channel width so any layer index is a valid tap point.
    """

    def __init__(self, num_classes: int = 3, channels: int = 16, depth: int = 24,
                 seed: int = 123) -> None:
        super().__init__()
        if depth < 5:
            raise ValueError(f"depth must be at least 5, got {depth!r}")
        generator_state = torch.random.get_rng_state()
        torch.manual_seed(seed)
        try:
            layers: list[nn.Module] = []
            in_ch = 3
            for i in range(depth):
                stride = 2 if i < 4 else 1
                layers.append(
                    nn.Sequential(
                        nn.Conv2d(in_ch, channels, kernel_size=3, stride=stride, padding=1),
                        nn.SiLU(),
                    )
                )
                in_ch = channels
            self.backbone = nn.ModuleList(layers)
            self.head = _DecodeHead(channels, num_classes)
            self.early_head = _DecodeHead(channels, num_classes)
        finally:
            torch.random.set_rng_state(generator_state)
        self.num_classes = num_classes
        self.eval()

    def validate_tap(self, tap_layer: int) -> None:
        if not 0 <= tap_layer < len(self.backbone):
            raise CaptureError(
                f"tap_layer {tap_layer} invalid for this model "
                f"(backbone has {len(self.backbone)} layers)"
            )

    def _features(self, image: torch.Tensor, upto: int | None = None) -> torch.Tensor:
        x = image
        last = len(self.backbone) if upto is None else upto + 1
        for layer in self.backbone[:last]:
            x = layer(x)
        return x

    @torch.no_grad()
    def infer_full(self, image: torch.Tensor) -> list[RawDetection]:
        height, width = image.shape[-2:]
        return self.head.decode(self._features(image), width, height)

    @torch.no_grad()
    def infer_early(self, image: torch.Tensor, tap_layer: int) -> list[RawDetection]:
        self.validate_tap(tap_layer)
        height, width = image.shape[-2:]
        return self.early_head.decode(self._features(image, upto=tap_layer), width, height)

    def train_early_head(self, images: Sequence[torch.Tensor], tap_layer: int,
                         steps: int = 20, lr: float = 1e-2) -> list[float]:
        """Optional hook: distill the full head's class map into the early head.

        Not part of the capture path; random-init early heads are captured
        as-is by default.
        """
        self.validate_tap(tap_layer)
        if steps < 1:
            raise ValueError(f"steps must be at least 1, got {steps!r}")
        optimizer = torch.optim.SGD(self.early_head.parameters(), lr=lr)
        losses: list[float] = []
        for _ in range(steps):
            total = torch.zeros(())
            for image in images:
                with torch.no_grad():
                    target = torch.sigmoid(self.head.cls(self._features(image)))
                tapped = self._features(image, upto=tap_layer)
                predicted = torch.sigmoid(self.early_head.cls(tapped))
                if predicted.shape[-2:] != target.shape[-2:]:
                    target = nn.functional.interpolate(
                        target, size=predicted.shape[-2:], mode="bilinear",
                        align_corners=False,
                    )
                total = total + nn.functional.mse_loss(predicted, target)
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            losses.append(float(total.detach()))
        return losses


class UltralyticsDetector:
    """Adapter for YOLO-family checkpoints via the optional ultralytics package.

    The full pass delegates to the checkpoint; the early pass taps the
    requested backbone layer with a seeded lightweight head, untrained by
    default.
    """

    def __init__(self, checkpoint: str, device: str, half: bool, seed: int,
                 num_classes: int | None = None) -> None:
        try:
            from ultralytics import YOLO
        except ImportError as exc:
            raise CaptureError(
                f"checkpoint {checkpoint!r} needs the optional ultralytics package;"
                " install tracecap[yolo]"
            ) from exc
        try:
            self._model = YOLO(checkpoint)
        except Exception as exc:
            raise CaptureError(f"cannot load checkpoint {checkpoint!r}: {exc}") from exc
        self._device = device
        self._half = half
        self._seed = seed
        self.num_classes = num_classes or len(self._model.names)
        self._early_heads: dict[tuple[int, int], _DecodeHead] = {}

    def validate_tap(self, tap_layer: int) -> None:
        layers = self._model.model.model
        if not 0 <= tap_layer < len(layers):
            raise CaptureError(
                f"tap_layer {tap_layer} invalid for this model "
                f"(backbone has {len(layers)} layers)"
            )

    def infer_full(self, image: torch.Tensor) -> list[RawDetection]:
        height, width = image.shape[-2:]
        result = self._model.predict(
            image, device=self._device, half=self._half, verbose=False
        )[0]
        out = []
        for box in result.boxes:
            x1, y1, x2, y2 = box.xyxy[0].tolist()
            out.append(
                RawDetection(
                    x=min(max(x1, 0.0), float(width)),
                    y=min(max(y1, 0.0), float(height)),
                    w=max(min(x2, float(width)) - max(x1, 0.0), 0.0),
                    h=max(min(y2, float(height)) - max(y1, 0.0), 0.0),
                    score=float(box.conf[0]),
                    category_id=int(box.cls[0]),
                )
            )
        return [d for d in out if d.w > 0 and d.h > 0]

    def infer_early(self, image: torch.Tensor, tap_layer: int) -> list[RawDetection]:
        self.validate_tap(tap_layer)
        height, width = image.shape[-2:]
        feats: list[torch.Tensor] = []
        layer = self._model.model.model[tap_layer]
        handle = layer.register_forward_hook(lambda m, a, out: feats.append(out))
        try:
            with torch.no_grad():
                self._model.predict(image, device=self._device, half=self._half, verbose=False)
        finally:
            handle.remove()
        if not feats:
            raise CaptureError(f"tap_layer {tap_layer} produced no feature map")
        tapped = feats[0]
        key = (tap_layer, tapped.shape[1])
        if key not in self._early_heads:
            state = torch.random.get_rng_state()
            torch.manual_seed(self._seed)
            try:
                head = _DecodeHead(tapped.shape[1], self.num_classes)
            finally:
                torch.random.set_rng_state(state)
            self._early_heads[key] = head.to(tapped.device, tapped.dtype)
        with torch.no_grad():
            return self._early_heads[key].decode(tapped.float(), width, height)


def load_detector(cfg: CaptureConfig) -> ToyDetector | UltralyticsDetector:
    """Build the detector named by the config; load failures abort the run."""
    device = torch.device(cfg.device)
    if cfg.half and device.type != "cuda":
        raise CaptureError("half precision needs a CUDA device")
    if cfg.checkpoint == "toy":
        detector = ToyDetector(seed=cfg.seed).to(device)
        if cfg.half:
            detector.half()
        detector.validate_tap(cfg.tap_layer)
        return detector
    detector = UltralyticsDetector(cfg.checkpoint, cfg.device, cfg.half, cfg.seed)
    detector.validate_tap(cfg.tap_layer)
    return detector
