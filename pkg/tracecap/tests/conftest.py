"""Shared fixtures: tiny on-disk image datasets with COCO-style annotations."""

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image


def make_dataset(root: Path, count: int, size: tuple[int, int] = (64, 48),
                 seed: int = 9) -> tuple[Path, Path]:
    """Write `count` seeded noise PNGs plus an annotations file; return both paths."""
    rng = np.random.RandomState(seed)
    width, height = size
    images_dir = root / "imgs"
    images_dir.mkdir(parents=True, exist_ok=True)
    images = []
    annotations = []
    for i in range(1, count + 1):
        array = rng.randint(0, 256, size=(height, width, 3), dtype=np.uint8)
        # One solid rectangle per image so content differs image to image.
        x0 = int(rng.randint(0, width // 2))
        y0 = int(rng.randint(0, height // 2))
        array[y0 : y0 + height // 3, x0 : x0 + width // 3] = rng.randint(0, 256, size=3)
        Image.fromarray(array).save(images_dir / f"img_{i}.png")
        images.append({"id": i, "file_name": f"img_{i}.png", "width": width, "height": height})
        annotations.append(
            {
                "id": i,
                "image_id": i,
                "bbox": [x0, y0, width // 3, height // 3],
                "category_id": int(rng.randint(0, 3)),
                "iscrowd": 0,
            }
        )
    payload = {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": c, "name": f"category_{c}"} for c in range(3)],
    }
    coco = root / "coco.json"
    coco.write_text(json.dumps(payload))
    return images_dir, coco


@pytest.fixture
def small_dataset(tmp_path):
    return make_dataset(tmp_path, 4)
