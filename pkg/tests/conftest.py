"""Shared builders and session-scoped fixtures."""

import pytest

from gatebench import BBox, Detection, GroundTruthBox, SyntheticConfig, generate_synthetic


def det(x, y, w, h, score, category_id=0):
    return Detection(box=BBox(x, y, w, h), score=score, category_id=category_id)


def gt(x, y, w, h, category_id=0, iscrowd=False):
    return GroundTruthBox(box=BBox(x, y, w, h), category_id=category_id, iscrowd=iscrowd)


@pytest.fixture(scope="session")
def default_synth():
    """Records and traces of one default synthetic run; treat as read-only."""
    return generate_synthetic(SyntheticConfig())
