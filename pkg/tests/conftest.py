import sys

import numpy as np
import pytest

from mosaicdet.dataset import LabeledImage
from mosaicdet.geometry import BBox


def random_pixel_box(rng, size=64, integer=False, min_side=1):
    if integer:
        x1, x2 = sorted(rng.choice(size + 1, 2, replace=False))
        y1, y2 = sorted(rng.choice(size + 1, 2, replace=False))
        return BBox(float(x1), float(y1), float(x2), float(y2))
    while True:
        x1, x2 = sorted(rng.uniform(0, size, 2))
        y1, y2 = sorted(rng.uniform(0, size, 2))
        if x2 - x1 >= min_side and y2 - y1 >= min_side:
            return BBox(x1, y1, x2, y2)


def random_normalized_box(rng, min_side=0.05, max_side=0.6):
    w, h = rng.uniform(min_side, max_side, 2)
    x1 = rng.uniform(0, 1 - w)
    y1 = rng.uniform(0, 1 - h)
    return BBox(x1, y1, x1 + w, y1 + h)


def make_fixture_dataset(n=20, seed=0, with_raster=False, categories=5):
    """Images of mixed sizes, each with 1-3 normalized boxes."""
    rng = np.random.default_rng(seed)
    images = []
    for i in range(n):
        w = int(rng.integers(40, 160))
        h = int(rng.integers(40, 160))
        boxes = tuple(
            (int(rng.integers(0, categories)), random_normalized_box(rng))
            for _ in range(int(rng.integers(1, 4)))
        )
        raster = rng.integers(0, 256, (h, w, 3), dtype=np.uint8) if with_raster else None
        images.append(LabeledImage(f"img{i:03d}", w, h, boxes, raster))
    return images


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fixture_dataset():
    return make_fixture_dataset()


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "LINES", None)
    if lines:
        terminalreporter.section("acceptance")
        for line in sorted(lines, key=lambda l: int(l.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
