import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from qprop.detector import Prediction  # noqa: E402
from qprop.geometry import Box, Mask  # noqa: E402
from qprop.scenario import ObjectTruth  # noqa: E402


def random_box(rng, lo=0.05, hi=0.6):
    w, h = rng.uniform(lo, hi, size=2)
    cx = rng.uniform(w / 2, 1 - w / 2)
    cy = rng.uniform(h / 2, 1 - h / 2)
    return Box(float(cx), float(cy), float(w), float(h))


def random_mask(rng, w=16, h=16, p=None):
    p = rng.uniform(0.1, 0.9) if p is None else p
    return Mask((rng.random((h, w)) < p).astype(np.uint8))


def random_prediction(rng, w=16, h=16, dim=8):
    return Prediction(
        random_box(rng),
        float(rng.uniform(0.01, 0.99)),
        random_mask(rng, w, h),
        rng.standard_normal(dim),
        rng.standard_normal(dim),
    )


def random_truth(rng, w=16, h=16, visible=True):
    if not visible:
        return ObjectTruth("ref", Box.empty(), Mask.zeros(w, h), False, np.zeros(8))
    return ObjectTruth("ref", random_box(rng), random_mask(rng, w, h), True, np.zeros(8))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
