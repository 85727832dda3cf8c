import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from oculolipid.morphometry import SegmentationMask  # noqa: E402


def bar(h, w, shape=None, top=None, left=None):
    """Filled h x w rectangle, centred in ``shape`` unless placed explicitly."""
    shape = shape or (h + 20, w + 20)
    img = np.zeros(shape, dtype=bool)
    top = (shape[0] - h) // 2 if top is None else top
    left = (shape[1] - w) // 2 if left is None else left
    img[top:top + h, left:left + w] = True
    return img


def mask_of(artery, vein=None, eye="L", pid="X"):
    vein = np.zeros_like(artery) if vein is None else vein
    return SegmentationMask(artery, vein, eye=eye, participant_id=pid)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if getattr(rep, "when", None) == "call":
                lines += [ln for ln in rep.capstdout.splitlines() if ln.startswith("criterion ")]
    if lines:
        terminalreporter.section("acceptance criteria")
        for ln in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(ln)
