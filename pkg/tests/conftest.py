import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bvqa.media_io import FramePlane


# one verdict line per acceptance criterion, echoed after the test summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def noise_frame(rng):
    return FramePlane(np.clip(rng.normal(128, 30, (64, 64)), 0, 255))


@pytest.fixture
def gray_triple():
    y = FramePlane(np.full((64, 64), 128.0))
    u = FramePlane(np.full((32, 32), 128.0))
    v = FramePlane(np.full((32, 32), 128.0))
    return y, u, v


def noise_triple(rng, size=64):
    y = FramePlane(np.clip(rng.normal(128, 30, (size, size)), 0, 255))
    u = FramePlane(np.clip(rng.normal(128, 20, (size // 2, size // 2)), 0, 255))
    v = FramePlane(np.clip(rng.normal(128, 20, (size // 2, size // 2)), 0, 255))
    return y, u, v
