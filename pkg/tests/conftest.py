import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fedforest.data import Dataset  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def tiny_1d():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([0, 0, 1, 1])
    return X, y


@pytest.fixture
def four_class_ds():
    rng = np.random.default_rng(7)
    y = np.repeat(np.arange(4), 25)
    X = rng.normal(size=(100, 3)) + y[:, None]
    return Dataset(X, y)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
