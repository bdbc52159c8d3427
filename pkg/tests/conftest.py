import sys
from pathlib import Path

import numpy as np
import pytest

from budgetsvm import kernels
from budgetsvm.model import Sample

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(params=kernels.available())
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def samples(rows, labels, start=0):
    return [Sample(np.asarray(r, dtype=float), int(lab), start + i) for i, (r, lab) in enumerate(zip(rows, labels))]


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
