import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record the outcome line for one acceptance criterion."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        _CRITERIA[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])
