from __future__ import annotations

import numpy as np
import pytest

from dnse.spectral import TorusGrid

# filled by tests/test_acceptance.py, printed once at the end of the session
ACCEPTANCE_LINES: dict[str, str] = {}


@pytest.fixture
def grid8() -> TorusGrid:
    return TorusGrid(8)


@pytest.fixture
def grid16() -> TorusGrid:
    return TorusGrid(16)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240917)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
