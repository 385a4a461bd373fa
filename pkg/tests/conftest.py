import json
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")

DATA = Path(__file__).parent / "data"
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def frozen():
    return json.loads((DATA / "frozen_oracles.json").read_text())


@pytest.fixture
def spike_window():
    from tsagent.series import Window

    rng = np.random.default_rng(5)
    x = rng.normal(0, 1, 100)
    x[50] += 10
    x = (x - x.min()) / (x.max() - x.min())
    return Window.of(x, start=0, parent="spike")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
