import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fixtures import write_pair_dataset, write_toy_dataset  # noqa: E402


@pytest.fixture
def toy_data(tmp_path):
    return write_toy_dataset(tmp_path / "data")


@pytest.fixture
def pair_data(tmp_path):
    return write_pair_dataset(tmp_path / "data")


# one line per end-to-end acceptance criterion, echoed after the test run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
