import numpy as np
import pytest

from collabqoe.data import GroupDataset, split_train_test, synthesize_reference_groups


@pytest.fixture(scope="session")
def reference_groups():
    return synthesize_reference_groups(seed=0)


@pytest.fixture
def small_split_group():
    rng = np.random.default_rng(3)
    x = rng.uniform(size=(60, 3))
    y = (x[:, 0] + 0.2 * rng.normal(size=60) > 0.5).astype(int)
    return split_train_test(GroupDataset(0, x, y), seed=1)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
