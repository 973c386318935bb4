import pytest

from pace.config import RunConfig
from pace.dataset import make_dataset


@pytest.fixture(scope="session")
def tiny_dataset():
    return make_dataset(seed=0, n_shapes=5)


@pytest.fixture
def tiny_config():
    return RunConfig(steps=2, epochs=2, hidden=16, n_shapes=5, batch=16)


_CRITERIA: list[str] = []


@pytest.fixture(scope="session")
def record_criterion():
    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        _CRITERIA.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
