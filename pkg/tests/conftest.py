import numpy as np
import pytest

from spinbie.geometry import make_circle, make_ellipse, make_icosphere


@pytest.fixture(scope="session")
def circle64():
    return make_circle(1.0, 64)


@pytest.fixture(scope="session")
def ellipse128():
    return make_ellipse(2.0, 1.0, 128)


@pytest.fixture(scope="session")
def sphere1():
    return make_icosphere(1.0, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One summary line per acceptance criterion, shown at the end of the run.
_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    def record(number: int, title: str, passed: bool, detail: str, seconds: float) -> None:
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] criterion {number:>2}: {title}: {detail} ({seconds:.1f}s)"
        print(line)
        _ACCEPTANCE_LINES.append((number, line))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
