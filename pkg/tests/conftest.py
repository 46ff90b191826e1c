import numpy as np
import pytest

from desk import Desk


@pytest.fixture(scope="session")
def desk():
    return Desk()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def record(request):
    """Append one PASS/FAIL line to the acceptance summary and print it."""
    lines = request.config.stash.setdefault(_LINES, [])

    def emit(name, passed, detail):
        line = "%s  %-28s %s" % ("PASS" if passed else "FAIL", name, detail)
        lines.append(line)
        print(line)
        return passed

    return emit


_LINES = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
