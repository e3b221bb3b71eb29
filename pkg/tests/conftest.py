import numpy as np
import pytest

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical or scale checks")
    config.stash[_ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, text in sorted(lines, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {text}")


@pytest.fixture
def record(request):
    """Log one acceptance line; the summary prints them in order."""

    def _record(n, ok, text):
        request.config.stash[_ACCEPTANCE_KEY].append((n, bool(ok), text))
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}")
        return ok

    return _record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
