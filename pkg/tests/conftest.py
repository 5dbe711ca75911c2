import pytest

from medianfit import available_backends, use_backend


@pytest.fixture(params=available_backends())
def backend(request):
    """Run a test once per importable kernel backend."""
    previous = use_backend(request.param)
    yield request.param
    use_backend(previous)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
