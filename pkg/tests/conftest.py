import pytest

from spadaac import kernels
from spadaac.channel import ReceiverConfig


@pytest.fixture
def cfg():
    return ReceiverConfig()


@pytest.fixture
def unit_gate_cfg():
    """One-nanosecond gates, 100 gates per symbol."""
    return ReceiverConfig(gate_duration_ns=1.0, dead_time_ns=1.0)


@pytest.fixture(params=sorted(kernels.backends()))
def backend(request):
    return kernels.backends()[request.param]


_CRITERIA: list[tuple[int, str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line, then assert it."""

    def record(number: int, title: str, passed: bool, detail: str = "") -> None:
        _CRITERIA.append((number, title, bool(passed), detail))
        assert passed, f"criterion {number} ({title}): {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_CRITERIA):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:2d} {title}: {detail}")
