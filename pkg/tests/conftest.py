import contextlib
import time

import pytest

_CRITERIA: dict[int, tuple[str, str, str]] = {}


@pytest.fixture
def criterion():
    """Context manager factory that records one pass/fail line per acceptance criterion."""

    @contextlib.contextmanager
    def record(number: int, title: str):
        info: list[str] = []
        t0 = time.perf_counter()
        try:
            yield info
        except BaseException:
            _CRITERIA[number] = ("FAIL", title, "; ".join(info))
            raise
        info.append(f"{time.perf_counter() - t0:.1f}s")
        _CRITERIA[number] = ("PASS", title, "; ".join(info))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title, info = _CRITERIA[number]
        line = f"criterion {number:2d} {status}: {title}"
        terminalreporter.write_line(f"{line} ({info})" if info else line)
