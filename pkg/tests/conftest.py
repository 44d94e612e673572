import contextlib

import pytest

_ACCEPTANCE: list[str] = []


class _Check:
    def __init__(self):
        self.detail = ""


@pytest.fixture
def acceptance():
    """Context manager recording one PASS/FAIL line per acceptance check."""

    @contextlib.contextmanager
    def check(label):
        record = _Check()
        try:
            yield record
        except BaseException as exc:
            reason = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
            _ACCEPTANCE.append(f"FAIL  {label}: {reason}")
            print(_ACCEPTANCE[-1])
            raise
        _ACCEPTANCE.append(f"PASS  {label}: {record.detail}")
        print(_ACCEPTANCE[-1])

    return check


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
