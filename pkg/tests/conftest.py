import pytest

_VERDICTS = pytest.StashKey[dict]()
_CRITERIA = range(1, 9)


def pytest_configure(config):
    config.stash[_VERDICTS] = {}


@pytest.fixture(scope="session")
def criterion(request):
    """``record(number, passed, detail)`` for the acceptance summary."""
    verdicts = request.config.stash[_VERDICTS]

    def record(number, passed, detail):
        verdicts[number] = (bool(passed), detail)
        return bool(passed)

    verdicts.setdefault("active", True)
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts = config.stash.get(_VERDICTS, {})
    if not verdicts.get("active"):
        return
    terminalreporter.section("acceptance criteria")
    for n in _CRITERIA:
        if n in verdicts:
            ok, detail = verdicts[n]
            terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n}: FAIL  (not run or did not complete)")
