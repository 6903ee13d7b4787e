"""Shared pytest plumbing: the release-criteria report printed after the run."""

_CRITERIA: list[str] = []


def record_criterion(name: str, ok: bool, detail: str) -> bool:
    """Register one release criterion outcome; returns `ok` for asserting."""
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    _CRITERIA.append(line)
    print(line, flush=True)
    return ok


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _CRITERIA:
        terminalreporter.section("release criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
