import pytest

_RESULTS: dict = {}


@pytest.fixture
def record():
    """Record a sub-check of an acceptance criterion: ``record(n, ok, detail)``."""
    def _record(criterion: int, ok: bool, detail: str) -> bool:
        _RESULTS.setdefault(criterion, []).append((bool(ok), detail))
        return bool(ok)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        checks = _RESULTS[n]
        ok = all(c[0] for c in checks)
        details = "; ".join(d for _, d in checks)
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {details}")
