from __future__ import annotations

# (criterion, passed, seconds) rows recorded by test_acceptance.py
ACCEPTANCE_RESULTS: list[tuple[str, bool, float]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, seconds in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  ({seconds:.2f}s)")
