"""Shared pytest hooks: collects acceptance outcomes and prints them at the end of the run."""

import pytest

_ACCEPTANCE: dict = {}
_HEADER: list = []


@pytest.fixture
def acceptance():
    """Recorder ``record(number, title, passed, detail)`` for acceptance criteria."""

    def record(number, title, passed, detail):
        _ACCEPTANCE[number] = (title, bool(passed), detail)

    return record


@pytest.fixture
def acceptance_header():
    """Appends a note to the header of the acceptance summary."""
    return _HEADER.append


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("ACCEPTANCE RESULTS")
    for note in _HEADER:
        tr.write_line(f"note: {note}")
    for number in sorted(_ACCEPTANCE):
        title, passed, detail = _ACCEPTANCE[number]
        tr.write_line(f"{'PASS' if passed else 'FAIL'}  {number:>2}  {title}: {detail}")
    passed = sum(v[1] for v in _ACCEPTANCE.values())
    tr.write_line(f"{passed}/{len(_ACCEPTANCE)} criteria passed")
