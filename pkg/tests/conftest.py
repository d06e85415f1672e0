from __future__ import annotations

import pytest

from spo.grid import SupportRegion, build_domain


@pytest.fixture
def dom1():
    return build_domain(1, 4.0, 63)


@pytest.fixture
def K1():
    return SupportRegion.interval(-1.0, 1.0)


@pytest.fixture
def dom2():
    return build_domain(2, 3.0, 40)


@pytest.fixture
def K2():
    return SupportRegion.interval(-1.0, 1.0, d=2)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion (shown in the terminal summary)."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
